//! Expanding grids into parameter points and evaluating them.

use std::path::{Path, PathBuf};

use decohere::fidelity::{fc_1d_exact, fc_2d, Fc2dMode};
use decohere::mpdo::{cluster_mpdo, spurious_ten_renyi, symmetry_algebra_check};
use decohere::negativity::{
    spurious_ten, spurious_ten_stabilizer, stabilizer_endpoint_negativity, toric_boundary_negativity_exact,
    toric_boundary_negativity_mc, trace_norm_exact_enum, trace_norm_mc, BoundaryRates, McConfig, NoiseKind,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, Fc2dRoute, McSettings, Method};
use crate::record::{sort_canonical, to_json, write_csv, Param, ResultRecord, Table};
use crate::svg::{line_plot, PlotSpec};

pub const DEFAULT_ALPHA_MAX: usize = 3;

fn noise_tag(k: NoiseKind) -> &'static str {
    match k {
        NoiseKind::X => "X",
        NoiseKind::Z => "Z",
    }
}

/// One parameter point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Point {
    Fc { n: usize, p: f64, sep: usize },
    Fc2d { w: usize, h: usize, p: f64, mode: Fc2dMode },
    Negativity { two_n: usize, p: f64, noise: NoiseKind, method: Method },
    SpuriousTen { n: usize, p: f64, noise: NoiseKind, method: Method },
    ToricBoundary { two_n: usize, p_x: f64, p_z: f64, method: Method },
    Mpdo { p: f64, noise: NoiseKind, alpha_max: usize },
}

/// A failed parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointError {
    pub point: Point,
    pub message: String,
}

impl std::fmt::Display for PointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at {}", self.message, serde_json::to_string(&self.point).unwrap_or_default())
    }
}

impl std::error::Error for PointError {}

/// Cartesian product of the grid axes. Assumes the config has been validated.
pub fn expand(cfg: &ExperimentConfig) -> Vec<Point> {
    let g = &cfg.grid;
    let list = |v: &Option<Vec<usize>>| v.clone().unwrap_or_default();
    let flist = |v: &Option<Vec<f64>>| v.clone().unwrap_or_default();
    let noise = g.noise.clone().unwrap_or_default();
    let method = g.method.unwrap_or(Method::Mc);
    let mut pts = Vec::new();
    match cfg.kind {
        Experiment::Fc => {
            for n in list(&g.n) {
                for &p in &flist(&g.p) {
                    for sep in list(&g.sep) {
                        pts.push(Point::Fc { n, p, sep });
                    }
                }
            }
        }
        Experiment::Fc2d => {
            let width = g.width.unwrap_or(0);
            let modes: Vec<Fc2dMode> = match g.route.unwrap_or(Fc2dRoute::Factorized) {
                Fc2dRoute::Factorized => vec![Fc2dMode::Factorized { width }],
                Fc2dRoute::Brute => list(&g.height)
                    .into_iter()
                    .map(|height| Fc2dMode::Brute { width, height, include_boundary: g.include_boundary.unwrap_or(true) })
                    .collect(),
            };
            for w in list(&g.w) {
                for h in list(&g.h) {
                    for &p in &flist(&g.p) {
                        for &mode in &modes {
                            pts.push(Point::Fc2d { w, h, p, mode });
                        }
                    }
                }
            }
        }
        Experiment::Negativity => {
            for &noise in &noise {
                for two_n in list(&g.two_n) {
                    for &p in &flist(&g.p) {
                        pts.push(Point::Negativity { two_n, p, noise, method });
                    }
                }
            }
        }
        Experiment::SpuriousTen => {
            for &noise in &noise {
                for n in list(&g.n) {
                    for &p in &flist(&g.p) {
                        pts.push(Point::SpuriousTen { n, p, noise, method });
                    }
                }
            }
        }
        Experiment::ToricBoundary => {
            for two_n in list(&g.two_n) {
                for &p_x in &flist(&g.p_x) {
                    for &p_z in &flist(&g.p_z) {
                        pts.push(Point::ToricBoundary { two_n, p_x, p_z, method });
                    }
                }
            }
        }
        Experiment::Mpdo => {
            let alpha_max = g.alpha_max.unwrap_or(DEFAULT_ALPHA_MAX);
            for &noise in &noise {
                for &p in &flist(&g.p) {
                    pts.push(Point::Mpdo { p, noise, alpha_max });
                }
            }
        }
    }
    pts
}

/// Records plus, for MPDO points, the full structured report.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub records: Vec<ResultRecord>,
    pub report: Option<serde_json::Value>,
}

fn mc_config(mc: &McSettings) -> McConfig {
    McConfig::new(mc.samples, mc.seed).with_batches(mc.batches)
}

fn entropic(experiment: Experiment, params: Vec<(&'static str, Param)>, mc: &McSettings, value: f64, std_err: f64, samples: Option<u64>) -> ResultRecord {
    let mut r = ResultRecord::new(experiment, params, mc.seed);
    r.value = Some(value);
    r.std_err = Some(std_err);
    r.n_samples = samples;
    r
}

pub fn evaluate(point: &Point, mc: &McSettings) -> Result<Evaluated, PointError> {
    let fail = |e: decohere::Error| PointError { point: *point, message: e.to_string() };
    let single = |r: ResultRecord| Evaluated { records: vec![r], report: None };
    let cfg = mc_config(mc);
    match *point {
        Point::Fc { n, p, sep } => {
            let f = fc_1d_exact(n, p, sep).map_err(fail)?;
            let mut r = ResultRecord::new(Experiment::Fc, vec![("N", n.into()), ("p", p.into()), ("sep", sep.into())], mc.seed);
            r.value = Some(f.value);
            r.log_value = Some(f.log_value);
            Ok(single(r))
        }
        Point::Fc2d { w, h, p, mode } => {
            let f = fc_2d(w, h, p, mode).map_err(fail)?;
            let (route, width, height, boundary) = match mode {
                Fc2dMode::Factorized { width } => ("factorized", width, Param::Text(String::new()), Param::Text(String::new())),
                Fc2dMode::Brute { width, height, include_boundary } => ("brute", width, height.into(), include_boundary.into()),
            };
            let params = vec![
                ("w", w.into()),
                ("h", h.into()),
                ("route", route.into()),
                ("width", width.into()),
                ("height", height),
                ("include_boundary", boundary),
                ("p", p.into()),
            ];
            let mut r = ResultRecord::new(Experiment::Fc2d, params, mc.seed);
            r.value = Some(f.value);
            r.log_value = Some(f.log_value);
            Ok(single(r))
        }
        Point::Negativity { two_n, p, noise, method } => {
            let params = vec![("noise", noise_tag(noise).into()), ("two_n", two_n.into()), ("method", method.tag().into()), ("p", p.into())];
            let (v, e, n) = match method {
                Method::Exact => (trace_norm_exact_enum(two_n, p, noise).map_err(fail)?, 0.0, None),
                Method::Stabilizer => (stabilizer_endpoint_negativity(two_n, p, noise).map_err(fail)?, 0.0, None),
                Method::Mc => {
                    let m = trace_norm_mc(two_n, p, noise, &cfg).map_err(fail)?;
                    (m.log_value, m.std_err, Some(m.n_samples))
                }
            };
            Ok(single(entropic(Experiment::Negativity, params, mc, v, e, n)))
        }
        Point::SpuriousTen { n, p, noise, method } => {
            let params = vec![("noise", noise_tag(noise).into()), ("N", n.into()), ("method", method.tag().into()), ("p", p.into())];
            let (v, e, s) = match method {
                Method::Exact => {
                    let big = trace_norm_exact_enum(4 * n, p, noise).map_err(fail)?;
                    let small = trace_norm_exact_enum(2 * n, p, noise).map_err(fail)?;
                    (big - 2.0 * small, 0.0, None)
                }
                Method::Stabilizer => (spurious_ten_stabilizer(n, p, noise).map_err(fail)?, 0.0, None),
                Method::Mc => {
                    let m = spurious_ten(n, p, noise, &cfg).map_err(fail)?;
                    (m.log_value, m.std_err, Some(m.n_samples))
                }
            };
            Ok(single(entropic(Experiment::SpuriousTen, params, mc, v, e, s)))
        }
        Point::ToricBoundary { two_n, p_x, p_z, method } => {
            let params = vec![("two_n", two_n.into()), ("method", method.tag().into()), ("p_x", p_x.into()), ("p_z", p_z.into())];
            let rates = BoundaryRates::new(p_x, p_z).map_err(fail)?;
            let (v, e, s) = match method {
                Method::Exact => (toric_boundary_negativity_exact(two_n, rates).map_err(fail)?, 0.0, None),
                Method::Mc => {
                    let m = toric_boundary_negativity_mc(two_n, rates, &cfg).map_err(fail)?;
                    (m.log_value, m.std_err, Some(m.n_samples))
                }
                Method::Stabilizer => {
                    return Err(PointError { point: *point, message: "toric boundary has no stabilizer route".into() })
                }
            };
            Ok(single(entropic(Experiment::ToricBoundary, params, mc, v, e, s)))
        }
        Point::Mpdo { p, noise, alpha_max } => evaluate_mpdo(point, p, noise, alpha_max, mc),
    }
}

fn evaluate_mpdo(point: &Point, p: f64, noise: NoiseKind, alpha_max: usize, mc: &McSettings) -> Result<Evaluated, PointError> {
    let fail = |e: decohere::Error| PointError { point: *point, message: e.to_string() };
    if alpha_max < 2 {
        return Err(PointError { point: *point, message: "alpha_max must be at least 2".into() });
    }
    let m = cluster_mpdo(p, noise).map_err(fail)?;
    let sym = symmetry_algebra_check(&m).map_err(fail)?;
    let mut records = Vec::new();
    let mut renyi = Vec::new();
    for alpha in 2..=alpha_max {
        let s = spurious_ten_renyi(&m, alpha).map_err(fail)?;
        let params = vec![("noise", noise_tag(noise).into()), ("alpha", alpha.into()), ("p", p.into())];
        let mut r = ResultRecord::new(Experiment::Mpdo, params, mc.seed);
        r.value = s.value;
        r.extra = vec![
            ("degeneracy", s.degeneracy.into()),
            ("gap", s.gap.into()),
            ("c1", s.report.c1.into()),
            ("c1_prime", s.report.c1_prime.into()),
            ("c2", s.report.c2.into()),
            ("strongly_injective", s.report.strongly_injective.into()),
            ("symmetric", sym.symmetric.into()),
            ("omega_re", sym.omega.map_or(Param::Text(String::new()), |o| o[0].into())),
            ("omega_im", sym.omega.map_or(Param::Text(String::new()), |o| o[1].into())),
            ("q", sym.q.map_or(Param::Text(String::new()), Param::from)),
        ];
        records.push(r);
        renyi.push(s);
    }
    let report = serde_json::json!({
        "p": p,
        "noise": noise_tag(noise),
        "alpha_max": alpha_max,
        "renyi_spurious_ten": renyi,
        "symmetry": sym,
        "seed": mc.seed,
        "version": crate::record::VERSION,
    });
    Ok(Evaluated { records, report: Some(report) })
}

/// Evaluate every point on the ambient pool, returning records in canonical order.
/// The first failure in grid order wins.
pub fn run_points(points: &[Point], mc: &McSettings) -> Result<(Vec<ResultRecord>, Vec<serde_json::Value>), PointError> {
    let results: Vec<Result<Evaluated, PointError>> = points.par_iter().map(|pt| evaluate(pt, mc)).collect();
    let mut records = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        let e = r?;
        records.extend(e.records);
        reports.extend(e.report);
    }
    sort_canonical(&mut records);
    Ok((records, reports))
}

/// Default plot for an experiment.
pub fn plot_spec(kind: Experiment) -> PlotSpec {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let (title, x, y, err, series): (&str, &str, &str, Option<&str>, Vec<String>) = match kind {
        Experiment::Fc => ("fidelity correlator", "p", "value", None, s(&["N", "sep"])),
        Experiment::Fc2d => ("2D fidelity correlator", "p", "value", None, s(&["w", "h", "route", "height"])),
        Experiment::Negativity => ("negativity / log 2", "p", "value_log2", Some("std_err_log2"), s(&["noise", "two_n", "method"])),
        Experiment::SpuriousTen => ("spurious TEN / log 2", "p", "value_log2", Some("std_err_log2"), s(&["noise", "N", "method"])),
        Experiment::ToricBoundary => ("boundary negativity / log 2", "p_z", "value_log2", Some("std_err_log2"), s(&["two_n", "p_x", "method"])),
        Experiment::Mpdo => ("Renyi spurious TEN / log 2", "p", "value_log2", None, s(&["noise", "alpha"])),
    };
    PlotSpec { title: title.into(), x: x.into(), y: y.into(), err: err.map(String::from), series, filter: vec![] }
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub fn csv_bytes(records: &[ResultRecord]) -> Result<Vec<u8>, OutputError> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(buf)
}

/// Render the SVG from CSV text, never from the in-memory records.
pub fn svg_from_csv(csv_text: &[u8], spec: &PlotSpec) -> Result<String, OutputError> {
    let table = Table::parse(std::str::from_utf8(csv_text).unwrap_or_default())?;
    Ok(line_plot(&table, spec))
}

pub fn json_bytes(kind: Experiment, records: &[ResultRecord], reports: &[serde_json::Value]) -> Vec<u8> {
    let v = if kind == Experiment::Mpdo { serde_json::Value::Array(reports.to_vec()) } else { to_json(records) };
    let mut s = serde_json::to_string_pretty(&v).expect("json");
    s.push('\n');
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Grid;
    use crate::config::OutputSpec;

    fn fc_cfg() -> ExperimentConfig {
        ExperimentConfig {
            kind: Experiment::Fc,
            grid: Grid { n: Some(vec![8, 4]), p: Some(vec![0.5, 0.1]), sep: Some(vec![4]), ..Default::default() },
            mc: McSettings::default(),
            output: OutputSpec { csv: "x.csv".into(), json: None, svg: None },
        }
    }

    #[test]
    fn grid_expands_to_product() {
        assert_eq!(expand(&fc_cfg()).len(), 4);
    }

    #[test]
    fn records_are_sorted_and_plateau() {
        let (recs, _) = run_points(&expand(&fc_cfg()), &McSettings::default()).unwrap();
        assert_eq!(recs[0].param("N"), Some(&Param::Int(4)));
        assert_eq!(recs[0].param("p"), Some(&Param::Float(0.1)));
        assert_eq!(recs[1].value, Some(1.0));
    }

    #[test]
    fn failure_names_the_point() {
        let mut c = fc_cfg();
        c.grid.sep = Some(vec![3]);
        let e = run_points(&expand(&c), &McSettings::default()).unwrap_err();
        assert_eq!(e.point, Point::Fc { n: 8, p: 0.5, sep: 3 });
    }
}

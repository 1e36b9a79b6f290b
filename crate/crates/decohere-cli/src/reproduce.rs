//! Recipes for the two figures.

use std::path::{Path, PathBuf};

use decohere::negativity::NoiseKind;

use crate::config::{ConfigError, Experiment, McSettings, Method};
use crate::record::ResultRecord;
use crate::runner::{csv_bytes, plot_spec, run_points, svg_from_csv, write_file, OutputError, Point, PointError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

pub const DESK_MAX_N: usize = 32;
pub const DESK_MAX_SAMPLES: u64 = 10_000_000;
pub const DESK_SAMPLES: u64 = 100_000;
pub const FULL_SAMPLES: u64 = 800_000_000;

pub fn fig2_points() -> Vec<Point> {
    let mut pts = Vec::new();
    for k in 1..=10 {
        let n = 1usize << k;
        for j in 0..=50 {
            pts.push(Point::Fc { n, p: j as f64 / 100.0, sep: n });
        }
    }
    pts
}

pub fn fig3_sizes(scale: Scale) -> Vec<usize> {
    match scale {
        Scale::Desk => vec![4, 8, 16, 32],
        Scale::Full => vec![4, 8, 16, 32, 64, 128, 256, 512, 1024],
    }
}

pub fn fig3_points(sizes: &[usize]) -> Vec<Point> {
    let mut pts = Vec::new();
    for noise in [NoiseKind::X, NoiseKind::Z] {
        for &n in sizes {
            for j in 0..=10 {
                pts.push(Point::SpuriousTen { n, p: j as f64 / 20.0, noise, method: Method::Mc });
            }
        }
    }
    pts
}

#[derive(Debug)]
pub enum ReproduceError {
    Config(ConfigError),
    Numeric(PointError),
    Output(OutputError),
}

impl From<PointError> for ReproduceError {
    fn from(e: PointError) -> Self {
        ReproduceError::Numeric(e)
    }
}

impl From<OutputError> for ReproduceError {
    fn from(e: OutputError) -> Self {
        ReproduceError::Output(e)
    }
}

#[derive(Debug, Clone)]
pub struct Request {
    pub figure: Figure,
    pub scale: Scale,
    pub yes_long: bool,
    pub samples: Option<u64>,
    pub seed: u64,
    pub batches: usize,
    pub sizes: Option<Vec<usize>>,
    pub out: PathBuf,
}

/// Check the request against the scale caps and resolve defaults.
pub fn plan(req: &Request) -> Result<(Vec<Point>, McSettings), ConfigError> {
    if req.scale == Scale::Full && !req.yes_long {
        return Err(ConfigError::key("--yes-long", "full scale needs an explicit --yes-long (up to 8e8 samples per point)"));
    }
    let samples = req.samples.unwrap_or(if req.scale == Scale::Desk { DESK_SAMPLES } else { FULL_SAMPLES });
    let mc = McSettings { samples, seed: req.seed, batches: req.batches };
    match req.figure {
        Figure::Fig2 => Ok((fig2_points(), mc)),
        Figure::Fig3 => {
            let sizes = req.sizes.clone().unwrap_or_else(|| fig3_sizes(req.scale));
            if req.scale == Scale::Desk {
                if let Some(&n) = sizes.iter().find(|&&n| n > DESK_MAX_N) {
                    return Err(ConfigError::key("--sizes", format!("N = {n} exceeds the desk cap {DESK_MAX_N}")));
                }
                if samples > DESK_MAX_SAMPLES {
                    return Err(ConfigError::key("--samples", format!("{samples} samples exceed the desk cap {DESK_MAX_SAMPLES}")));
                }
            }
            Ok((fig3_points(&sizes), mc))
        }
    }
}

/// Files written by [`reproduce`].
#[derive(Debug, Clone)]
pub struct Outputs {
    pub csv: PathBuf,
    pub svgs: Vec<PathBuf>,
    pub records: Vec<ResultRecord>,
}

pub fn reproduce(req: &Request) -> Result<Outputs, ReproduceError> {
    let (points, mc) = plan(req).map_err(ReproduceError::Config)?;
    let (records, _) = run_points(&points, &mc)?;
    let bytes = csv_bytes(&records)?;
    let dir: &Path = &req.out;
    let (name, kind) = match req.figure {
        Figure::Fig2 => ("fig2", Experiment::Fc),
        Figure::Fig3 => ("fig3", Experiment::SpuriousTen),
    };
    let csv = dir.join(format!("{name}.csv"));
    write_file(&csv, &bytes)?;
    let mut svgs = Vec::new();
    match req.figure {
        Figure::Fig2 => {
            let mut spec = plot_spec(kind);
            spec.title = "F_Z with |x-y| = N, chain of 2N".into();
            spec.series = vec!["N".into()];
            let path = dir.join("fig2.svg");
            write_file(&path, svg_from_csv(&bytes, &spec)?.as_bytes())?;
            svgs.push(path);
        }
        Figure::Fig3 => {
            for (panel, noise) in [("a", "X"), ("b", "Z")] {
                let mut spec = plot_spec(kind);
                spec.title = format!("spurious TEN / log 2, {noise}-noise");
                spec.series = vec!["N".into()];
                spec.filter = vec![("noise".into(), noise.into())];
                let path = dir.join(format!("fig3{panel}.svg"));
                write_file(&path, svg_from_csv(&bytes, &spec)?.as_bytes())?;
                svgs.push(path);
            }
        }
    }
    Ok(Outputs { csv, svgs, records })
}

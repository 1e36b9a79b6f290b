//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use decohere::negativity::NoiseKind;
use serde_json::json;

use crate::config::{ConfigError, Experiment, ExperimentConfig, Fc2dRoute, Format, Grid, McSettings, Method, OutputSpec, RunConfig};
use crate::fixtures;
use crate::reproduce::{self, Figure, ReproduceError, Request, Scale};
use crate::runner::{csv_bytes, expand, json_bytes, plot_spec, run_points, svg_from_csv, write_file, OutputError, PointError};

pub const WORKERS_ENV: &str = "DECOHERE_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_FIXTURE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "decohere", version, about = "Decohered cluster-state numerics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 64)]
    pub batches: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also render an SVG line plot here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// 1D fidelity correlator of the X-decohered cluster chain.
    Fc {
        /// Unit cells (chain of 2N qubits).
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        /// Even separation in lattice sites.
        #[arg(long, value_delimiter = ',', required = true)]
        sep: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// 2D fidelity correlator of a w x h rectangle.
    Fc2d {
        #[arg(long, value_delimiter = ',', required = true)]
        w: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        h: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long)]
        width: usize,
        #[arg(long, value_enum, default_value_t = Fc2dRoute::Factorized)]
        route: Fc2dRoute,
        /// Spin rows (brute route).
        #[arg(long, value_delimiter = ',')]
        height: Vec<usize>,
        #[arg(long)]
        no_boundary: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Logarithmic negativity between the two sublattices.
    Negativity {
        #[arg(long, value_delimiter = ',', required = true)]
        two_n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_noise, default_value = "X")]
        noise: Vec<NoiseKind>,
        #[arg(long, value_enum, default_value_t = Method::Mc)]
        method: Method,
        /// Shorthand for `--method exact`.
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Spurious topological negativity E(2N) - 2E(N).
    SpuriousTen {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_noise, default_value = "X")]
        noise: Vec<NoiseKind>,
        #[arg(long, value_enum, default_value_t = Method::Mc)]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Toric-code boundary negativity with sublattice-dependent rates.
    ToricBoundary {
        #[arg(long, value_delimiter = ',', required = true)]
        two_n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        p_x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        p_z: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Method::Mc)]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Injectivity, symmetry and Renyi spurious TEN of the cluster MPDO.
    Mpdo {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_noise, default_value = "X")]
        noise: Vec<NoiseKind>,
        #[arg(long, default_value_t = crate::runner::DEFAULT_ALPHA_MAX)]
        alpha_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run every experiment of a TOML config.
    Run {
        config: PathBuf,
        /// Resolve relative output paths against this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a figure's data grid and plot.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long)]
        yes_long: bool,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        batches: usize,
        /// Override the system sizes of fig3.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Recompute the dense-oracle fixtures and diff them against the committed ones.
    FreezeFixtures {
        #[arg(long)]
        out: PathBuf,
        /// Committed file to compare with; defaults to `--out`.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, default_value_t = fixtures::DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    match s {
        "X" | "x" => Ok(NoiseKind::X),
        "Z" | "z" => Ok(NoiseKind::Z),
        _ => Err(format!("noise must be X or Z, got `{s}`")),
    }
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Numeric(PointError),
    Output(OutputError),
    Fixture(serde_json::Value),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numeric(_) => EXIT_NUMERIC,
            Failure::Output(_) => EXIT_IO,
            Failure::Fixture(_) => EXIT_FIXTURE,
        }
    }

    fn record(&self) -> serde_json::Value {
        match self {
            Failure::Config(e) => json!({ "error": "config", "key": e.key, "line": e.line, "column": e.column, "message": e.message }),
            Failure::Numeric(e) => json!({ "error": "numeric", "point": e.point, "message": e.message }),
            Failure::Output(e) => json!({ "error": "output", "message": e.to_string() }),
            Failure::Fixture(r) => json!({ "error": "fixture", "report": r }),
        }
    }
}

impl From<ReproduceError> for Failure {
    fn from(e: ReproduceError) -> Self {
        match e {
            ReproduceError::Config(c) => Failure::Config(c),
            ReproduceError::Numeric(n) => Failure::Numeric(n),
            ReproduceError::Output(o) => Failure::Output(o),
        }
    }
}

/// Parse `args`, run, and return the exit code. Errors go to `stderr` as one JSON line.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{}", e.render()) } else { write!(stdout, "{}", e.render()) };
            return code;
        }
    };
    if let Err(f) = configure_workers() {
        let _ = writeln!(stderr, "{}", f.record());
        return f.code();
    }
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.record());
            f.code()
        }
    }
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(Failure::Config(ConfigError::key(WORKERS_ENV, format!("expected a positive integer, got `{v}`")))),
    };
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn grid_config(kind: Experiment, grid: Grid, common: &Common) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        grid,
        mc: McSettings { samples: common.samples, seed: common.seed, batches: common.batches },
        output: OutputSpec { csv: PathBuf::new(), json: None, svg: None },
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    let (cfg, common) = match cmd {
        Command::Fc { n, p, sep, common } => {
            (grid_config(Experiment::Fc, Grid { n: Some(n), p: Some(p), sep: Some(sep), ..Default::default() }, &common), common)
        }
        Command::Fc2d { w, h, p, width, route, height, no_boundary, common } => {
            let brute = route == Fc2dRoute::Brute;
            let grid = Grid {
                w: Some(w),
                h: Some(h),
                p: Some(p),
                width: Some(width),
                route: Some(route),
                height: brute.then_some(height),
                include_boundary: brute.then_some(!no_boundary),
                ..Default::default()
            };
            (grid_config(Experiment::Fc2d, grid, &common), common)
        }
        Command::Negativity { two_n, p, noise, method, exact, common } => {
            let method = if exact { Method::Exact } else { method };
            let grid = Grid { two_n: Some(two_n), p: Some(p), noise: Some(noise), method: Some(method), ..Default::default() };
            (grid_config(Experiment::Negativity, grid, &common), common)
        }
        Command::SpuriousTen { n, p, noise, method, common } => {
            let grid = Grid { n: Some(n), p: Some(p), noise: Some(noise), method: Some(method), ..Default::default() };
            (grid_config(Experiment::SpuriousTen, grid, &common), common)
        }
        Command::ToricBoundary { two_n, p_x, p_z, method, common } => {
            let grid = Grid { two_n: Some(two_n), p_x: Some(p_x), p_z: Some(p_z), method: Some(method), ..Default::default() };
            (grid_config(Experiment::ToricBoundary, grid, &common), common)
        }
        Command::Mpdo { p, noise, alpha_max, common } => {
            let grid = Grid { p: Some(p), noise: Some(noise), alpha_max: Some(alpha_max), ..Default::default() };
            (grid_config(Experiment::Mpdo, grid, &common), common)
        }
        Command::Run { config, out } => return run_config(&config, out.as_deref(), stdout),
        Command::Reproduce { figure, scale, yes_long, samples, seed, batches, sizes, out } => {
            let req = Request { figure, scale, yes_long, samples, seed, batches, sizes, out };
            let o = reproduce::reproduce(&req)?;
            let _ = writeln!(stdout, "{}", o.csv.display());
            for s in &o.svgs {
                let _ = writeln!(stdout, "{}", s.display());
            }
            return Ok(());
        }
        Command::FreezeFixtures { out, against, tolerance } => return freeze(&out, against.as_deref(), tolerance, stdout),
    };
    cfg.validate("args").map_err(Failure::Config)?;
    let (records, reports) = run_points(&expand(&cfg), &cfg.mc).map_err(Failure::Numeric)?;
    let csv = csv_bytes(&records).map_err(Failure::Output)?;
    let body = match common.format {
        Format::Csv => csv.clone(),
        Format::Json => json_bytes(cfg.kind, &records, &reports),
    };
    match &common.out {
        Some(path) => write_file(path, &body).map_err(Failure::Output)?,
        None => {
            let _ = stdout.write_all(&body);
        }
    }
    if let Some(svg) = &common.svg {
        let s = svg_from_csv(&csv, &plot_spec(cfg.kind)).map_err(Failure::Output)?;
        write_file(svg, s.as_bytes()).map_err(Failure::Output)?;
    }
    Ok(())
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn run_config(path: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(ConfigError { key: None, line: None, column: None, message: format!("cannot read {}: {e}", path.display()) }))?;
    let cfg = RunConfig::parse(&src).map_err(Failure::Config)?;
    for e in &cfg.experiments {
        let (records, reports) = run_points(&expand(e), &e.mc).map_err(Failure::Numeric)?;
        let csv = csv_bytes(&records).map_err(Failure::Output)?;
        let csv_path = resolve(out, &e.output.csv);
        write_file(&csv_path, &csv).map_err(Failure::Output)?;
        let _ = writeln!(stdout, "{}", csv_path.display());
        if let Some(j) = &e.output.json {
            let p = resolve(out, j);
            write_file(&p, &json_bytes(e.kind, &records, &reports)).map_err(Failure::Output)?;
            let _ = writeln!(stdout, "{}", p.display());
        }
        if let Some(s) = &e.output.svg {
            let p = resolve(out, s);
            let svg = svg_from_csv(&csv, &plot_spec(e.kind)).map_err(Failure::Output)?;
            write_file(&p, svg.as_bytes()).map_err(Failure::Output)?;
            let _ = writeln!(stdout, "{}", p.display());
        }
    }
    Ok(())
}

fn freeze(out: &Path, against: Option<&Path>, tolerance: f64, stdout: &mut dyn Write) -> Result<(), Failure> {
    let fresh = fixtures::generate().map_err(|e| Failure::Fixture(json!({ "message": e.to_string() })))?;
    let committed_path = against.unwrap_or(out);
    let report = match std::fs::read_to_string(committed_path) {
        Ok(text) => Some(fixtures::diff(&fresh, &text, tolerance)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && against.is_none() => None,
        Err(e) => return Err(Failure::Fixture(json!({ "message": format!("cannot read {}: {e}", committed_path.display()) }))),
    };
    let summary = match &report {
        Some(r) => serde_json::to_value(r).expect("report"),
        None => json!({ "tolerance": tolerance, "checked": fresh.len(), "divergent": [], "round_off_limited": [], "new_file": true }),
    };
    if let Some(r) = &report {
        if !r.is_clean() {
            return Err(Failure::Fixture(summary));
        }
    }
    let mut text = serde_json::to_string_pretty(&fixtures::to_file(&fresh)).expect("fixtures");
    text.push('\n');
    write_file(out, text.as_bytes()).map_err(Failure::Output)?;
    let _ = writeln!(stdout, "{summary}");
    Ok(())
}

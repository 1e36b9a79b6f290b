//! Experiment configuration files.
//!
//! ```toml
//! [[experiment]]
//! kind = "fc"
//! [experiment.grid]
//! n = [4, 8]
//! p = [0.1, 0.5]
//! sep = [4]
//! [experiment.output]
//! csv = "fc.csv"
//! ```

use std::path::PathBuf;

use decohere::negativity::NoiseKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fc,
    Fc2d,
    Negativity,
    SpuriousTen,
    ToricBoundary,
    Mpdo,
}

impl Experiment {
    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Fc => "fc",
            Experiment::Fc2d => "fc2d",
            Experiment::Negativity => "negativity",
            Experiment::SpuriousTen => "spurious-ten",
            Experiment::ToricBoundary => "toric-boundary",
            Experiment::Mpdo => "mpdo",
        }
    }

    /// Quantities measured in nats, emitted with a `log 2` companion column.
    pub fn is_entropic(self) -> bool {
        !matches!(self, Experiment::Fc | Experiment::Fc2d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Mc,
    /// Stabilizer formalism; only `p = 0` and `p = 1/2`.
    Stabilizer,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Mc => "mc",
            Method::Stabilizer => "stabilizer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Fc2dRoute {
    Factorized,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Experiment,
    pub grid: Grid,
    #[serde(default)]
    pub mc: McSettings,
    pub output: OutputSpec,
}

/// Parameter axes; each experiment reads the subset it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sep: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<NoiseKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Fc2dRoute>,
    /// Spin rows for the brute route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_boundary: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_samples() -> u64 {
    100_000
}

fn default_batches() -> usize {
    64
}

impl Default for McSettings {
    fn default() -> Self {
        Self { samples: default_samples(), seed: 0, batches: default_batches() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

/// A configuration problem, located by key path and, when known, source position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(k) = &self.key {
            write!(f, "key `{k}`: ")?;
        }
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn key(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: Some(key.into()), line: None, column: None, message: message.into() }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

fn backticked(msg: &str) -> Option<String> {
    let a = msg.find('`')?;
    let b = msg[a + 1..].find('`')?;
    Some(msg[a + 1..a + 1 + b].to_string())
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = match e.span() {
                Some(s) => {
                    let (l, c) = line_col(src, s.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            let message = e.message().trim().to_string();
            ConfigError { key: backticked(&message), line, column, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiments.is_empty() {
            return Err(ConfigError::key("experiment", "no experiments configured"));
        }
        for (i, e) in self.experiments.iter().enumerate() {
            e.validate(&format!("experiment[{i}]"))?;
        }
        Ok(())
    }
}

impl Experiment {
    /// Grid keys that must be present, and those that may be.
    fn grid_keys(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Experiment::Fc => (&["n", "p", "sep"], &[]),
            Experiment::Fc2d => (&["w", "h", "p", "width"], &["route", "height", "include_boundary"]),
            Experiment::Negativity => (&["two_n", "p", "noise"], &["method"]),
            Experiment::SpuriousTen => (&["n", "p", "noise"], &["method"]),
            Experiment::ToricBoundary => (&["two_n", "p_x", "p_z"], &["method"]),
            Experiment::Mpdo => (&["p", "noise"], &["alpha_max"]),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let (required, optional) = self.kind.grid_keys();
        let present = self.grid.present();
        let at = |name: &str| format!("{path}.grid.{name}");
        for &name in required {
            match present.iter().find(|(k, _)| *k == name).and_then(|(_, len)| *len) {
                None => return Err(ConfigError::key(at(name), format!("missing key `{name}`"))),
                Some(0) => return Err(ConfigError::key(at(name), format!("`{name}` is empty"))),
                Some(_) => {}
            }
        }
        for (name, len) in present {
            if len.is_some() && !required.contains(&name) && !optional.contains(&name) {
                return Err(ConfigError::key(at(name), format!("`{name}` is not a parameter of `{}`", self.kind.tag())));
            }
        }
        if self.kind == Experiment::Fc2d && self.grid.route == Some(Fc2dRoute::Brute) {
            match &self.grid.height {
                Some(h) if !h.is_empty() => {}
                _ => return Err(ConfigError::key(at("height"), "the brute route needs `height`")),
            }
        }
        if self.mc.batches < 16 {
            return Err(ConfigError::key(format!("{path}.mc.batches"), "need at least 16 batches"));
        }
        if self.mc.samples < self.mc.batches as u64 {
            return Err(ConfigError::key(format!("{path}.mc.samples"), "fewer samples than batches"));
        }
        Ok(())
    }
}

impl Grid {
    /// Length of every axis, `None` when absent; scalars count as one.
    fn present(&self) -> [(&'static str, Option<usize>); 15] {
        let v = |x: &Option<Vec<usize>>| x.as_ref().map(Vec::len);
        let f = |x: &Option<Vec<f64>>| x.as_ref().map(Vec::len);
        [
            ("n", v(&self.n)),
            ("two_n", v(&self.two_n)),
            ("p", f(&self.p)),
            ("sep", v(&self.sep)),
            ("noise", self.noise.as_ref().map(Vec::len)),
            ("method", self.method.map(|_| 1)),
            ("w", v(&self.w)),
            ("h", v(&self.h)),
            ("width", self.width.map(|_| 1)),
            ("route", self.route.map(|_| 1)),
            ("height", v(&self.height)),
            ("include_boundary", self.include_boundary.map(|_| 1)),
            ("p_x", f(&self.p_x)),
            ("p_z", f(&self.p_z)),
            ("alpha_max", self.alpha_max.map(|_| 1)),
        ]
    }
}

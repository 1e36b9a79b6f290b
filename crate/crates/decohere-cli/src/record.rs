//! Result records and their CSV / JSON encodings.

use std::cmp::Ordering;
use std::f64::consts::LN_2;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::Experiment;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One cell of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Bool(bool),
    Int(u64),
    Float(f64),
    Text(String),
}

impl Param {
    fn cmp_canonical(&self, other: &Param) -> Ordering {
        use Param::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Text(a), Text(b)) => a.cmp(b),
            (Bool(a), Bool(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Param::Bool(_) => 0,
            Param::Int(_) => 1,
            Param::Float(_) => 2,
            Param::Text(_) => 3,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Bool(b) => write!(f, "{b}"),
            Param::Int(i) => write!(f, "{i}"),
            Param::Float(x) => write!(f, "{}", fmt_float(*x)),
            Param::Text(s) => f.write_str(s),
        }
    }
}

impl From<usize> for Param {
    fn from(v: usize) -> Self {
        Param::Int(v as u64)
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Float(v)
    }
}

impl From<bool> for Param {
    fn from(v: bool) -> Self {
        Param::Bool(v)
    }
}

impl From<&str> for Param {
    fn from(v: &str) -> Self {
        Param::Text(v.to_string())
    }
}

/// Shortest round-trip representation; `inf`, `-inf` and `NaN` spelled out.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// A single result row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: Experiment,
    pub params: Vec<(&'static str, Param)>,
    pub value: Option<f64>,
    /// `ln F` for fidelity correlators.
    pub log_value: Option<f64>,
    pub std_err: Option<f64>,
    pub n_samples: Option<u64>,
    pub extra: Vec<(&'static str, Param)>,
    pub seed: u64,
    pub version: &'static str,
}

impl ResultRecord {
    pub fn new(experiment: Experiment, params: Vec<(&'static str, Param)>, seed: u64) -> Self {
        Self {
            experiment,
            params,
            value: None,
            log_value: None,
            std_err: None,
            n_samples: None,
            extra: Vec::new(),
            seed,
            version: VERSION,
        }
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().chain(&self.extra).find(|(k, _)| *k == name).map(|(_, v)| v)
    }

    pub fn columns(&self) -> Vec<(&'static str, Option<Param>)> {
        let mut cols: Vec<(&'static str, Option<Param>)> =
            self.params.iter().map(|(k, v)| (*k, Some(v.clone()))).collect();
        let f = |x: Option<f64>| x.map(Param::Float);
        if self.experiment.is_entropic() {
            cols.push(("value", f(self.value)));
            cols.push(("std_err", f(self.std_err)));
            cols.push(("value_log2", f(self.value.map(|v| v / LN_2))));
            cols.push(("std_err_log2", f(self.std_err.map(|v| v / LN_2))));
            cols.push(("n_samples", self.n_samples.map(Param::Int)));
        } else {
            cols.push(("value", f(self.value)));
            cols.push(("log_value", f(self.log_value)));
        }
        cols.extend(self.extra.iter().map(|(k, v)| (*k, Some(v.clone()))));
        cols.push(("seed", Some(Param::Int(self.seed))));
        cols.push(("version", Some(Param::Text(self.version.to_string()))));
        cols
    }

    fn cmp_canonical(&self, other: &Self) -> Ordering {
        let a = self.params.iter().map(|(_, v)| v);
        let b = other.params.iter().map(|(_, v)| v);
        for (x, y) in a.zip(b) {
            match x.cmp_canonical(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.params.len().cmp(&other.params.len())
    }
}

pub fn sort_canonical(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| a.cmp_canonical(b));
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = records.first() {
        w.write_record(first.columns().iter().map(|(k, _)| *k))?;
    }
    for r in records {
        w.write_record(r.columns().iter().map(|(_, v)| v.as_ref().map(|p| p.to_string()).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json(records: &[ResultRecord]) -> serde_json::Value {
    let rows = records
        .iter()
        .map(|r| {
            let mut m = serde_json::Map::new();
            m.insert("experiment".into(), serde_json::Value::String(r.experiment.tag().into()));
            for (k, v) in r.columns() {
                let v = match v {
                    None => serde_json::Value::Null,
                    Some(Param::Float(x)) if !x.is_finite() => serde_json::Value::String(fmt_float(x)),
                    Some(p) => serde_json::to_value(p).expect("plain data"),
                };
                m.insert(k.to_string(), v);
            }
            serde_json::Value::Object(m)
        })
        .collect();
    serde_json::Value::Array(rows)
}

/// A parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect())).collect::<csv::Result<_>>()?;
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        self.column(name).map(|c| self.rows[row][c].as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(n: usize, p: f64) -> ResultRecord {
        let mut r = ResultRecord::new(Experiment::Fc, vec![("N", n.into()), ("p", p.into())], 7);
        r.value = Some(0.5);
        r.log_value = Some(0.5f64.ln());
        r
    }

    #[test]
    fn canonical_order() {
        let mut v = vec![rec(8, 0.1), rec(4, 0.3), rec(4, 0.1)];
        sort_canonical(&mut v);
        let keys: Vec<_> = v.iter().map(|r| (r.param("N").cloned(), r.param("p").cloned())).collect();
        assert_eq!(keys[0], (Some(Param::Int(4)), Some(Param::Float(0.1))));
        assert_eq!(keys[2].0, Some(Param::Int(8)));
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_csv(&[rec(4, 0.1), rec(8, 0.25)], &mut buf).unwrap();
        let t = Table::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(t.headers, ["N", "p", "value", "log_value", "seed", "version"]);
        assert_eq!(t.get(1, "p"), Some("0.25"));
        assert_eq!(t.get(0, "log_value").unwrap().parse::<f64>().unwrap(), 0.5f64.ln());
        assert_eq!(t.get(0, "seed"), Some("7"));
    }

    #[test]
    fn floats_are_exact() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -0.0] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_float(f64::NEG_INFINITY), "-inf");
    }
}

//! Run configuration, battery records, and deterministic report output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Everything that determines the numbers a run produces. Output location
/// and thread count do not, so they are excluded from the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub c: f64,
    pub seed: u64,
    /// Overrides the primary sample count of every battery.
    pub samples: Option<usize>,
    /// Multiplies the numerical guard tolerances (not the pass limits).
    pub tol_scale: f64,
    pub batteries: Vec<String>,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { n: 2, c: 1.0, seed: 0, samples: None, tol_scale: 1.0, batteries: Vec::new(), threads: None, out: None }
    }
}

impl RunConfig {
    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_kv(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key}")))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "samples" => self.samples = Some(num(key, value)?),
            "tol_scale" | "tol-scale" => self.tol_scale = num(key, value)?,
            "threads" => self.threads = Some(num(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "batteries" => {
                self.batteries = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.c.is_finite() && self.c != 0.0) {
            return Err(Error::InvalidArgument(format!("c must be finite and non-zero, got {}", self.c)));
        }
        if !(self.tol_scale.is_finite() && self.tol_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("tol-scale must be positive, got {}", self.tol_scale)));
        }
        if self.samples == Some(0) {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        Ok(())
    }

    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&serde_json::to_value(self).expect("config serializes")).expect("value serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "fail",
        })
    }
}

/// One measured quantity and the range it must fall in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn range(name: &str, value: f64, min: Option<f64>, max: Option<f64>) -> Self {
        let pass = value.is_finite() && min.is_none_or(|m| value >= m) && max.is_none_or(|m| value <= m);
        Self { name: name.to_string(), value, min, max, pass }
    }

    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Self::range(name, value, None, Some(max))
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Self::range(name, value, Some(min), None)
    }

    pub fn within(name: &str, value: f64, min: f64, max: f64) -> Self {
        Self::range(name, value, Some(min), Some(max))
    }

    /// A yes/no condition, recorded as 1 or 0.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self::range(name, if ok { 1.0 } else { 0.0 }, Some(1.0), None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryResult {
    pub name: String,
    pub status: Status,
    /// The property under test, in words.
    pub reference: String,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
    /// CSV series `(file stem, contents)`, written only on request.
    #[serde(skip)]
    pub csv: Vec<(String, String)>,
}

impl BatteryResult {
    pub fn new(name: &str, reference: &str, checks: Vec<Check>, details: serde_json::Value) -> Self {
        let mut r = Self {
            name: name.to_string(),
            status: Status::Pass,
            reference: reference.to_string(),
            checks,
            warnings: Vec::new(),
            details,
            csv: Vec::new(),
        };
        r.refresh();
        r
    }

    pub fn warn(mut self, msg: impl Into<String>) -> Self {
        self.warnings.push(msg.into());
        self.refresh();
        self
    }

    fn refresh(&mut self) {
        self.status = if self.checks.iter().any(|c| !c.pass) {
            Status::Fail
        } else if !self.warnings.is_empty() {
            Status::Warn
        } else {
            Status::Pass
        };
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub status: Status,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub batteries: Vec<BatteryResult>,
}

impl Report {
    pub fn new(config: RunConfig, batteries: Vec<BatteryResult>) -> Self {
        let status = if batteries.iter().any(|b| b.status == Status::Fail) {
            Status::Fail
        } else if batteries.iter().any(|b| b.status == Status::Warn) {
            Status::Warn
        } else {
            Status::Pass
        };
        Self { status, config_hash: config.hash(), seed: config.seed, config, batteries }
    }

    /// Pretty JSON with keys sorted at every level.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }
}

/// Writes `report.json`, `timings.json`, and optionally the CSV series.
/// Timings live in their own file so the report stays byte-reproducible.
pub fn emit_report(report: &Report, timings: &BTreeMap<String, f64>, dir: &Path, csv: bool) -> Result<Vec<PathBuf>> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(io)?;
    written.push(path);
    let path = dir.join("timings.json");
    let t = serde_json::to_string_pretty(timings).expect("timings serialize") + "\n";
    std::fs::write(&path, t).map_err(io)?;
    written.push(path);
    if csv {
        for b in &report.batteries {
            for (stem, body) in &b.csv {
                let path = dir.join(format!("{}-{stem}.csv", b.name));
                std::fs::write(&path, body).map_err(io)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

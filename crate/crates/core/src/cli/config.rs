use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Suites accepted by `verify`.
pub const SUITES: &[&str] = &[
    "thm31",
    "thm51",
    "cor311",
    "cor511",
    "thm32",
    "lemma21",
    "lemma22",
    "lemma41",
    "lemma42",
    "eigenfn",
    "pathway-limit",
];

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Config(format!("unknown output format `{other}` (expected json or csv)"))),
        }
    }
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

/// One experiment, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suites: Vec<String>,
    /// Restricts every suite to this dimension; each suite has its own
    /// default set otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    /// Overrides of suite parameters by name (`zeta`, `alpha`, `gamma`, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Overrides the evaluation points of the transform suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    /// Overrides the q grid of the convergence suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Vec<f64>>,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the required fields.
    pub fn new(suites: &[&str], n: usize, seed: u64) -> Self {
        ExperimentConfig {
            suites: suites.iter().map(|s| s.to_string()).collect(),
            p: None,
            n,
            seed,
            workers: None,
            out: None,
            formats: default_formats(),
            params: BTreeMap::new(),
            s: None,
            q_grid: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.suites.is_empty() {
            return Err(Error::Config("field `suites`: at least one suite is required".into()));
        }
        if let Some(bad) = self.suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
            return Err(Error::Config(format!("field `suites`: unknown suite `{bad}` (known: {})", SUITES.join(", "))));
        }
        if self.n < MIN_SAMPLES {
            return Err(Error::Config(format!("field `n`: must be at least {MIN_SAMPLES}, got {}", self.n)));
        }
        if self.p == Some(0) {
            return Err(Error::Config("field `p`: dimension must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("field `workers`: must be positive".into()));
        }
        if let Some(q) = &self.q_grid {
            if q.iter().any(|v| !(v.is_finite() && *v < 1.0)) {
                return Err(Error::Config("field `q_grid`: values must be finite and below 1".into()));
            }
        }
        if let Some(s) = &self.s {
            if s.is_empty() || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("field `s`: needs finite values".into()));
            }
        }
        Ok(())
    }

    pub fn param(&self, name: &str, default: f64) -> f64 {
        self.params.get(name).copied().unwrap_or(default)
    }

    /// The config as embedded in reports: the output location is left out so
    /// that the same experiment written to two places gives identical files.
    pub fn provenance(&self) -> ExperimentConfig {
        ExperimentConfig { out: None, workers: None, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reject() {
        let c = ExperimentConfig::parse(r#"{"suites": ["thm31"], "n": 1000, "seed": 7}"#).unwrap();
        assert_eq!(c.formats, vec![OutputFormat::Json, OutputFormat::Csv]);
        for bad in [
            r#"{"suites": ["nope"], "n": 1000, "seed": 7}"#,
            r#"{"suites": ["thm31"], "n": 10, "seed": 7}"#,
            r#"{"suites": ["thm31"], "n": 1000}"#,
            r#"{"suites": ["thm31"], "n": 1000, "seed": 7, "extra": 1}"#,
        ] {
            assert!(matches!(ExperimentConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
        let e = ExperimentConfig::parse("{\"suites\": [\"thm31\"],\n \"n\": 1000,\n \"seed\": 7, \"bogus\": 2}").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }
}

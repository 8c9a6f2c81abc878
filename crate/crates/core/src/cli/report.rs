use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat};
use super::suites::{ConvergenceRow, ReportCase};
use crate::error::{Error, Result};

/// `git describe` of the build, or the package version outside a checkout.
pub const BUILD_ID: &str = env!("CONEFRAC_BUILD_ID");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub build_id: String,
    pub workers: usize,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub cases: Vec<ReportCase>,
}

impl SuiteReport {
    pub fn new(suite: &str, cfg: &ExperimentConfig, workers: usize, cases: Vec<ReportCase>) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            seed: cfg.seed,
            n: cfg.n,
            p: cfg.p,
            build_id: BUILD_ID.to_string(),
            workers,
            config: cfg.provenance(),
            pass: cases.iter().all(|c| c.case.pass),
            cases,
        }
    }

    pub fn passed(&self) -> usize {
        self.cases.iter().filter(|c| c.case.pass).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,case,params,method,lhs,rhs,se,pass\n");
        for c in &self.cases {
            let params = c
                .case
                .params
                .iter()
                .map(|(k, v)| format!("{k}={}", number(*v)))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.suite,
                c.name,
                params,
                c.case.method,
                number(c.case.lhs),
                number(c.case.rhs),
                number(c.case.se),
                c.case.pass
            );
        }
        out
    }
}

/// Shortest representation that parses back to the same f64.
pub fn number(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Timing {
    suite: String,
    wall_seconds: f64,
}

/// Writes `<suite>.json` / `<suite>.csv` and the `<suite>.timing.json` sidecar.
pub fn write_report(dir: &Path, report: &SuiteReport, formats: &[OutputFormat], wall_seconds: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        let (ext, body) = match f {
            OutputFormat::Json => ("json", report.to_json()),
            OutputFormat::Csv => ("csv", report.to_csv()),
        };
        let path = dir.join(format!("{}.{ext}", report.suite));
        std::fs::write(&path, body)?;
        written.push(path);
    }
    let timing = Timing { suite: report.suite.clone(), wall_seconds };
    let path = dir.join(format!("{}.timing.json", report.suite));
    std::fs::write(&path, serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n")?;
    written.push(path);
    Ok(written)
}

/// Reads every `<suite>.json` report in `dir`, sorted by suite name.
pub fn read_reports(dir: &Path) -> Result<Vec<SuiteReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".timing.json")
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        if let Ok(r) = serde_json::from_str::<SuiteReport>(&text) {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(Error::Io(format!("no reports found in {}", dir.display())));
    }
    Ok(out)
}

pub fn convergence_csv(rows: &[(String, usize, ConvergenceRow)]) -> String {
    let mut out = String::from("series,p,q,value,limit,abs_error,error_ratio\n");
    for (series, p, r) in rows {
        let _ = writeln!(
            out,
            "{series},{p},{},{},{},{},{}",
            number(r.q),
            number(r.value),
            number(r.limit),
            number(r.abs_error),
            r.error_ratio.map(number).unwrap_or_default()
        );
    }
    out
}

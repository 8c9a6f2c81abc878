//! Batch front end behind the `conefrac` binary.
//!
//! Exit status: 0 when every case passes, 1 when any verification case
//! fails, 2 for configuration and input errors.

pub mod config;
pub mod report;
pub mod suites;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Deserialize;

pub use config::{ExperimentConfig, OutputFormat, SUITES};
pub use report::{SuiteReport, BUILD_ID};
pub use suites::{ConvergenceRow, ReportCase};

use crate::densities::{DensitySpec, TestFunctionSpec};
use crate::error::{Error, Result};
use crate::operators::{weyl_right_apply, McConfig, OperatorSpec};
use crate::pdcore::{PDMatrix, SymMatrix};
use crate::sampling::RngStream;
use crate::special::log_gamma_p;
use crate::zonal::ZonalTable;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "CONEFRAC_OUT";
const DEFAULT_OUT: &str = "conefrac-out";

#[derive(Debug, Parser)]
#[command(name = "conefrac", version = BUILD_ID, about = "Fractional integrals on the positive-definite cone")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report formats, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub format: Option<Vec<OutputFormat>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// log Γ_p over a (p, α) grid, as CSV.
    Gamma {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        alpha: Vec<f64>,
    },
    /// Zonal polynomial coefficient table, as CSV.
    Zonal {
        #[arg(long)]
        kmax: usize,
        #[arg(long)]
        p: usize,
    },
    /// Evaluates a catalog density (JSON spec, or @file) at a matrix.
    Density {
        #[arg(long)]
        spec: String,
        /// Matrix as `{"p":..,"data":[..]}`.
        #[arg(long)]
        x: Option<String>,
        /// Also report the closed-form M-transform at s.
        #[arg(long, allow_hyphen_values = true)]
        s: Option<f64>,
    },
    /// Draws from a catalog density, one JSON matrix per line.
    Sample {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Evaluates an operator request (JSON, or @file).
    Operator {
        #[arg(long)]
        spec: String,
    },
    /// Runs verification suites and writes reports.
    Verify {
        /// Suites to run when no config is given.
        #[arg(long, value_delimiter = ',')]
        suite: Option<Vec<String>>,
        /// Sample size when no config is given.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
    },
    /// Writes the q → 1 convergence tables.
    PathwayStudy,
    /// Summarizes the reports in the output directory.
    Report,
}

/// Parses the arguments and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<(T, usize)> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
            Ok((pool.install(f), w))
        }
        None => Ok((f(), rayon::current_num_threads())),
    }
}

/// `@path` reads a file, anything else is taken as inline JSON.
fn json_arg<T: for<'de> Deserialize<'de>>(arg: &str, what: &str) -> Result<T> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    resolve_out_dir(cli.out.as_deref(), cfg)
}

fn effective_config(cli: &Cli, suite: &Option<Vec<String>>, n: Option<usize>, p: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let suites = suite.clone().ok_or_else(|| Error::Config("give --config or --suite".into()))?;
            let seed = cli.seed.ok_or_else(|| Error::Config("a seed is required (--seed or config)".into()))?;
            let mut c = ExperimentConfig::new(&[], n.unwrap_or(100_000), seed);
            c.suites = suites;
            c
        }
    };
    if let Some(s) = suite {
        if cli.config.is_some() {
            cfg.suites = s.clone();
        }
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    if p.is_some() {
        cfg.p = p;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(f) = &cli.format {
        cfg.formats = f.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Gamma { p, alpha } => {
            print!("{}", gamma_table(p, alpha));
            Ok(EXIT_PASS)
        }
        Command::Zonal { kmax, p } => {
            print!("{}", ZonalTable::shared(*kmax, *p)?.to_csv());
            Ok(EXIT_PASS)
        }
        Command::Density { spec, x, s } => {
            let spec: DensitySpec = json_arg(spec, "density spec")?;
            let d = spec.build()?;
            let mut out = serde_json::Map::new();
            out.insert("label".into(), d.label().into());
            if let Some(x) = x {
                let x: PDMatrix = json_arg(x, "matrix")?;
                out.insert("log_pdf".into(), finite_or_null(d.log_pdf(&x)));
                out.insert("pdf".into(), finite_or_null(d.pdf(&x)));
            }
            if let Some(s) = s {
                let m = d.m_transform(*s)?;
                out.insert("m_transform".into(), finite_or_null(m));
            }
            println!("{}", serde_json::Value::Object(out));
            Ok(EXIT_PASS)
        }
        Command::Sample { spec, n } => {
            let spec: DensitySpec = json_arg(spec, "density spec")?;
            let seed = cli.seed.ok_or_else(|| Error::Config("sample needs --seed".into()))?;
            let sampler = spec.build()?.sampler()?;
            let mut rng = RngStream::new(seed, 0);
            for _ in 0..*n {
                println!("{}", serde_json::to_string(&sampler.sample(&mut rng)?).expect("matrix serializes"));
            }
            Ok(EXIT_PASS)
        }
        Command::Operator { spec } => {
            let req: OperatorRequest = json_arg(spec, "operator request")?;
            let (eval, _) = with_workers(cli.workers, || req.evaluate())?;
            println!("{}", serde_json::to_string_pretty(&eval?).expect("evaluation serializes"));
            Ok(EXIT_PASS)
        }
        Command::Verify { suite, n, p } => {
            let cfg = effective_config(cli, suite, *n, *p)?;
            let dir = out_dir(cli, Some(&cfg));
            let (reports, timings) = run_verify(&cfg)?;
            for (r, t) in reports.iter().zip(&timings) {
                report::write_report(&dir, r, &cfg.formats, *t)?;
                println!("{:<14} {}/{} passed", r.suite, r.passed(), r.cases.len());
            }
            Ok(if reports.iter().all(|r| r.pass) { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::PathwayStudy => {
            let cfg = match &cli.config {
                Some(path) => Some(ExperimentConfig::load(path)?),
                None => None,
            };
            let csv = pathway_study(cfg.as_ref())?;
            let dir = out_dir(cli, cfg.as_ref());
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("pathway_study.csv"), &csv)?;
            print!("{csv}");
            Ok(EXIT_PASS)
        }
        Command::Report => {
            let dir = out_dir(cli, None);
            let reports = report::read_reports(&dir)?;
            for r in &reports {
                println!("{:<14} {}/{} passed", r.suite, r.passed(), r.cases.len());
                for c in r.cases.iter().filter(|c| !c.case.pass) {
                    println!("  FAIL {} lhs={} rhs={} se={}", c.name, c.case.lhs, c.case.rhs, c.case.se);
                }
            }
            Ok(if reports.iter().all(|r| r.pass) { EXIT_PASS } else { EXIT_FAIL })
        }
    }
}

fn finite_or_null(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
}

/// `p,alpha,log_gamma_p,status` rows; invalid arguments give `domain_error`.
pub fn gamma_table(ps: &[usize], alphas: &[f64]) -> String {
    let mut out = String::from("p,alpha,log_gamma_p,status\n");
    for &p in ps {
        for &a in alphas {
            match log_gamma_p(p, a) {
                Ok(v) => out.push_str(&format!("{p},{},{},ok\n", report::number(a), report::number(v))),
                Err(_) => out.push_str(&format!("{p},{},,domain_error\n", report::number(a))),
            }
        }
    }
    out
}

/// Runs every suite of the config; returns the reports and wall times.
/// Suite errors become a single failing case.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<(Vec<SuiteReport>, Vec<f64>)> {
    cfg.validate()?;
    let mut reports = Vec::new();
    let mut times = Vec::new();
    for suite in &cfg.suites {
        let start = Instant::now();
        let (cases, workers) = with_workers(cfg.workers, || suites::run_suite(suite, cfg))?;
        let cases = match cases {
            Ok(c) => c,
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => vec![ReportCase {
                name: format!("error: {e}"),
                case: crate::mtransform::VerificationCase::deterministic(Default::default(), "error", 0.0, 1.0, 0.0),
            }],
        };
        times.push(start.elapsed().as_secs_f64());
        reports.push(SuiteReport::new(suite, cfg, workers, cases));
    }
    Ok((reports, times))
}

/// An `operator` subcommand request.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorRequest {
    pub operator: OperatorSpec,
    pub u: SymMatrix,
    pub function: TestFunctionSpec,
    #[serde(default = "default_request_n")]
    pub n: usize,
    pub seed: u64,
    /// Evaluate the p = 1 defining integral by quadrature instead.
    #[serde(default)]
    pub quadrature: bool,
}

fn default_request_n() -> usize {
    100_000
}

impl OperatorRequest {
    pub fn evaluate(&self) -> Result<crate::operators::OperatorEvaluation> {
        let f = self.function.build()?;
        if self.quadrature {
            if self.u.dim() != 1 {
                return Err(Error::Unsupported("quadrature evaluation is p = 1 only".into()));
            }
            return self.operator.apply_quadrature(&f, self.u.get(0, 0));
        }
        let mc = McConfig::new(self.n, self.seed);
        if let OperatorSpec::WeylRight { alpha } = self.operator {
            return weyl_right_apply(alpha, &f, &self.u, mc);
        }
        let u = PDMatrix::new(self.u.clone())?;
        self.operator.apply(&f, &u, mc)
    }
}

/// Convergence tables of the Lemma kernels, the pathway normalizing
/// constant and the pathway operators, as CSV.
pub fn pathway_study(cfg: Option<&ExperimentConfig>) -> Result<String> {
    let base = ExperimentConfig::new(&["pathway-limit"], config::MIN_SAMPLES, 0);
    let cfg = cfg.unwrap_or(&base);
    let grid = cfg.q_grid.clone().unwrap_or_else(suites::default_q_grid);
    let dims = match cfg.p {
        Some(p) => vec![p],
        None => vec![1, 2],
    };
    let mut rows = Vec::new();
    for p in dims {
        let st = suites::PathwayStudy::from_config(cfg, p);
        let x = suites::kernel_point(p)?;
        let (a, eta) = (cfg.param("a", 1.0), cfg.param("eta", 1.0));
        let limit = crate::operators::pathway_kernel(0.0, a, eta, &x)?.1;
        let kernel = suites::convergence_table(&grid, |q| Ok(crate::operators::pathway_kernel(q, a, eta, &x)?.0), limit)?;
        rows.extend(kernel.into_iter().map(|r| ("kernel".to_string(), p, r)));
        let c = crate::operators::pathway_constant(p, st.gamma_second, st.a, st.eta, grid[0])?;
        let constant = suites::convergence_table(
            &grid,
            |q| Ok(crate::operators::pathway_constant(p, st.gamma_second, st.a, st.eta, q)?.log_exact.exp()),
            c.log_limit.exp(),
        )?;
        rows.extend(constant.into_iter().map(|r| ("constant".to_string(), p, r)));
        rows.extend(st.second_kind(&grid)?.into_iter().map(|r| ("operator_second_kind".to_string(), p, r)));
        rows.extend(st.first_kind(&grid)?.into_iter().map(|r| ("operator_first_kind".to_string(), p, r)));
    }
    Ok(report::convergence_csv(&rows))
}

/// Output directory: the flag, then the environment override, then the
/// config, then `./conefrac-out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

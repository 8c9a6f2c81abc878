//! The named verification suites behind `verify`.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::densities::{matrix_gamma, PathwayKind, PathwayParams, PathwayScale, TestFunction};
use crate::error::{Error, Result};
use crate::mtransform::{
    self, params, verify_kober1_mtransform, verify_kober2_mtransform, verify_mellin_convolution, verify_rl_mtransform,
    verify_weyl_mtransform, Construction, MTransformMethod, VerificationCase, VerificationReport,
};
use crate::operators::{
    kober1_apply, kober1_eigen_constant, kober2_apply, kober2_eigen_constant, pathway1_eigen_value,
    pathway1_limit_eigen_value, pathway2_eigen_value, pathway2_limit_eigen_value, pathway_constant, pathway_kernel,
    quad, McConfig,
};
use crate::pdcore::{PDMatrix, SymMatrix};
use crate::special::{half_p1, log_gamma_p};
use crate::zonal::{lemma41_check, lemma42_check, Partition, ZonalTable};

/// Tolerance of the p = 1 eigenfunction checks against quadrature.
pub const EIGEN_QUADRATURE_TOL: f64 = 1e-8;
/// Allowed relative deviation of an error ratio from its expected value.
pub const RATIO_TOL: f64 = 0.2;
/// Error ratios are checked only once `1-q` has dropped to this size; the
/// first-order term does not dominate before that.
pub const RATIO_ONSET: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCase {
    pub name: String,
    #[serde(flatten)]
    pub case: VerificationCase,
}

fn named(name: impl Into<String>, case: VerificationCase) -> ReportCase {
    ReportCase { name: name.into(), case }
}

fn from_report(prefix: &str, r: VerificationReport) -> impl Iterator<Item = ReportCase> + '_ {
    r.cases.into_iter().map(move |c| named(format!("{prefix}/{}", r.name), c))
}

fn dims(cfg: &ExperimentConfig, default: &[usize]) -> Vec<usize> {
    match cfg.p {
        Some(p) => vec![p],
        None => default.to_vec(),
    }
}

fn mc(cfg: &ExperimentConfig, offset: u64) -> McConfig {
    McConfig::new(cfg.n, cfg.seed.wrapping_add(offset))
}

fn s_points(cfg: &ExperimentConfig, default: Vec<f64>) -> Vec<f64> {
    cfg.s.clone().unwrap_or(default)
}

/// `diag` on the diagonal, `off` elsewhere.
pub fn test_matrix(p: usize, diag: f64, off: f64) -> SymMatrix {
    let data = (0..p * p).map(|k| if k / p == k % p { diag } else { off }).collect();
    SymMatrix::new(p, data).expect("square")
}

pub fn test_pd(p: usize, diag: f64, off: f64) -> Result<PDMatrix> {
    PDMatrix::new(test_matrix(p, diag, off))
}

fn gamma_density(p: usize, shape: f64) -> Result<TestFunction> {
    Ok(TestFunction::density(matrix_gamma(p, shape, &PDMatrix::identity(p))?))
}

pub fn run_suite(name: &str, cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    match name {
        "thm31" => thm31(cfg),
        "thm51" => thm51(cfg),
        "cor311" => cor311(cfg),
        "cor511" => cor511(cfg),
        "thm32" => thm32(cfg),
        "lemma21" => lemma21(cfg),
        "lemma22" => lemma22(cfg),
        "lemma41" => lemma41(cfg),
        "lemma42" => lemma42(cfg),
        "eigenfn" => eigenfn(cfg),
        "pathway-limit" => pathway_limit(cfg),
        other => Err(Error::Config(format!("unknown suite `{other}`"))),
    }
}

fn method_for(p: usize) -> MTransformMethod {
    if p == 1 {
        MTransformMethod::Quadrature
    } else {
        MTransformMethod::MonteCarlo
    }
}

fn thm31(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2]) {
        let h = half_p1(p);
        let (zeta, alpha, gamma, s) =
            if p == 1 { (1.0, 1.0, 1.0, vec![1.0, 1.5, 2.0]) } else { (h, h, p as f64 + 1.0, vec![h, h + 0.5, h + 1.0]) };
        let f = gamma_density(p, cfg.param("gamma", gamma))?;
        let r = verify_kober2_mtransform(
            p,
            cfg.param("zeta", zeta),
            cfg.param("alpha", alpha),
            &f,
            &s_points(cfg, s),
            method_for(p),
            mc(cfg, 0),
        )?;
        out.extend(from_report(&format!("p{p}"), r));
    }
    Ok(out)
}

fn thm51(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2]) {
        let h = half_p1(p);
        let (zeta, alpha, gamma, s) = if p == 1 {
            (0.0, 1.0, 1.0, vec![0.5, 0.75, 0.9])
        } else {
            (p as f64 / 2.0, h, p as f64 + 1.0, vec![h - 0.5, h - 0.25, h])
        };
        let f = gamma_density(p, cfg.param("gamma", gamma))?;
        let r = verify_kober1_mtransform(
            p,
            cfg.param("zeta", zeta),
            cfg.param("alpha", alpha),
            &f,
            &s_points(cfg, s),
            method_for(p),
            mc(cfg, 0),
        )?;
        out.extend(from_report(&format!("p{p}"), r));
    }
    Ok(out)
}

fn cor311(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2]) {
        let h = half_p1(p);
        let (alpha, gamma, s) =
            if p == 1 { (1.0, 1.0, vec![1.0, 1.5, 2.0]) } else { (h, p as f64 + 1.0, vec![h, h + 0.5, h + 1.0]) };
        let f = gamma_density(p, cfg.param("gamma", gamma))?;
        let r = verify_weyl_mtransform(p, cfg.param("alpha", alpha), &f, &s_points(cfg, s), method_for(p), mc(cfg, 0))?;
        out.extend(from_report(&format!("p{p}"), r));
    }
    Ok(out)
}

fn cor511(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2]) {
        let h = half_p1(p);
        // the admissible window is (p-1)/2 < s < 1
        let lo = (p as f64 - 1.0) / 2.0;
        let s = if p == 1 { vec![0.3, 0.5, 0.7] } else { [0.2, 0.5, 0.8].iter().map(|t| lo + t * (1.0 - lo)).collect() };
        let f = gamma_density(p, cfg.param("gamma", if p == 1 { 1.0 } else { p as f64 + 1.0 }))?;
        let alpha = cfg.param("alpha", if p == 1 { 1.0 } else { h });
        let r = verify_rl_mtransform(p, alpha, &f, &s_points(cfg, s), method_for(p), mc(cfg, 0))?;
        out.extend(from_report(&format!("p{p}"), r));
    }
    Ok(out)
}

fn thm32(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2]) {
        let h = half_p1(p);
        let (zeta, alpha, gamma, s_prod, s_ratio) = if p == 1 {
            (1.0, 1.0, 2.0, vec![1.0, 1.5, 2.0], vec![0.5, 0.75, 1.0])
        } else {
            (h, h, p as f64 + 1.0, vec![h, h + 0.5, h + 1.0], vec![h - 0.25, h, h + 0.25])
        };
        let (zeta, alpha) = (cfg.param("zeta", zeta), cfg.param("alpha", alpha));
        let f = gamma_density(p, cfg.param("gamma", gamma))?;
        let prefix = format!("p{p}");
        let s_prod = s_points(cfg, s_prod);
        out.extend(from_report(&prefix, verify_mellin_convolution(p, zeta, alpha, &f, &s_prod, Construction::Product, mc(cfg, 0))?));
        out.extend(from_report(
            &prefix,
            verify_mellin_convolution(p, zeta, alpha, &f, &s_points(cfg, s_ratio), Construction::Ratio, mc(cfg, 1))?,
        ));
        let mass = mtransform::operator_density_mass(p, zeta, alpha, &f, mc(cfg, 2))?;
        out.push(named(
            format!("{prefix}/operator_density_mass"),
            VerificationCase::monte_carlo(params(&[("p", p as f64), ("zeta", zeta), ("alpha", alpha)]), &mass, 1.0),
        ));
        // product moment against the scaled operator transform, independent samples
        let s0 = s_prod[0];
        let moment = mtransform::convolution_moments(p, zeta, alpha, &f, &[s0], Construction::Product, mc(cfg, 3))?;
        let scale = (log_gamma_p(p, alpha + zeta + h)? - log_gamma_p(p, zeta + h)?).exp();
        let op = mtransform::kober2_m_transform_mc(p, zeta, alpha, &f, s0, mc(cfg, 4))?.scaled(scale);
        out.push(named(
            format!("{prefix}/product_vs_operator_transform"),
            VerificationCase::two_sample(params(&[("p", p as f64), ("zeta", zeta), ("alpha", alpha), ("s", s0)]), &moment[0], &op),
        ));
    }
    Ok(out)
}

fn relative_case(pm: std::collections::BTreeMap<String, f64>, method: &str, lhs: f64, rhs: f64, rtol: f64) -> VerificationCase {
    let mut c = VerificationCase::deterministic(pm, method, lhs, rhs, 0.0);
    c.pass = (lhs / rhs - 1.0).abs() <= rtol;
    c
}

fn lemma21(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    let q = 1.0 - cfg.param("one_minus_q", 1e-4);
    for p in dims(cfg, &[1, 2]) {
        let (gamma, a, eta) = (cfg.param("gamma", 0.7), cfg.param("a", 1.3), cfg.param("eta", 0.9));
        let c = pathway_constant(p, gamma, a, eta, q)?;
        let pm = params(&[("p", p as f64), ("gamma", gamma), ("a", a), ("eta", eta), ("q", q)]);
        out.push(named(
            format!("p{p}/constant_vs_limit"),
            relative_case(pm.clone(), "closed_form", c.log_exact.exp(), c.log_limit.exp(), 0.01),
        ));
        out.push(named(
            format!("p{p}/stirling_device"),
            relative_case(pm, "closed_form", c.log_stirling.exp(), c.log_limit.exp(), 1e-9),
        ));
    }
    Ok(out)
}

/// `1 - 2^{-m}`, m = 1..12.
pub fn default_q_grid() -> Vec<f64> {
    (1..=12).map(|m| 1.0 - 0.5f64.powi(m)).collect()
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub q: f64,
    pub value: f64,
    pub limit: f64,
    pub abs_error: f64,
    /// Error of the previous row over this row's error.
    pub error_ratio: Option<f64>,
}

pub fn convergence_table(grid: &[f64], value: impl Fn(f64) -> Result<f64>, limit: f64) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(grid.len());
    for &q in grid {
        let v = value(q)?;
        let err = (v - limit).abs();
        let error_ratio = rows.last().map(|r| r.abs_error / err);
        rows.push(ConvergenceRow { q, value: v, limit, abs_error: err, error_ratio });
    }
    Ok(rows)
}

/// Error-ratio cases: once `1-q` is below [`RATIO_ONSET`], each ratio should equal the
/// ratio of consecutive `1-q` values within [`RATIO_TOL`].
fn ratio_cases(label: &str, base: &[(&str, f64)], rows: &[ConvergenceRow]) -> Vec<ReportCase> {
    rows.windows(2)
        .filter(|w| 1.0 - w[1].q <= RATIO_ONSET)
        .map(|w| {
            let expected = (1.0 - w[0].q) / (1.0 - w[1].q);
            let mut pm = params(base);
            pm.insert("q".into(), w[1].q);
            let lhs = w[1].error_ratio.unwrap_or(f64::NAN);
            named(label, relative_case(pm, "closed_form", lhs, expected, RATIO_TOL))
        })
        .collect()
}

fn q_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.q_grid.clone().unwrap_or_else(default_q_grid)
}

/// Point at which the q-grids evaluate matrix kernels.
pub fn kernel_point(p: usize) -> Result<PDMatrix> {
    if p == 1 {
        PDMatrix::diag(&[1.0])
    } else {
        test_pd(p, 0.6, 0.15)
    }
}

fn lemma22(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    let (a, eta) = (cfg.param("a", 1.0), cfg.param("eta", 1.0));
    for p in dims(cfg, &[1, 2]) {
        let x = kernel_point(p)?;
        let limit = pathway_kernel(0.0, a, eta, &x)?.1;
        let rows = convergence_table(&q_grid(cfg), |q| Ok(pathway_kernel(q, a, eta, &x)?.0), limit)?;
        out.extend(ratio_cases(&format!("p{p}/kernel_error_ratio"), &[("p", p as f64), ("a", a), ("eta", eta)], &rows));
        if p == 1 {
            let (k, l) = pathway_kernel(0.9, a, eta, &x)?;
            let pm = params(&[("p", 1.0), ("a", a), ("eta", eta), ("q", 0.9)]);
            let kernel_exact = (1.0 - 0.1 * a).powf(10.0 * eta);
            out.push(named("p1/kernel_row", VerificationCase::deterministic(pm.clone(), "closed_form", k, kernel_exact, 1e-12)));
            out.push(named(
                "p1/limit_row",
                VerificationCase::deterministic(pm, "closed_form", l, (-a * eta).exp(), 1e-12),
            ));
        }
    }
    Ok(out)
}

fn partitions_up_to_two(p: usize) -> Vec<Partition> {
    let mut v = vec![Partition::empty(), Partition::new(vec![1]).expect("valid"), Partition::new(vec![2]).expect("valid")];
    if p >= 2 {
        v.push(Partition::new(vec![1, 1]).expect("valid"));
    }
    v
}

fn kappa_param(k: &Partition) -> f64 {
    // (2,1) -> 21; () -> 0
    k.parts().iter().fold(0.0, |acc, &x| acc * 10.0 + x as f64)
}

fn lemma41(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[2]) {
        let table = ZonalTable::shared(2, p)?;
        let (alpha, beta) = (cfg.param("alpha", 2.0), cfg.param("beta", 1.5));
        let t = test_pd(p, 0.6, 0.2)?;
        for (i, k) in partitions_up_to_two(p).iter().enumerate() {
            let c = lemma41_check(&table, alpha, beta, k, &t, cfg.n, cfg.seed.wrapping_add(i as u64))?;
            let pm = params(&[("p", p as f64), ("alpha", alpha), ("beta", beta), ("kappa", kappa_param(k))]);
            out.push(named(format!("p{p}/K{k}"), VerificationCase::monte_carlo(pm, &c.lhs, c.rhs)));
        }
    }
    Ok(out)
}

fn lemma42(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[2]) {
        let table = ZonalTable::shared(2, p)?;
        let alpha = cfg.param("alpha", 1.5);
        let a = test_pd(p, 0.8, 0.25)?;
        let z = test_matrix(p, 0.3, -0.1);
        for (i, k) in partitions_up_to_two(p).iter().enumerate() {
            let c = lemma42_check(&table, alpha, k, &a, &z, cfg.n, cfg.seed.wrapping_add(i as u64))?;
            let pm = params(&[("p", p as f64), ("alpha", alpha), ("kappa", kappa_param(k))]);
            out.push(named(format!("p{p}/K{k}"), VerificationCase::monte_carlo(pm, &c.lhs, c.rhs)));
        }
    }
    Ok(out)
}

/// `(ζ, α, λ)` triples of the eigenfunction suite.
pub fn eigen_triples(p: usize) -> Vec<(f64, f64, f64)> {
    match p {
        1 => vec![(1.0, 1.0, 0.5), (0.5, 2.5, 1.0), (2.0, 0.7, 0.3)],
        2 => vec![(1.0, 1.5, 0.5), (1.5, 2.0, 1.0), (0.75, 1.0, 0.25)],
        _ => {
            let b = (p as f64 - 1.0) / 2.0;
            vec![(b + 0.5, b + 0.5, 0.5), (b + 1.0, b + 1.5, 1.0), (b + 0.25, b + 0.2, 0.25)]
        }
    }
}

/// Base point of the eigenfunction suite.
pub fn eigen_point(p: usize) -> Result<PDMatrix> {
    if p == 1 {
        PDMatrix::diag(&[1.3])
    } else {
        test_pd(p, 1.1, 0.3)
    }
}

fn eigenfn(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2, 3]) {
        let u = eigen_point(p)?;
        let ld = u.logdet();
        for (i, (zeta, alpha, lambda)) in eigen_triples(p).into_iter().enumerate() {
            let pm = params(&[("p", p as f64), ("zeta", zeta), ("alpha", alpha), ("lambda", lambda)]);
            let rhs2 = kober2_eigen_constant(p, zeta, alpha, lambda)? * (-lambda * ld).exp();
            let rhs1 = kober1_eigen_constant(p, zeta, alpha, lambda)? * (lambda * ld).exp();
            let f2 = TestFunction::DetPower(-lambda);
            let f1 = TestFunction::DetPower(lambda);
            if p == 1 {
                let x = u.get(0, 0);
                let l2 = quad::kober2(zeta, alpha, &f2, x)?;
                let l1 = quad::kober1(zeta, alpha, &f1, x)?;
                out.push(named("p1/kober2", relative_case(pm.clone(), "quadrature", l2, rhs2, EIGEN_QUADRATURE_TOL)));
                out.push(named("p1/kober1", relative_case(pm, "quadrature", l1, rhs1, EIGEN_QUADRATURE_TOL)));
            } else {
                let e2 = kober2_apply(zeta, alpha, &f2, &u, mc(cfg, 2 * i as u64))?;
                let e1 = kober1_apply(zeta, alpha, &f1, &u, mc(cfg, 2 * i as u64 + 1))?;
                out.push(named(format!("p{p}/kober2"), VerificationCase::monte_carlo(pm.clone(), &e2.value, rhs2)));
                out.push(named(format!("p{p}/kober1"), VerificationCase::monte_carlo(pm, &e1.value, rhs1)));
            }
        }
    }
    Ok(out)
}

/// Parameters of the pathway convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwayStudy {
    pub p: usize,
    pub gamma_second: f64,
    pub gamma_first: f64,
    pub a: f64,
    pub eta: f64,
    pub lambda: f64,
}

impl PathwayStudy {
    pub fn from_config(cfg: &ExperimentConfig, p: usize) -> Self {
        PathwayStudy {
            p,
            gamma_second: cfg.param("gamma", 0.8),
            gamma_first: cfg.param("gamma_first", half_p1(p) + 0.3),
            a: cfg.param("a", 1.2),
            eta: cfg.param("eta", 1.3),
            lambda: cfg.param("lambda", 0.7),
        }
    }

    pub fn point(&self) -> Result<PDMatrix> {
        if self.p == 1 {
            PDMatrix::diag(&[1.4])
        } else {
            test_pd(self.p, 1.4, 0.2)
        }
    }

    /// Second-kind operator on `|V|^{-λ}` and its limit, as a table over q.
    pub fn second_kind(&self, grid: &[f64]) -> Result<Vec<ConvergenceRow>> {
        let ld = self.point()?.logdet();
        let limit = pathway2_limit_eigen_value(self.p, self.gamma_second, self.a * self.eta, self.lambda, ld)?;
        convergence_table(
            grid,
            |q| {
                let pp = PathwayParams::new(self.p, PathwayKind::Second, self.gamma_second, self.eta, q, PathwayScale::Scalar(self.a))?;
                pathway2_eigen_value(&pp, self.lambda, ld)
            },
            limit,
        )
    }

    /// First-kind operator on `|V|^λ` and its limit.
    pub fn first_kind(&self, grid: &[f64]) -> Result<Vec<ConvergenceRow>> {
        let ld = self.point()?.logdet();
        let limit = pathway1_limit_eigen_value(self.p, self.gamma_first, self.a * self.eta, self.lambda, ld)?;
        convergence_table(
            grid,
            |q| {
                let pp = PathwayParams::new(self.p, PathwayKind::First, self.gamma_first, self.eta, q, PathwayScale::Scalar(self.a))?;
                pathway1_eigen_value(&pp, self.lambda, ld)
            },
            limit,
        )
    }
}

fn pathway_limit(cfg: &ExperimentConfig) -> Result<Vec<ReportCase>> {
    let mut out = Vec::new();
    for p in dims(cfg, &[1, 2]) {
        let st = PathwayStudy::from_config(cfg, p);
        let grid = q_grid(cfg);
        let base = [("p", p as f64), ("a", st.a), ("eta", st.eta), ("lambda", st.lambda)];
        let mut b2 = base.to_vec();
        b2.push(("gamma", st.gamma_second));
        out.extend(ratio_cases(&format!("p{p}/second_kind_error_ratio"), &b2, &st.second_kind(&grid)?));
        let mut b1 = base.to_vec();
        b1.push(("gamma", st.gamma_first));
        out.extend(ratio_cases(&format!("p{p}/first_kind_error_ratio"), &b1, &st.first_kind(&grid)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_suites_pass() {
        let cfg = ExperimentConfig::new(&["lemma21"], 100, 1);
        for s in ["lemma21", "lemma22", "pathway-limit"] {
            let cases = run_suite(s, &cfg).unwrap();
            assert!(!cases.is_empty());
            for c in &cases {
                assert!(c.case.pass, "{s}: {c:?}");
            }
        }
    }

    #[test]
    fn test_matrices_are_pd() {
        for p in 1..=4 {
            assert!(test_pd(p, 0.6, 0.2).is_ok());
            assert!(eigen_point(p).is_ok());
            assert!(kernel_point(p).is_ok());
        }
    }
}

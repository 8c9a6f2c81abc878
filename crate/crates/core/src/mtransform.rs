//! M-transforms `f*(s) = ∫_{X>O} |X|^{s-(p+1)/2} f(X) dX` and the engines
//! that check the operator transform identities.
//!
//! The Monte Carlo left-hand sides draw the outer point U from a proposal
//! and, for each U, a single inner draw of the operator's expectation form,
//! so every summand is an unbiased estimate of the outer integrand and the
//! standard error comes from the joint sample.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::densities::{type1_beta, TestFunction};
use crate::error::{Error, Result};
use crate::operators::{
    check_alpha, check_zeta, eval_checked, fallback_rate, product_point, quad, ratio_point, McConfig, Type2Proposal,
};
use crate::pdcore::PDMatrix;
use crate::quadrature::{integrate_left_power, integrate_to_infinity, ABS_TOL, REL_TOL};
use crate::sampling::{
    monte_carlo, monte_carlo_multi, within_band, EstimatorResult, MatrixGammaSampler, MatrixSampler, RngStream,
    Type1BetaSampler, Type2BetaSampler,
};
use crate::special::{gamma_p_bound, half_p1, log_beta_p, log_gamma_p};

/// Agreement required between a quadrature left-hand side and its closed form.
pub const QUADRATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MTransformMethod {
    ClosedForm,
    /// p = 1 only.
    Quadrature,
    MonteCarlo,
}

impl MTransformMethod {
    pub fn name(self) -> &'static str {
        match self {
            MTransformMethod::ClosedForm => "closed_form",
            MTransformMethod::Quadrature => "quadrature",
            MTransformMethod::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MTransformQuery {
    pub s: f64,
    pub method: MTransformMethod,
    pub mc: McConfig,
}

/// Closed-form `f*(s)`, or a domain error when none is catalogued.
pub fn closed_form(f: &TestFunction, p: usize, s: f64) -> Result<f64> {
    match f.log_m_transform(p, s) {
        Some(r) => Ok(r?.exp()),
        None => Err(Error::domain(format!("no closed-form M-transform for {}", f.label()))),
    }
}

/// `∫|X|^{s-(p+1)/2} f(X) dX` by the requested method.
///
/// Monte Carlo uses the density's own sampler when f is a catalog density,
/// otherwise a matrix-gamma(s, b) proposal with b from f's decay rate.
pub fn m_transform(f: &TestFunction, p: usize, query: &MTransformQuery) -> Result<EstimatorResult> {
    let s = query.s;
    let h = half_p1(p);
    match query.method {
        MTransformMethod::ClosedForm => Ok(EstimatorResult::exact(closed_form(f, p, s)?, "closed_form")),
        MTransformMethod::Quadrature => {
            if p != 1 {
                return Err(Error::Unsupported("quadrature M-transform is p = 1 only".into()));
            }
            let tail = if f.decay_rate().is_some() { Tail::Exponential } else { Tail::Unknown };
            let v = mellin_quadrature(|x| Ok(f.eval_scalar(x)), s, tail)?;
            Ok(EstimatorResult::exact(v, "quadrature"))
        }
        MTransformMethod::MonteCarlo => {
            if let Some(d) = f.as_density() {
                let sampler = d.sampler()?;
                return monte_carlo(query.mc.n, query.mc.seed, "m_transform", |rng| {
                    Ok(((s - h) * sampler.sample(rng)?.logdet()).exp())
                });
            }
            let outer = GammaOuter::new(p, s, fallback_rate(f, 1.0))?;
            monte_carlo(query.mc.n, query.mc.seed, "m_transform", |rng| {
                let (u, w) = outer.draw(rng);
                Ok(w * eval_checked(f, &u)?)
            })
        }
    }
}

/// Large-argument behaviour of a p = 1 integrand, used to pick the tail map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    Exponential,
    /// `g(x) ~ x^{-d}`.
    Power(f64),
    Unknown,
}

/// `∫_0^∞ x^{s-1} g(x) dx` with the `x^{s-1}` singularity at 0 mapped out,
/// and for power tails the range `[1, ∞)` mapped to `(0, 1]` by `x = 1/v`.
pub fn mellin_quadrature(g: impl Fn(f64) -> Result<f64>, s: f64, tail: Tail) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain(format!("scalar M-transform needs s > 0, got {s}")));
    }
    let eval = |x: f64| g(x).unwrap_or(f64::NAN);
    let head = integrate_left_power(eval, 0.0, 1.0, s, ABS_TOL, REL_TOL)?.value;
    let tail = match tail {
        Tail::Power(d) => {
            let e = d - s;
            if !(e > 0.0) {
                return Err(Error::domain(format!("M-transform diverges: tail decay {d} <= s = {s}")));
            }
            // ∫_1^∞ x^{s-1} g(x) dx = ∫_0^1 v^{e-1} [v^{-d} g(1/v)] dv
            integrate_left_power(|v| v.powf(-d) * eval(1.0 / v), 0.0, 1.0, e, ABS_TOL, REL_TOL)?.value
        }
        Tail::Exponential | Tail::Unknown => {
            integrate_to_infinity(|x| x.powf(s - 1.0) * eval(x), 1.0, ABS_TOL, REL_TOL)?.value
        }
    };
    Ok(head + tail)
}

/// Outer proposal `U ~ matrix gamma(s, bI)` with weight `Γ_p(s) b^{-ps} e^{b tr U}`.
struct GammaOuter {
    sampler: MatrixGammaSampler,
    log_c: f64,
    rate: f64,
}

impl GammaOuter {
    fn new(p: usize, s: f64, rate: f64) -> Result<Self> {
        if !(s > gamma_p_bound(p)) {
            return Err(Error::domain(format!("M-transform proposal needs s > (p-1)/2, got {s}")));
        }
        Ok(GammaOuter {
            sampler: MatrixGammaSampler::scalar(p, s, rate)?,
            log_c: log_gamma_p(p, s)? - p as f64 * s * rate.ln(),
            rate,
        })
    }

    fn draw(&self, rng: &mut RngStream) -> (PDMatrix, f64) {
        let u = self.sampler.draw(rng);
        let w = (self.log_c + self.rate * u.trace()).exp();
        (u, w)
    }
}

/// Outer proposal `U ~ type-2 beta(s, β)` with weight `B_p(s, β) |I+U|^{s+β}`;
/// suited to integrands with power-law tails.
struct BetaOuter {
    sampler: Type2BetaSampler,
    log_c: f64,
    total: f64,
}

impl BetaOuter {
    fn new(p: usize, s: f64, beta: f64) -> Result<Self> {
        Ok(BetaOuter {
            sampler: Type2BetaSampler::new(p, s, beta)?,
            log_c: log_beta_p(p, s, beta)?,
            total: s + beta,
        })
    }

    fn draw(&self, rng: &mut RngStream) -> (PDMatrix, f64) {
        let u = self.sampler.draw(rng);
        let w = (self.log_c + self.total * u.logdet_identity_plus()).exp();
        (u, w)
    }
}

/// One comparison in a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCase {
    pub params: BTreeMap<String, f64>,
    pub method: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub pass: bool,
}

impl VerificationCase {
    /// Passes when `|lhs - rhs| <= max(3 se, 1e-10)`.
    pub fn monte_carlo(params: BTreeMap<String, f64>, lhs: &EstimatorResult, rhs: f64) -> Self {
        VerificationCase {
            params,
            method: MTransformMethod::MonteCarlo.name().into(),
            lhs: lhs.estimate,
            rhs,
            se: lhs.std_error,
            pass: lhs.estimate.is_finite() && within_band(lhs.estimate, rhs, lhs.std_error),
        }
    }

    /// Two Monte Carlo estimates with independent errors.
    pub fn two_sample(params: BTreeMap<String, f64>, lhs: &EstimatorResult, rhs: &EstimatorResult) -> Self {
        let se = lhs.std_error.hypot(rhs.std_error);
        VerificationCase {
            params,
            method: "monte_carlo_pair".into(),
            lhs: lhs.estimate,
            rhs: rhs.estimate,
            se,
            pass: lhs.estimate.is_finite() && within_band(lhs.estimate, rhs.estimate, se),
        }
    }

    /// Passes when `|lhs - rhs| <= tol · max(1, |rhs|)`.
    pub fn deterministic(params: BTreeMap<String, f64>, method: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        VerificationCase {
            params,
            method: method.into(),
            lhs,
            rhs,
            se: 0.0,
            pass: (lhs - rhs).abs() <= tol * rhs.abs().max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub cases: Vec<VerificationCase>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>) -> Self {
        VerificationReport { name: name.into(), cases: Vec::new() }
    }

    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }
}

/// Builds a parameter map from `(name, value)` pairs.
pub fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn seed_for(mc: McConfig, i: usize) -> McConfig {
    McConfig { n: mc.n, seed: mc.seed.wrapping_add(i as u64) }
}

fn require_quadrature_dim(p: usize) -> Result<()> {
    if p == 1 {
        Ok(())
    } else {
        Err(Error::Unsupported("quadrature verification is p = 1 only".into()))
    }
}

fn require_exponential(f: &TestFunction) -> Result<()> {
    if f.decay_rate().is_some() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{} has no known exponential decay rate", f.label())))
    }
}

/// `M{K^{ζ,α} f}(s) = Γ_p(ζ+s)/Γ_p(α+ζ+s) · f*(s)`.
pub fn kober2_rhs(p: usize, zeta: f64, alpha: f64, s: f64, f: &TestFunction) -> Result<f64> {
    Ok((log_gamma_p(p, zeta + s)? - log_gamma_p(p, alpha + zeta + s)?).exp() * closed_form(f, p, s)?)
}

/// `M{I^{ζ,α} f}(s) = Γ_p(ζ+h-s)/Γ_p(α+ζ+h-s) · f*(s)`.
pub fn kober1_rhs(p: usize, zeta: f64, alpha: f64, s: f64, f: &TestFunction) -> Result<f64> {
    let h = half_p1(p);
    Ok((log_gamma_p(p, zeta + h - s)? - log_gamma_p(p, alpha + zeta + h - s)?).exp() * closed_form(f, p, s)?)
}

/// `M{W^{-α}(|T|^{-α} f)}(s) = Γ_p(s)/Γ_p(α+s) · f*(s)`.
pub fn weyl_rhs(p: usize, alpha: f64, s: f64, f: &TestFunction) -> Result<f64> {
    Ok((log_gamma_p(p, s)? - log_gamma_p(p, alpha + s)?).exp() * closed_form(f, p, s)?)
}

/// Monte Carlo `M{K^{ζ,α} f}(s)`: U from a matrix-gamma proposal, one inner
/// type-2 draw per U.
pub fn kober2_m_transform_mc(p: usize, zeta: f64, alpha: f64, f: &TestFunction, s: f64, mc: McConfig) -> Result<EstimatorResult> {
    check_alpha(p, alpha)?;
    check_zeta(zeta)?;
    let b = fallback_rate(f, 1.0);
    let outer = GammaOuter::new(p, s, b)?;
    let log_inv_gamma = -log_gamma_p(p, alpha)?;
    let beta_inner = if zeta > gamma_p_bound(p) { Some(Type2Proposal::new(p, alpha, zeta, 1.0)?) } else { None };
    monte_carlo(mc.n, mc.seed, "m_kober2", |rng| {
        let (u, wu) = outer.draw(rng);
        let fresh;
        let inner = match &beta_inner {
            Some(prop) => prop,
            None => {
                fresh = Type2Proposal::new(p, alpha, zeta, fallback_rate(f, u.min_eigenvalue()))?;
                &fresh
            }
        };
        let (sm, ws) = inner.draw(rng);
        let v = eval_checked(f, &product_point(&u.sqrt_na(), &sm, 1.0))?;
        Ok(if v == 0.0 { 0.0 } else { wu * ws * v * log_inv_gamma.exp() })
    })
}

/// Monte Carlo `M{I^{ζ,α} f}(s)`.
///
/// When f is a catalog density the defining double integral is sampled
/// directly: V ~ f and X = V + V^{1/2} T V^{1/2} with T type-2 beta(α, β).
/// The weight is `|V|^{s-h} |I+T|^{s-h-ζ+β}`; its T factor has finite
/// variance for β below `2(ζ+h-s) - (p-1)/2` and is constant at β = ζ+h-s,
/// so β sits halfway between the two. Otherwise U comes from a type-2 beta(s, ζ+h-s) proposal
/// with one inner type-1 beta draw; that route is heavy-tailed for p ≥ 2.
pub fn kober1_m_transform_mc(p: usize, zeta: f64, alpha: f64, f: &TestFunction, s: f64, mc: McConfig) -> Result<EstimatorResult> {
    check_alpha(p, alpha)?;
    check_zeta(zeta)?;
    let h = half_p1(p);
    if let Some(d) = f.as_density() {
        let gap = zeta + h - s;
        if gap > gamma_p_bound(p) {
            let sampler = d.sampler()?;
            let beta = gap + 0.5 * (gap - gamma_p_bound(p));
            let t = Type2BetaSampler::new(p, alpha, beta)?;
            let log_c = log_beta_p(p, alpha, beta)? - log_gamma_p(p, alpha)?;
            let t_power = s - h - zeta + beta;
            return monte_carlo(mc.n, mc.seed, "m_kober1", |rng| {
                let v = sampler.sample(rng)?;
                let tm = t.draw(rng);
                Ok((log_c + (s - h) * v.logdet() + t_power * tm.logdet_identity_plus()).exp())
            });
        }
    }
    let outer = BetaOuter::new(p, s, zeta + h - s)?;
    let inner = Type1BetaSampler::new(p, zeta + h, alpha)?;
    let c = (log_gamma_p(p, zeta + h)? - log_gamma_p(p, zeta + alpha + h)?).exp();
    monte_carlo(mc.n, mc.seed, "m_kober1", |rng| {
        let (u, wu) = outer.draw(rng);
        let y = inner.draw(rng);
        Ok(wu * c * eval_checked(f, &ratio_point(&u.sqrt_na(), &y, 1.0))?)
    })
}

/// Monte Carlo `M{W^{-α}(|T|^{-α} f)}(s)`.
pub fn weyl_m_transform_mc(p: usize, alpha: f64, f: &TestFunction, s: f64, mc: McConfig) -> Result<EstimatorResult> {
    check_alpha(p, alpha)?;
    let b = fallback_rate(f, 1.0);
    let outer = GammaOuter::new(p, s, b)?;
    let inner = MatrixGammaSampler::scalar(p, alpha, b)?;
    let log_c = -(p as f64) * alpha * b.ln();
    monte_carlo(mc.n, mc.seed, "m_weyl", |rng| {
        let (u, wu) = outer.draw(rng);
        let sm = inner.draw_na(rng);
        let tr = sm.trace();
        let t = PDMatrix::from_na_constructed(&(u.to_na() + sm));
        let v = eval_checked(f, &t)?;
        Ok(if v == 0.0 { 0.0 } else { wu * v * (log_c + b * tr - alpha * t.logdet()).exp() })
    })
}

fn check_s_pos(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("evaluation point s must be positive, got {s}")))
    }
}

/// Second-kind Kober transform identity at each s.
pub fn verify_kober2_mtransform(
    p: usize,
    zeta: f64,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    method: MTransformMethod,
    mc: McConfig,
) -> Result<VerificationReport> {
    check_alpha(p, alpha)?;
    check_zeta(zeta)?;
    let mut report = VerificationReport::new("kober2_mtransform");
    for (i, &s) in s_list.iter().enumerate() {
        if !(zeta + s > gamma_p_bound(p)) {
            return Err(Error::domain(format!("need zeta + s > (p-1)/2, got zeta={zeta}, s={s}")));
        }
        let rhs = kober2_rhs(p, zeta, alpha, s, f)?;
        let pm = params(&[("p", p as f64), ("zeta", zeta), ("alpha", alpha), ("s", s)]);
        report.cases.push(match method {
            MTransformMethod::Quadrature => {
                require_quadrature_dim(p)?;
                require_exponential(f)?;
                check_s_pos(s)?;
                let lhs = mellin_quadrature(|u| quad::kober2(zeta, alpha, f, u), s, Tail::Exponential)?;
                VerificationCase::deterministic(pm, "quadrature", lhs, rhs, QUADRATURE_TOL)
            }
            MTransformMethod::MonteCarlo => {
                VerificationCase::monte_carlo(pm, &kober2_m_transform_mc(p, zeta, alpha, f, s, seed_for(mc, i))?, rhs)
            }
            MTransformMethod::ClosedForm => return Err(Error::Unsupported("closed form is the right-hand side".into())),
        });
    }
    Ok(report)
}

/// First-kind Kober transform identity at each s (`s < ζ+1`).
pub fn verify_kober1_mtransform(
    p: usize,
    zeta: f64,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    method: MTransformMethod,
    mc: McConfig,
) -> Result<VerificationReport> {
    let mut r = kober1_family("kober1_mtransform", p, zeta, alpha, f, s_list, method, mc)?;
    r.cases.iter_mut().for_each(|c| {
        c.params.insert("zeta".into(), zeta);
    });
    Ok(r)
}

/// Weyl transform identity at each s.
pub fn verify_weyl_mtransform(
    p: usize,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    method: MTransformMethod,
    mc: McConfig,
) -> Result<VerificationReport> {
    check_alpha(p, alpha)?;
    let mut report = VerificationReport::new("weyl_mtransform");
    for (i, &s) in s_list.iter().enumerate() {
        if !(s > gamma_p_bound(p)) {
            return Err(Error::domain(format!("need s > (p-1)/2, got {s}")));
        }
        let rhs = weyl_rhs(p, alpha, s, f)?;
        let pm = params(&[("p", p as f64), ("alpha", alpha), ("s", s)]);
        report.cases.push(match method {
            MTransformMethod::Quadrature => {
                require_quadrature_dim(p)?;
                require_exponential(f)?;
                let g = f.clone().det_weighted(-alpha);
                let lhs = mellin_quadrature(|u| quad::weyl_right(alpha, &g, u), s, Tail::Exponential)?;
                VerificationCase::deterministic(pm, "quadrature", lhs, rhs, QUADRATURE_TOL)
            }
            MTransformMethod::MonteCarlo => {
                VerificationCase::monte_carlo(pm, &weyl_m_transform_mc(p, alpha, f, s, seed_for(mc, i))?, rhs)
            }
            MTransformMethod::ClosedForm => return Err(Error::Unsupported("closed form is the right-hand side".into())),
        });
    }
    Ok(report)
}

/// Riemann–Liouville transform identity `M{|X|^{-α} D^{-α} f}(s)` at each s (`s < 1`).
pub fn verify_rl_mtransform(
    p: usize,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    method: MTransformMethod,
    mc: McConfig,
) -> Result<VerificationReport> {
    kober1_family("rl_mtransform", p, 0.0, alpha, f, s_list, method, mc)
}

#[allow(clippy::too_many_arguments)]
fn kober1_family(
    name: &str,
    p: usize,
    zeta: f64,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    method: MTransformMethod,
    mc: McConfig,
) -> Result<VerificationReport> {
    check_alpha(p, alpha)?;
    check_zeta(zeta)?;
    let mut report = VerificationReport::new(name);
    for (i, &s) in s_list.iter().enumerate() {
        if !(s < zeta + 1.0) {
            return Err(Error::domain(format!("need s < zeta + 1, got zeta={zeta}, s={s}")));
        }
        let rhs = kober1_rhs(p, zeta, alpha, s, f)?;
        let pm = params(&[("p", p as f64), ("alpha", alpha), ("s", s)]);
        report.cases.push(match method {
            MTransformMethod::Quadrature => {
                require_quadrature_dim(p)?;
                require_exponential(f)?;
                check_s_pos(s)?;
                let lhs = mellin_quadrature(|u| quad::kober1(zeta, alpha, f, u), s, Tail::Power(zeta + alpha))?;
                VerificationCase::deterministic(pm, "quadrature", lhs, rhs, QUADRATURE_TOL)
            }
            MTransformMethod::MonteCarlo => {
                VerificationCase::monte_carlo(pm, &kober1_m_transform_mc(p, zeta, alpha, f, s, seed_for(mc, i))?, rhs)
            }
            MTransformMethod::ClosedForm => return Err(Error::Unsupported("closed form is the right-hand side".into())),
        });
    }
    Ok(report)
}

/// How the two factors are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// `X₂^{1/2} X₁ X₂^{1/2}`, `X₁ ~ type-1 beta(ζ+h, α)`.
    Product,
    /// `X₂^{1/2} X₁^{-1} X₂^{1/2}`, `X₁ ~ type-1 beta(ζ, α)`.
    Ratio,
}

impl Construction {
    pub fn name(self) -> &'static str {
        match self {
            Construction::Product => "mellin_product",
            Construction::Ratio => "mellin_ratio",
        }
    }
}

/// Closed-form `E|U|^{s-h}` for the construction.
pub fn convolution_rhs(p: usize, zeta: f64, alpha: f64, s: f64, f: &TestFunction, construction: Construction) -> Result<f64> {
    let h = half_p1(p);
    let beta_part = match construction {
        Construction::Product => {
            log_gamma_p(p, zeta + s)? + log_gamma_p(p, zeta + alpha + h)?
                - log_gamma_p(p, alpha + zeta + s)?
                - log_gamma_p(p, zeta + h)?
        }
        Construction::Ratio => {
            log_gamma_p(p, zeta + h - s)? + log_gamma_p(p, zeta + alpha)?
                - log_gamma_p(p, zeta)?
                - log_gamma_p(p, zeta + alpha + h - s)?
        }
    };
    Ok(beta_part.exp() * closed_form(f, p, s)?)
}

/// Empirical `E|U|^{s-h}` for each s, all from one sample of the
/// product or ratio construction.
pub fn convolution_moments(
    p: usize,
    zeta: f64,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    construction: Construction,
    mc: McConfig,
) -> Result<Vec<EstimatorResult>> {
    let h = half_p1(p);
    let d = f
        .as_density()
        .ok_or_else(|| Error::Unsupported("Mellin convolution needs f to be a catalog density".into()))?;
    let x2 = d.sampler()?;
    let x1: Arc<dyn MatrixSampler> = match construction {
        Construction::Product => type1_beta(p, zeta + h, alpha)?.sampler()?,
        Construction::Ratio => type1_beta(p, zeta, alpha)?.sampler()?,
    };
    monte_carlo_multi(mc.n, mc.seed, construction.name(), s_list.len(), |rng, out| {
        let a = x1.sample(rng)?;
        let c = x2.sample(rng)?;
        let u = match construction {
            Construction::Product => a.congruence(&c)?,
            Construction::Ratio => a.inverse().congruence(&c)?,
        };
        let ld = u.logdet();
        for (o, s) in out.iter_mut().zip(s_list) {
            *o = ((s - h) * ld).exp();
        }
        Ok(())
    })
}

/// [`convolution_moments`] against the factorized closed form.
pub fn verify_mellin_convolution(
    p: usize,
    zeta: f64,
    alpha: f64,
    f: &TestFunction,
    s_list: &[f64],
    construction: Construction,
    mc: McConfig,
) -> Result<VerificationReport> {
    let mut rhs = Vec::with_capacity(s_list.len());
    for &s in s_list {
        rhs.push(convolution_rhs(p, zeta, alpha, s, f, construction)?);
    }
    let est = convolution_moments(p, zeta, alpha, f, s_list, construction, mc)?;
    let mut report = VerificationReport::new(construction.name());
    for ((e, r), &s) in est.iter().zip(rhs).zip(s_list) {
        report
            .cases
            .push(VerificationCase::monte_carlo(params(&[("p", p as f64), ("zeta", zeta), ("alpha", alpha), ("s", s)]), e, r));
    }
    Ok(report)
}

/// `Γ_p(α+ζ+h)/Γ_p(ζ+h) · ∫ K^{ζ,α} f(U) dU`, which is 1 when f is a density.
pub fn operator_density_mass(p: usize, zeta: f64, alpha: f64, f: &TestFunction, mc: McConfig) -> Result<EstimatorResult> {
    let h = half_p1(p);
    let c = (log_gamma_p(p, alpha + zeta + h)? - log_gamma_p(p, zeta + h)?).exp();
    Ok(kober2_m_transform_mc(p, zeta, alpha, f, h, mc)?.scaled(c).relabeled("operator_density_mass"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::matrix_gamma;

    fn gamma_density(p: usize, shape: f64) -> TestFunction {
        TestFunction::density(matrix_gamma(p, shape, &PDMatrix::identity(p)).unwrap())
    }

    #[test]
    fn m_transform_examples() {
        let f = gamma_density(1, 1.0);
        let q = |method, s| MTransformQuery { s, method, mc: McConfig::new(50_000, 11) };
        let c = m_transform(&f, 1, &q(MTransformMethod::ClosedForm, 2.0)).unwrap();
        assert!((c.estimate - 1.0).abs() < 1e-14);
        let r = m_transform(&f, 1, &q(MTransformMethod::Quadrature, 2.0)).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-9);
        let g = gamma_density(2, 3.0);
        let m = m_transform(&g, 2, &q(MTransformMethod::MonteCarlo, 2.0)).unwrap();
        let exact = m_transform(&g, 2, &q(MTransformMethod::ClosedForm, 2.0)).unwrap().estimate;
        assert!(within_band(m.estimate, exact, m.std_error));
        let n = m_transform(&g, 2, &q(MTransformMethod::ClosedForm, 1.5)).unwrap();
        assert!((n.estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn right_hand_side_examples() {
        let f = gamma_density(1, 1.0);
        assert!((kober2_rhs(1, 1.0, 1.0, 1.0, &f).unwrap() - 0.5).abs() < 1e-14);
        assert!((kober1_rhs(1, 0.0, 1.0, 0.5, &f).unwrap() / closed_form(&f, 1, 0.5).unwrap() - 2.0).abs() < 1e-13);
        assert!((weyl_rhs(1, 1.0, 1.0, &f).unwrap() - 1.0).abs() < 1e-14);
        let rl = kober1_rhs(1, 0.0, 1.0, 0.5, &f).unwrap();
        assert!((rl - 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_identities() {
        let f = gamma_density(1, 1.0);
        let mc = McConfig::new(100, 1);
        for r in [
            verify_kober2_mtransform(1, 1.0, 1.0, &f, &[1.0, 1.5, 2.0], MTransformMethod::Quadrature, mc).unwrap(),
            verify_kober1_mtransform(1, 0.0, 1.0, &f, &[0.5, 0.75, 0.9], MTransformMethod::Quadrature, mc).unwrap(),
            verify_weyl_mtransform(1, 1.0, &f, &[1.0, 1.5, 2.0], MTransformMethod::Quadrature, mc).unwrap(),
            verify_rl_mtransform(1, 1.0, &f, &[0.3, 0.5, 0.7], MTransformMethod::Quadrature, mc).unwrap(),
        ] {
            assert!(r.all_pass(), "{r:#?}");
        }
    }

    #[test]
    fn domain_boundaries() {
        let f = gamma_density(2, 3.0);
        let mc = McConfig::new(100, 1);
        assert!(matches!(
            verify_kober2_mtransform(2, 0.0, 1.5, &f, &[0.5], MTransformMethod::MonteCarlo, mc),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            verify_kober1_mtransform(2, 1.0, 1.5, &f, &[2.0], MTransformMethod::MonteCarlo, mc),
            Err(Error::Domain(_))
        ));
        assert!(matches!(verify_rl_mtransform(2, 1.5, &f, &[1.0], MTransformMethod::MonteCarlo, mc), Err(Error::Domain(_))));
    }

    #[test]
    fn product_mean_example() {
        // uniform × exponential: E[U] = 1/2
        let f = gamma_density(1, 1.0);
        let r = verify_mellin_convolution(1, 0.0, 1.0, &f, &[2.0, 1.0], Construction::Product, McConfig::new(100_000, 4)).unwrap();
        assert!((r.cases[0].rhs - 0.5).abs() < 1e-14);
        assert!((r.cases[1].rhs - 1.0).abs() < 1e-14 && (r.cases[1].lhs - 1.0).abs() < 1e-14);
        assert!(r.all_pass(), "{r:#?}");
    }
}

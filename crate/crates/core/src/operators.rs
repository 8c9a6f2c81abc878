//! Fractional integral operators on the PD cone, evaluated as expectations.
//!
//! Substitutions used by the Monte Carlo paths (h = (p+1)/2):
//!
//! * Kober, second kind: `T = U^{1/2}(I+S)U^{1/2}` turns the operator into
//!   `Γ_p(α)^{-1} ∫ |S|^{α-h} |I+S|^{-(ζ+α)} f(T) dS`, a type-2 beta(α, ζ)
//!   expectation times `Γ_p(ζ)/Γ_p(ζ+α)`.
//! * Kober, first kind: `V = X^{1/2} Y X^{1/2}` gives
//!   `Γ_p(ζ+h)/Γ_p(ζ+α+h) · E[f(V)]`, `Y ~ type-1 beta(ζ+h, α)`.
//! * Weyl: `T = X + S`, `S` drawn from a matrix gamma with shape α.
//! * Pathway operators: the density g of `U = X₂^{1/2} X₁ X₂^{1/2}` (second
//!   kind) or `U = X₂^{1/2} X₁^{-1} X₂^{1/2}` (first kind), scaled by
//!   `Γ_p(γ+h)` respectively `Γ_p(γ)`.
//!
//! Every p = 1 operator also has a quadrature evaluation of the defining
//! scalar integral.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::densities::{
    hyper_weighted_beta, pathway_density, pathway_limit_matrix, MatrixDensity, PathwayKind, PathwayParams,
    PathwayScale, TestFunction,
};
use crate::error::{Error, Result};
use crate::pdcore::{PDMatrix, SymMatrix};
use crate::quadrature::{integrate, integrate_left_power, integrate_right_power, integrate_to_infinity, ABS_TOL, REL_TOL};
use crate::sampling::{
    monte_carlo, monte_carlo_multi, EstimatorResult, MatrixGammaSampler, RngStream, Type1BetaSampler,
    Type2BetaSampler,
};
use crate::special::{
    gamma_p_bound, half_p1, log_beta_p, log_gamma, log_gamma_p, rising_factorial, stirling_gamma_p,
};
use crate::zonal::{product_eigenvalues, HyperSeries, ZonalTable};

/// ESS fraction below which a heavy-tail warning is raised.
pub const HEAVY_TAIL_ESS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        McConfig { n, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    Quadrature,
    ClosedForm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess_fraction: Option<f64>,
    pub heavy_tail_warning: bool,
    /// Density of the product/ratio variable, for the pathway and
    /// hypergeometric operators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<EstimatorResult>,
    /// Magnitude of the last retained series degree.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_tail: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorEvaluation {
    pub value: EstimatorResult,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl OperatorEvaluation {
    fn monte_carlo(value: EstimatorResult, proposal: impl Into<String>) -> Self {
        let ess = value.ess_fraction();
        OperatorEvaluation {
            value,
            method: Method::MonteCarlo,
            diagnostics: Diagnostics {
                proposal: Some(proposal.into()),
                ess_fraction: Some(ess),
                heavy_tail_warning: ess < HEAVY_TAIL_ESS,
                ..Default::default()
            },
        }
    }

    fn quadrature(value: f64, label: &str) -> Self {
        OperatorEvaluation {
            value: EstimatorResult::exact(value, label),
            method: Method::Quadrature,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn estimate(&self) -> f64 {
        self.value.estimate
    }

    pub fn std_error(&self) -> f64 {
        self.value.std_error
    }

    fn with_constant(mut self, name: &str, v: f64) -> Self {
        self.diagnostics.constants.insert(name.to_string(), v);
        self
    }
}

/// Which operator, with its parameters. JSON form is tagged by `"kind"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum OperatorSpec {
    KoberII { zeta: f64, alpha: f64 },
    KoberI { zeta: f64, alpha: f64 },
    WeylRight { alpha: f64 },
    RLLeft { alpha: f64 },
    PathwayII { gamma: f64, eta: f64, q: f64, scale: PathwayScale },
    /// `rate` is `aη` (scalar) or `ηA` (matrix).
    PathwayIILimit { gamma: f64, rate: PathwayScale },
    PathwayI { gamma: f64, eta: f64, q: f64, scale: PathwayScale },
    PathwayILimit { gamma: f64, rate: PathwayScale },
    HyperII {
        zeta: f64,
        alpha: f64,
        weight: SymMatrix,
        a_list: Vec<f64>,
        b_list: Vec<f64>,
        #[serde(default = "default_kmax")]
        kmax: usize,
    },
}

fn default_kmax() -> usize {
    8
}

impl OperatorSpec {
    pub fn apply(&self, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
        let p = u.dim();
        match self {
            OperatorSpec::KoberII { zeta, alpha } => kober2_apply(*zeta, *alpha, f, u, mc),
            OperatorSpec::KoberI { zeta, alpha } => kober1_apply(*zeta, *alpha, f, u, mc),
            OperatorSpec::WeylRight { alpha } => weyl_right_apply(*alpha, f, u.as_sym(), mc),
            OperatorSpec::RLLeft { alpha } => rl_left_apply(*alpha, f, u, mc),
            OperatorSpec::PathwayII { gamma, eta, q, scale } => {
                pathway2_apply(&PathwayParams::new(p, PathwayKind::Second, *gamma, *eta, *q, scale.clone())?, f, u, mc)
            }
            OperatorSpec::PathwayIILimit { gamma, rate } => pathway2_limit_apply(*gamma, rate, f, u, mc),
            OperatorSpec::PathwayI { gamma, eta, q, scale } => {
                pathway1_apply(&PathwayParams::new(p, PathwayKind::First, *gamma, *eta, *q, scale.clone())?, f, u, mc)
            }
            OperatorSpec::PathwayILimit { gamma, rate } => pathway1_limit_apply(*gamma, rate, f, u, mc),
            OperatorSpec::HyperII { zeta, alpha, weight, a_list, b_list, kmax } => {
                let table = ZonalTable::shared(*kmax, p)?;
                let spec = HyperSpec { zeta: *zeta, alpha: *alpha, weight: weight.clone(), a: a_list.clone(), b: b_list.clone(), kmax: *kmax };
                hyper2_apply(&spec, f, u, mc, &table)
            }
        }
    }

    /// p = 1 quadrature of the defining integral.
    pub fn apply_quadrature(&self, f: &TestFunction, u: f64) -> Result<OperatorEvaluation> {
        let scalar = |s: &PathwayScale| {
            s.as_scalar().ok_or_else(|| Error::Unsupported("quadrature needs a scalar pathway scale".into()))
        };
        let v = match self {
            OperatorSpec::KoberII { zeta, alpha } => quad::kober2(*zeta, *alpha, f, u)?,
            OperatorSpec::KoberI { zeta, alpha } => quad::kober1(*zeta, *alpha, f, u)?,
            OperatorSpec::WeylRight { alpha } => quad::weyl_right(*alpha, f, u)?,
            OperatorSpec::RLLeft { alpha } => quad::rl_left(*alpha, f, u)?,
            OperatorSpec::PathwayII { gamma, eta, q, scale } => quad::pathway2(*gamma, *eta, *q, scalar(scale)?, f, u)?,
            OperatorSpec::PathwayIILimit { gamma, rate } => quad::pathway2_limit(*gamma, scalar(rate)?, f, u)?,
            OperatorSpec::PathwayI { gamma, eta, q, scale } => quad::pathway1(*gamma, *eta, *q, scalar(scale)?, f, u)?,
            OperatorSpec::PathwayILimit { gamma, rate } => quad::pathway1_limit(*gamma, scalar(rate)?, f, u)?,
            OperatorSpec::HyperII { zeta, alpha, weight, a_list, b_list, kmax } => {
                if weight.dim() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, found: weight.dim() });
                }
                quad::hyper2(*zeta, *alpha, weight.get(0, 0), a_list, b_list, *kmax, f, u)?
            }
        };
        Ok(OperatorEvaluation::quadrature(v, "quadrature"))
    }
}

pub(crate) fn check_alpha(p: usize, alpha: f64) -> Result<()> {
    if alpha > gamma_p_bound(p) {
        Ok(())
    } else {
        Err(Error::domain(format!("operator order alpha must exceed (p-1)/2 = {}, got {alpha}", gamma_p_bound(p))))
    }
}

pub(crate) fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > -1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("zeta must exceed -1, got {zeta}")))
    }
}

pub(crate) fn eval_checked(f: &TestFunction, x: &PDMatrix) -> Result<f64> {
    let v = f.eval(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonfiniteIntegrand { value: v })
    }
}

/// `c · R (I + S) R` with `R = U^{1/2}`.
pub(crate) fn product_point(r: &DMatrix<f64>, s: &PDMatrix, c: f64) -> PDMatrix {
    let mut m = s.to_na();
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0;
    }
    PDMatrix::from_na_constructed(&((r * m * r) * c))
}

/// `c · R Y R`.
pub(crate) fn ratio_point(r: &DMatrix<f64>, y: &PDMatrix, c: f64) -> PDMatrix {
    PDMatrix::from_na_constructed(&((r * y.to_na() * r) * c))
}

/// Proposal for `∫ |S|^{a-h} |I+S|^{-(a+b)} H(S) dS`.
///
/// With `b > (p-1)/2` the integral is `B_p(a, b) E[H(S)]`, `S ~ type-2 beta(a, b)`.
/// Otherwise S is drawn from a matrix gamma(a, rate) and weighted by
/// `Γ_p(a) rate^{-pa} e^{rate·tr S} |I+S|^{-(a+b)}`.
pub(crate) struct Type2Proposal {
    draw: Type2Draw,
    log_c: f64,
    label: String,
}

enum Type2Draw {
    Beta(Type2BetaSampler),
    Gamma { sampler: MatrixGammaSampler, rate: f64, total: f64 },
}

impl Type2Proposal {
    pub(crate) fn new(p: usize, a: f64, b: f64, rate: f64) -> Result<Self> {
        if b > gamma_p_bound(p) {
            Ok(Type2Proposal {
                draw: Type2Draw::Beta(Type2BetaSampler::new(p, a, b)?),
                log_c: log_beta_p(p, a, b)?,
                label: format!("type2_beta({a}, {b})"),
            })
        } else {
            Ok(Type2Proposal {
                draw: Type2Draw::Gamma { sampler: MatrixGammaSampler::scalar(p, a, rate)?, rate, total: a + b },
                log_c: log_gamma_p(p, a)? - p as f64 * a * rate.ln(),
                label: format!("matrix_gamma({a}, rate {rate})"),
            })
        }
    }

    /// A draw S with its weight; the integral is `E[weight · H(S)]`.
    pub(crate) fn draw(&self, rng: &mut RngStream) -> (PDMatrix, f64) {
        match &self.draw {
            Type2Draw::Beta(s) => (s.draw(rng), self.log_c.exp()),
            Type2Draw::Gamma { sampler, rate, total } => {
                let s = sampler.draw(rng);
                let w = (self.log_c + rate * s.trace() - total * s.logdet_identity_plus()).exp();
                (s, w)
            }
        }
    }
}

/// The integral of [`Type2Proposal`] for the k outputs of `h`.
#[allow(clippy::too_many_arguments)]
fn type2_kernel<H>(
    p: usize,
    a: f64,
    b: f64,
    rate: f64,
    k: usize,
    mc: McConfig,
    label: &str,
    h: H,
) -> Result<(Vec<EstimatorResult>, String)>
where
    H: Fn(&PDMatrix, &mut [f64]) -> Result<()> + Sync,
{
    let prop = Type2Proposal::new(p, a, b, rate)?;
    let est = monte_carlo_multi(mc.n, mc.seed, label, k, |rng, out| {
        let (s, w) = prop.draw(rng);
        h(&s, out)?;
        out.iter_mut().for_each(|v| *v *= w);
        Ok(())
    })?;
    Ok((est, prop.label.clone()))
}

fn single(v: (Vec<EstimatorResult>, String)) -> (EstimatorResult, String) {
    let (mut e, prop) = v;
    (e.swap_remove(0), prop)
}

/// Matrix-gamma fallback rate: f's decay scaled by the smallest eigenvalue
/// of the congruence it is seen through.
pub(crate) fn fallback_rate(f: &TestFunction, scale: f64) -> f64 {
    f.decay_rate().map(|r| r * scale).filter(|r| *r > 0.0).unwrap_or(1.0)
}

/// Kober operator of the second kind,
/// `|U|^ζ Γ_p(α)^{-1} ∫_{T>U} |T-U|^{α-(p+1)/2} |T|^{-ζ-α} f(T) dT`.
pub fn kober2_apply(zeta: f64, alpha: f64, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    let p = u.dim();
    check_alpha(p, alpha)?;
    check_zeta(zeta)?;
    let r = u.sqrt_na();
    let rate = fallback_rate(f, u.min_eigenvalue());
    let (est, prop) = single(type2_kernel(p, alpha, zeta, rate, 1, mc, "kober2", |s, out| {
        out[0] = eval_checked(f, &product_point(&r, s, 1.0))?;
        Ok(())
    })?);
    let value = est.scaled((-log_gamma_p(p, alpha)?).exp());
    Ok(OperatorEvaluation::monte_carlo(value, prop))
}

/// Kober operator of the first kind,
/// `|X|^{-ζ-α} Γ_p(α)^{-1} ∫_{O<V<X} |X-V|^{α-(p+1)/2} |V|^ζ f(V) dV`.
pub fn kober1_apply(zeta: f64, alpha: f64, f: &TestFunction, x: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    let p = x.dim();
    check_alpha(p, alpha)?;
    check_zeta(zeta)?;
    let h = half_p1(p);
    let sampler = Type1BetaSampler::new(p, zeta + h, alpha)?;
    let r = x.sqrt_na();
    let est = monte_carlo(mc.n, mc.seed, "kober1", |rng| eval_checked(f, &ratio_point(&r, &sampler.draw(rng), 1.0)))?;
    let c = (log_gamma_p(p, zeta + h)? - log_gamma_p(p, zeta + alpha + h)?).exp();
    Ok(OperatorEvaluation::monte_carlo(est.scaled(c), format!("type1_beta({}, {alpha})", zeta + h)))
}

/// Right-sided Weyl integral `Γ_p(α)^{-1} ∫_{T>X} |T-X|^{α-(p+1)/2} f(T) dT`
/// for positive semidefinite X, with `T = X + S`, `S ~ matrix gamma(α, bI)`,
/// b taken from f's decay rate (1 when unknown).
pub fn weyl_right_apply(alpha: f64, f: &TestFunction, x: &SymMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    let p = x.dim();
    check_alpha(p, alpha)?;
    let eig = x.eigenvalues();
    if *eig.last().expect("p >= 1") < -1e-12 * eig[0].abs().max(1.0) {
        return Err(Error::domain("Weyl integral needs a positive semidefinite base point"));
    }
    let b = fallback_rate(f, 1.0);
    let sampler = MatrixGammaSampler::scalar(p, alpha, b)?;
    let xs = x.to_na();
    let log_c = -(p as f64) * alpha * b.ln();
    let est = monte_carlo(mc.n, mc.seed, "weyl", |rng| {
        let s = sampler.draw_na(rng);
        let tr = s.trace();
        let t = PDMatrix::from_na_constructed(&(&xs + s));
        let v = eval_checked(f, &t)?;
        Ok(if v == 0.0 { 0.0 } else { v * (log_c + b * tr).exp() })
    })?;
    Ok(OperatorEvaluation::monte_carlo(est, format!("matrix_gamma({alpha}, rate {b})")))
}

/// Left-sided Riemann–Liouville integral `|X|^α · I_X^{0,α} f`.
pub fn rl_left_apply(alpha: f64, f: &TestFunction, x: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    let mut e = kober1_apply(0.0, alpha, f, x, mc)?;
    e.value = e.value.scaled((alpha * x.logdet()).exp()).relabeled("rl");
    Ok(e)
}

/// Pathway operator of the second kind: `Γ_p(γ+h) · g(U)` with g the
/// density of `X₂^{1/2} X₁ X₂^{1/2}`, `X₁` pathway-distributed, `X₂ ~ f`.
///
/// Scalar scale: with `c = a(1-q)`, `a₂ = η/(1-q) + h`,
/// `g(U) = c^{ph} B_p(a₂, γ) / B_p(γ+h, a₂) · E[f(c U^{1/2}(I+S)U^{1/2})]`,
/// `S ~ type-2 beta(a₂, γ)`. A non-scalar matrix scale goes through the
/// generic product density and needs f to be a sampleable density.
pub fn pathway2_apply(params: &PathwayParams, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    if params.kind != PathwayKind::Second {
        return Err(Error::domain("pathway2 needs second-kind parameters"));
    }
    params.validate()?;
    let p = u.dim();
    let h = half_p1(p);
    let pf = p as f64;
    let outer = log_gamma_p(p, params.gamma + h)?;
    let Some(a) = params.scale.as_scalar() else {
        let f1 = pathway_density(params.clone())?;
        let g = product_density_mc(&f1, f, u, mc)?;
        return Ok(density_evaluation(g, outer, "generic product"));
    };
    let c = a * (1.0 - params.q);
    let a2 = params.eta_prime() + h;
    let rate = fallback_rate(f, c * u.min_eigenvalue());
    let r = u.sqrt_na();
    let (e, prop) = single(type2_kernel(p, a2, params.gamma, rate, 1, mc, "pathway2", |s, out| {
        out[0] = eval_checked(f, &product_point(&r, s, c))?;
        Ok(())
    })?);
    let g = e.scaled((pf * h * c.ln() - log_beta_p(p, params.gamma + h, a2)?).exp());
    Ok(density_evaluation(g, outer, prop).with_constant("c", c))
}

fn density_evaluation(g: EstimatorResult, log_outer: f64, proposal: impl Into<String>) -> OperatorEvaluation {
    let mut e = OperatorEvaluation::monte_carlo(g.scaled(log_outer.exp()), proposal);
    e.diagnostics.density = Some(g);
    e.with_constant("log_outer_gamma", log_outer)
}

fn scalar_or_matrix_rate(p: usize, rate: &PathwayScale) -> Result<(Option<f64>, PDMatrix)> {
    match rate {
        PathwayScale::Scalar(b) if *b > 0.0 => Ok((Some(*b), PDMatrix::scaled_identity(p, *b))),
        PathwayScale::Scalar(b) => Err(Error::domain(format!("limit rate must be positive, got {b}"))),
        PathwayScale::Matrix(m) if m.dim() != p => Err(Error::DimensionMismatch { expected: p, found: m.dim() }),
        PathwayScale::Matrix(m) => Ok((rate.as_scalar(), m.clone())),
    }
}

/// q → 1 limit of the second-kind pathway operator: `Γ_p(γ+h) · g(U)`,
/// X₁ ~ matrix gamma(γ+h, rate). With scalar rate b and γ > (p-1)/2,
/// `g(U) = b^{ph} Γ_p(γ)/Γ_p(γ+h) · E[f(U^{1/2} W^{-1} U^{1/2})]`,
/// `W ~ matrix gamma(γ, b)`.
pub fn pathway2_limit_apply(gamma: f64, rate: &PathwayScale, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    let p = u.dim();
    let h = half_p1(p);
    check_zeta(gamma)?;
    let (scalar, rate_m) = scalar_or_matrix_rate(p, rate)?;
    let outer = log_gamma_p(p, gamma + h)?;
    match scalar {
        Some(b) if gamma > gamma_p_bound(p) => {
            let sampler = MatrixGammaSampler::scalar(p, gamma, b)?;
            let r = u.sqrt_na();
            let e = monte_carlo(mc.n, mc.seed, "pathway2_limit", |rng| {
                eval_checked(f, &ratio_point(&r, &sampler.draw(rng).inverse(), 1.0))
            })?;
            let c = (p as f64 * h * b.ln() + log_gamma_p(p, gamma)? - outer).exp();
            Ok(density_evaluation(e.scaled(c), outer, format!("matrix_gamma({gamma}, rate {b})")))
        }
        _ => {
            let f1 = pathway_limit_matrix(p, gamma, &rate_m, PathwayKind::Second)?;
            Ok(density_evaluation(product_density_mc(&f1, f, u, mc)?, outer, "generic product"))
        }
    }
}

/// Pathway operator of the first kind: `Γ_p(γ) · g(U)` with g the density of
/// `X₂^{1/2} X₁^{-1} X₂^{1/2}`. Scalar scale:
/// `g(U) = c^{-ph} B_p(γ+h, a₂)/B_p(γ, a₂) · E[f(c^{-1} U^{1/2} Y U^{1/2})]`,
/// `Y ~ type-1 beta(γ+h, a₂)`.
pub fn pathway1_apply(params: &PathwayParams, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    if params.kind != PathwayKind::First {
        return Err(Error::domain("pathway1 needs first-kind parameters"));
    }
    params.validate()?;
    let p = u.dim();
    let h = half_p1(p);
    let pf = p as f64;
    let outer = log_gamma_p(p, params.gamma)?;
    let Some(a) = params.scale.as_scalar() else {
        let f1 = pathway_density(params.clone())?;
        return Ok(density_evaluation(ratio_density_mc(&f1, f, u, mc)?, outer, "generic ratio"));
    };
    let c = a * (1.0 - params.q);
    let a2 = params.eta_prime() + h;
    let sampler = Type1BetaSampler::new(p, params.gamma + h, a2)?;
    let r = u.sqrt_na();
    let e = monte_carlo(mc.n, mc.seed, "pathway1", |rng| eval_checked(f, &ratio_point(&r, &sampler.draw(rng), 1.0 / c)))?;
    let k = (-pf * h * c.ln() + log_beta_p(p, params.gamma + h, a2)? - log_beta_p(p, params.gamma, a2)?).exp();
    Ok(density_evaluation(e.scaled(k), outer, format!("type1_beta({}, {a2})", params.gamma + h)).with_constant("c", c))
}

/// q → 1 limit of the first-kind pathway operator: `Γ_p(γ) · g(U)` with
/// `g(U) = b^{-ph} Γ_p(γ+h)/Γ_p(γ) · E[f(U^{1/2} W U^{1/2})]`,
/// `W ~ matrix gamma(γ+h, b)`.
pub fn pathway1_limit_apply(gamma: f64, rate: &PathwayScale, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<OperatorEvaluation> {
    let p = u.dim();
    let h = half_p1(p);
    let (scalar, rate_m) = scalar_or_matrix_rate(p, rate)?;
    let outer = log_gamma_p(p, gamma)?;
    match scalar {
        Some(b) => {
            let sampler = MatrixGammaSampler::scalar(p, gamma + h, b)?;
            let r = u.sqrt_na();
            let e = monte_carlo(mc.n, mc.seed, "pathway1_limit", |rng| {
                eval_checked(f, &ratio_point(&r, &sampler.draw(rng), 1.0))
            })?;
            let c = (-(p as f64) * h * b.ln() + log_gamma_p(p, gamma + h)? - outer).exp();
            Ok(density_evaluation(e.scaled(c), outer, format!("matrix_gamma({}, rate {b})", gamma + h)))
        }
        None => {
            let f1 = pathway_limit_matrix(p, gamma, &rate_m, PathwayKind::First)?;
            Ok(density_evaluation(ratio_density_mc(&f1, f, u, mc)?, outer, "generic ratio"))
        }
    }
}

fn density_of(f: &TestFunction) -> Result<&Arc<MatrixDensity>> {
    f.as_density().ok_or_else(|| Error::Unsupported("this route needs f to be a catalog density".into()))
}

/// Density of `U = X₂^{1/2} X₁ X₂^{1/2}` at U:
/// `E_{V~f}[f₁(V^{-1/2} U V^{-1/2}) |V|^{-(p+1)/2}]`.
pub fn product_density_mc(f1: &MatrixDensity, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<EstimatorResult> {
    let p = u.dim();
    let h = half_p1(p);
    let sampler = density_of(f)?.sampler()?;
    let un = u.to_na();
    monte_carlo(mc.n, mc.seed, "product_density", |rng| {
        let v = sampler.sample(rng)?;
        let r = v.spectral_map_na(|x| 1.0 / x.sqrt());
        let x1 = PDMatrix::from_na_constructed(&(&r * &un * &r));
        let lp = f1.log_pdf(&x1);
        Ok(if lp == f64::NEG_INFINITY { 0.0 } else { (lp - h * v.logdet()).exp() })
    })
}

/// Density of `U = X₂^{1/2} X₁^{-1} X₂^{1/2}` at U:
/// `E_{V~f}[f₁(V^{1/2} U^{-1} V^{1/2}) |V|^{(p+1)/2}] |U|^{-(p+1)}`.
pub fn ratio_density_mc(f1: &MatrixDensity, f: &TestFunction, u: &PDMatrix, mc: McConfig) -> Result<EstimatorResult> {
    let p = u.dim();
    let h = half_p1(p);
    let sampler = density_of(f)?.sampler()?;
    let uinv = u.inverse().to_na();
    let log_u = u.logdet();
    monte_carlo(mc.n, mc.seed, "ratio_density", |rng| {
        let v = sampler.sample(rng)?;
        let r = v.sqrt_na();
        let x1 = PDMatrix::from_na_constructed(&(&r * &uinv * &r));
        let lp = f1.log_pdf(&x1);
        Ok(if lp == f64::NEG_INFINITY { 0.0 } else { (lp + h * v.logdet() - 2.0 * h * log_u).exp() })
    })
}

/// Parameters of the hypergeometric (Saigo-type) operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpec {
    pub zeta: f64,
    pub alpha: f64,
    pub weight: SymMatrix,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub kmax: usize,
}

/// Hypergeometric generalization of the second-kind Kober operator:
/// `Γ_p(ζ+h)/Γ_p(ζ+α+h) · g(U)` with g the density of the product whose
/// first factor has the hypergeometric-weighted beta law. Each series degree
/// is estimated from the same draws; the last one is reported as the tail.
pub fn hyper2_apply(
    spec: &HyperSpec,
    f: &TestFunction,
    u: &PDMatrix,
    mc: McConfig,
    table: &Arc<ZonalTable>,
) -> Result<OperatorEvaluation> {
    let p = u.dim();
    let h = half_p1(p);
    let HyperSpec { zeta, alpha, weight, a, b, kmax } = spec;
    let (zeta, alpha, kmax) = (*zeta, *alpha, *kmax);
    check_alpha(p, alpha)?;
    if weight.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, found: weight.dim() });
    }
    let density = hyper_weighted_beta(zeta, alpha, weight, a, b, table, kmax)?;
    let log_cf = -density.log_normalizer();
    let series = HyperSeries::new(a, b, table.clone(), kmax)?;
    let r = u.sqrt_na();
    let un = u.to_na();
    let rate = fallback_rate(f, u.min_eigenvalue());
    let (est, prop) = type2_kernel(p, alpha, zeta, rate, kmax + 2, mc, "hyper2", |s, out| {
        let v = product_point(&r, s, 1.0);
        let fv = eval_checked(f, &v)?;
        let ri = v.spectral_map_na(|x| 1.0 / x.sqrt());
        let x1 = PDMatrix::from_na_constructed(&(&ri * &un * &ri));
        let terms = series.terms_by_degree(&product_eigenvalues(weight, &x1)?)?;
        let mut total = 0.0;
        for (o, t) in out.iter_mut().zip(&terms) {
            *o = t * fv;
            total += t * fv;
        }
        out[kmax + 1] = total;
        Ok(())
    })?;
    let outer = log_gamma_p(p, zeta + h)? - log_gamma_p(p, zeta + alpha + h)?;
    let g = est[kmax + 1].scaled((-log_cf).exp());
    let scale = (outer - log_cf).exp();
    let tail = est[kmax].estimate.abs() * scale;
    let mut e = OperatorEvaluation::monte_carlo(est[kmax + 1].scaled(scale).relabeled("hyper2"), prop);
    e.diagnostics.density = Some(g);
    e.diagnostics.series_tail = Some(tail);
    for (k, t) in est[..=kmax].iter().enumerate() {
        e.diagnostics.constants.insert(format!("degree_{k}"), t.estimate * scale);
    }
    Ok(e.with_constant("log_cf", log_cf))
}

/// `Γ_p(ζ+λ)/Γ_p(ζ+α+λ)`: the second-kind Kober operator maps `|T|^{-λ}` to
/// this multiple of `|U|^{-λ}`.
pub fn kober2_eigen_constant(p: usize, zeta: f64, alpha: f64, lambda: f64) -> Result<f64> {
    Ok((log_gamma_p(p, zeta + lambda)? - log_gamma_p(p, zeta + alpha + lambda)?).exp())
}

/// `Γ_p(ζ+λ+h)/Γ_p(ζ+α+λ+h)`: the first-kind Kober operator maps `|V|^λ` to
/// this multiple of `|X|^λ`.
pub fn kober1_eigen_constant(p: usize, zeta: f64, alpha: f64, lambda: f64) -> Result<f64> {
    let h = half_p1(p);
    Ok((log_gamma_p(p, zeta + lambda + h)? - log_gamma_p(p, zeta + alpha + lambda + h)?).exp())
}

/// Second-kind pathway operator on `|V|^{-λ}`, in closed form:
/// `Γ_p(γ+h) c^{ph-pλ} B_p(a₂, γ+λ)/B_p(γ+h, a₂) |U|^{-λ}`.
pub fn pathway2_eigen_value(params: &PathwayParams, lambda: f64, log_det_u: f64) -> Result<f64> {
    let p = params.p;
    let (h, pf) = (half_p1(p), p as f64);
    let a = params.scale.as_scalar().ok_or_else(|| Error::Unsupported("closed form needs a scalar scale".into()))?;
    let c = a * (1.0 - params.q);
    let a2 = params.eta_prime() + h;
    Ok((log_gamma_p(p, params.gamma + h)? + (pf * h - pf * lambda) * c.ln() + log_beta_p(p, a2, params.gamma + lambda)?
        - log_beta_p(p, params.gamma + h, a2)?
        - lambda * log_det_u)
        .exp())
}

/// Limit of [`pathway2_eigen_value`]: `b^{ph-pλ} Γ_p(γ+λ) |U|^{-λ}`.
pub fn pathway2_limit_eigen_value(p: usize, gamma: f64, b: f64, lambda: f64, log_det_u: f64) -> Result<f64> {
    let (h, pf) = (half_p1(p), p as f64);
    Ok(((pf * h - pf * lambda) * b.ln() + log_gamma_p(p, gamma + lambda)? - lambda * log_det_u).exp())
}

/// First-kind pathway operator on `|V|^λ`:
/// `Γ_p(γ) c^{-ph-pλ} B_p(γ+h+λ, a₂)/B_p(γ, a₂) |U|^λ`.
pub fn pathway1_eigen_value(params: &PathwayParams, lambda: f64, log_det_u: f64) -> Result<f64> {
    let p = params.p;
    let (h, pf) = (half_p1(p), p as f64);
    let a = params.scale.as_scalar().ok_or_else(|| Error::Unsupported("closed form needs a scalar scale".into()))?;
    let c = a * (1.0 - params.q);
    let a2 = params.eta_prime() + h;
    Ok((log_gamma_p(p, params.gamma)? - (pf * h + pf * lambda) * c.ln() + log_beta_p(p, params.gamma + h + lambda, a2)?
        - log_beta_p(p, params.gamma, a2)?
        + lambda * log_det_u)
        .exp())
}

/// Limit of [`pathway1_eigen_value`]: `b^{-ph-pλ} Γ_p(γ+h+λ) |U|^λ`.
pub fn pathway1_limit_eigen_value(p: usize, gamma: f64, b: f64, lambda: f64, log_det_u: f64) -> Result<f64> {
    let (h, pf) = (half_p1(p), p as f64);
    Ok((-(pf * h + pf * lambda) * b.ln() + log_gamma_p(p, gamma + h + lambda)? + lambda * log_det_u).exp())
}

/// `|I - a(1-q)X|^{η/(1-q)}` and its q → 1 limit `e^{-aη tr X}`.
pub fn pathway_kernel(q: f64, a: f64, eta: f64, x: &PDMatrix) -> Result<(f64, f64)> {
    if !(q < 1.0 && a > 0.0 && eta > 0.0) {
        return Err(Error::domain("pathway kernel needs q < 1, a > 0, eta > 0"));
    }
    let c = a * (1.0 - q);
    let kernel = match x.scale(c).logdet_identity_minus() {
        Some(l) => (eta / (1.0 - q) * l).exp(),
        None => 0.0,
    };
    Ok((kernel, (-a * eta * x.trace()).exp()))
}

/// Normalizing constant of the second-kind pathway density written as
/// `C₁ |X|^γ |I - a(1-q)X|^{η/(1-q)}`, in logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwayConstant {
    /// `log C₁` from exact Γ_p values.
    pub log_exact: f64,
    /// `log C₁` with the two η-dependent Γ_p factors replaced by their
    /// first Stirling terms.
    pub log_stirling: f64,
    /// `log[(aη)^{p(γ+h)} / Γ_p(γ+h)]`.
    pub log_limit: f64,
}

pub fn pathway_constant(p: usize, gamma: f64, a: f64, eta: f64, q: f64) -> Result<PathwayConstant> {
    let params = PathwayParams::scalar(p, PathwayKind::Second, gamma, eta, q, a)?;
    let (h, pf) = (half_p1(p), p as f64);
    let c = a * (1.0 - q);
    let ep = params.eta_prime();
    let lead = pf * (gamma + h) * c.ln() - log_gamma_p(p, gamma + h)?;
    let log_exact = lead + log_gamma_p(p, gamma + ep + pf + 1.0)? - log_gamma_p(p, ep + h)?;
    let log_stirling = lead + stirling_gamma_p(p, ep, gamma + pf + 1.0) - stirling_gamma_p(p, ep, h);
    let log_limit = pf * (gamma + h) * (a * eta).ln() - log_gamma_p(p, gamma + h)?;
    Ok(PathwayConstant { log_exact, log_stirling, log_limit })
}

/// Scalar quadrature of the defining integrals (p = 1).
pub mod quad {
    use super::*;

    fn check_scalar(x: f64) -> Result<()> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("scalar base point must be positive, got {x}")))
        }
    }

    /// `u^ζ Γ(α)^{-1} ∫_u^∞ (t-u)^{α-1} t^{-ζ-α} f(t) dt`.
    pub fn kober2(zeta: f64, alpha: f64, f: &TestFunction, u: f64) -> Result<f64> {
        check_scalar(u)?;
        check_alpha(1, alpha)?;
        let r = integrate_left_power(|t| t.powf(-zeta - alpha) * f.eval_scalar(t), u, f64::INFINITY, alpha, ABS_TOL, REL_TOL)?;
        Ok(u.powf(zeta) * r.value / log_gamma(alpha).exp())
    }

    /// `∫_0^x (x-v)^{α-1} g(v) dv`. The lower half is split at 1, 2, 4, ...
    /// so that mass of g near the origin is found for large x.
    fn left_sided(g: impl Fn(f64) -> f64, x: f64, alpha: f64) -> Result<f64> {
        let half = 0.5 * x;
        let mut acc = integrate_right_power(&g, half, x, alpha, ABS_TOL, REL_TOL)?.value;
        let mut lo = 0.0;
        let mut hi = half.min(1.0);
        while lo < half {
            acc += integrate(|v| (x - v).powf(alpha - 1.0) * g(v), lo, hi, ABS_TOL, REL_TOL)?.value;
            lo = hi;
            hi = (2.0 * hi).min(half);
        }
        Ok(acc)
    }

    /// `x^{-ζ-α} Γ(α)^{-1} ∫_0^x (x-v)^{α-1} v^ζ f(v) dv`.
    pub fn kober1(zeta: f64, alpha: f64, f: &TestFunction, x: f64) -> Result<f64> {
        check_scalar(x)?;
        check_alpha(1, alpha)?;
        let r = left_sided(|v| v.powf(zeta) * f.eval_scalar(v), x, alpha)?;
        Ok(x.powf(-zeta - alpha) * r / log_gamma(alpha).exp())
    }

    /// `Γ(α)^{-1} ∫_x^∞ (t-x)^{α-1} f(t) dt`, x >= 0.
    pub fn weyl_right(alpha: f64, f: &TestFunction, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::domain("Weyl base point must be nonnegative"));
        }
        check_alpha(1, alpha)?;
        let r = integrate_left_power(|t| f.eval_scalar(t), x, f64::INFINITY, alpha, ABS_TOL, REL_TOL)?;
        Ok(r.value / log_gamma(alpha).exp())
    }

    /// `Γ(α)^{-1} ∫_0^x (x-v)^{α-1} f(v) dv`.
    pub fn rl_left(alpha: f64, f: &TestFunction, x: f64) -> Result<f64> {
        check_scalar(x)?;
        check_alpha(1, alpha)?;
        Ok(left_sided(|v| f.eval_scalar(v), x, alpha)? / log_gamma(alpha).exp())
    }

    fn log_beta(a: f64, b: f64) -> f64 {
        log_gamma(a) + log_gamma(b) - log_gamma(a + b)
    }

    /// `Γ(γ+1) ∫_{cu}^∞ f₁(u/v) f(v) v^{-1} dv` with the second-kind pathway
    /// density `f₁(x) = c (cx)^γ (1-cx)^{η'} / B(γ+1, η'+1)`.
    pub fn pathway2(gamma: f64, eta: f64, q: f64, a: f64, f: &TestFunction, u: f64) -> Result<f64> {
        check_scalar(u)?;
        PathwayParams::scalar(1, PathwayKind::Second, gamma, eta, q, a)?;
        let c = a * (1.0 - q);
        let ep = eta / (1.0 - q);
        let lb = log_beta(gamma + 1.0, ep + 1.0);
        let f1 = |x: f64| {
            let w = c * x;
            if w >= 1.0 {
                0.0
            } else {
                (c.ln() + gamma * w.ln() + ep * (-w).ln_1p() - lb).exp()
            }
        };
        let r = integrate_to_infinity(|v| f1(u / v) * f.eval_scalar(v) / v, c * u, ABS_TOL, REL_TOL)?;
        Ok(log_gamma(gamma + 1.0).exp() * r.value)
    }

    /// `Γ(γ+1) ∫_0^∞ f₁(u/v) f(v) v^{-1} dv`, `f₁ = gamma(γ+1, rate b)`.
    pub fn pathway2_limit(gamma: f64, b: f64, f: &TestFunction, u: f64) -> Result<f64> {
        check_scalar(u)?;
        check_zeta(gamma)?;
        let f1 = |x: f64| ((gamma + 1.0) * b.ln() + gamma * x.ln() - b * x).exp();
        let g = |v: f64| f1(u / v) * f.eval_scalar(v) / v;
        let head = integrate(g, 0.0, u, ABS_TOL, REL_TOL)?.value;
        let tail = integrate_to_infinity(g, u, ABS_TOL, REL_TOL)?.value;
        Ok(head + tail)
    }

    /// `Γ(γ) ∫_0^{u/c} f₁(v/u) f(v) v u^{-2} dv` with the first-kind pathway
    /// density `f₁(x) = c (cx)^{γ-1} (1-cx)^{η'} / B(γ, η'+1)`.
    pub fn pathway1(gamma: f64, eta: f64, q: f64, a: f64, f: &TestFunction, u: f64) -> Result<f64> {
        check_scalar(u)?;
        PathwayParams::scalar(1, PathwayKind::First, gamma, eta, q, a)?;
        let c = a * (1.0 - q);
        let ep = eta / (1.0 - q);
        let lb = log_beta(gamma, ep + 1.0);
        let f1 = |x: f64| {
            let w = c * x;
            if w >= 1.0 {
                0.0
            } else {
                (c.ln() + (gamma - 1.0) * w.ln() + ep * (-w).ln_1p() - lb).exp()
            }
        };
        // the support can be far wider than the mass as q → 1, so split it
        // into doubling pieces the adaptive rule cannot step over
        let g = |v: f64| f1(v / u) * f.eval_scalar(v) * v / (u * u);
        let end = u / c;
        let mut lo = 0.0;
        let mut hi = u.min(end);
        let mut total = 0.0;
        while lo < end {
            total += integrate(g, lo, hi, ABS_TOL, REL_TOL)?.value;
            lo = hi;
            hi = (2.0 * hi).min(end);
        }
        Ok(log_gamma(gamma).exp() * total)
    }

    /// `Γ(γ) ∫_0^∞ f₁(v/u) f(v) v u^{-2} dv`, `f₁ = gamma(γ, rate b)`.
    pub fn pathway1_limit(gamma: f64, b: f64, f: &TestFunction, u: f64) -> Result<f64> {
        check_scalar(u)?;
        check_alpha(1, gamma)?;
        let f1 = |x: f64| (gamma * b.ln() + (gamma - 1.0) * x.ln() - b * x).exp();
        let g = |v: f64| f1(v / u) * f.eval_scalar(v) * v / (u * u);
        let head = integrate(g, 0.0, u, ABS_TOL, REL_TOL)?.value;
        let tail = integrate_to_infinity(g, u, ABS_TOL, REL_TOL)?.value;
        Ok(head + tail)
    }

    /// Truncated scalar `rFs(a; b; z)` summed directly.
    pub fn scalar_hypergeometric(a: &[f64], b: &[f64], z: f64, kmax: usize) -> f64 {
        let mut acc = 0.0;
        let mut zk = 1.0;
        let mut kfact = 1.0;
        for k in 0..=kmax {
            if k > 0 {
                zk *= z;
                kfact *= k as f64;
            }
            let num: f64 = a.iter().map(|&x| rising_factorial(x, k)).product();
            let den: f64 = b.iter().map(|&x| rising_factorial(x, k)).product();
            acc += num / den * zk / kfact;
        }
        acc
    }

    /// `Γ(ζ+1)/Γ(ζ+α+1) · c_f^{-1} ∫_u^∞ F(w u/v) (u/v)^ζ (1-u/v)^{α-1} f(v) v^{-1} dv`
    /// with `c_f = ∫_0^1 F(w x) x^ζ (1-x)^{α-1} dx` by quadrature.
    #[allow(clippy::too_many_arguments)]
    pub fn hyper2(zeta: f64, alpha: f64, w: f64, a: &[f64], b: &[f64], kmax: usize, f: &TestFunction, u: f64) -> Result<f64> {
        check_scalar(u)?;
        check_alpha(1, alpha)?;
        check_zeta(zeta)?;
        let weight = |x: f64| scalar_hypergeometric(a, b, w * x, kmax);
        let cf = integrate_right_power(|x| weight(x) * x.powf(zeta), 0.0, 1.0, alpha, ABS_TOL, REL_TOL)?.value;
        // (1 - u/v)^{α-1} = (v-u)^{α-1} v^{1-α}
        let r = integrate_left_power(
            |v| weight(u / v) * (u / v).powf(zeta) * v.powf(1.0 - alpha) * f.eval_scalar(v) / v,
            u,
            f64::INFINITY,
            alpha,
            ABS_TOL,
            REL_TOL,
        )?;
        Ok((log_gamma(zeta + 1.0) - log_gamma(zeta + alpha + 1.0)).exp() * r.value / cf)
    }
}

/// Draws from a second-kind pathway density, exposed for the sampling API.
pub fn sample_pathway(params: &PathwayParams, rng: &mut RngStream) -> Result<PDMatrix> {
    pathway_density(params.clone())?.sampler()?.sample(rng)
}

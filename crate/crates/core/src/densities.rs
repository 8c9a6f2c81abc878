//! Matrix-variate densities and the test functions operators act on.
//!
//! Normalizing constants of the pathway families are derived from the
//! scaled type-1 beta they are built from: the second kind is
//! `W = a(1-q) X ~ type-1 beta(γ+(p+1)/2, η/(1-q)+(p+1)/2)`, the first kind
//! `W ~ type-1 beta(γ, η/(1-q)+(p+1)/2)`. With a matrix scale A the map is
//! `W = (1-q) A^{1/2} X A^{1/2}`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdcore::{PDMatrix, SymMatrix};
use crate::sampling::{
    HyperWeightedSampler, MatrixGammaSampler, MatrixSampler, ScaledSampler, Type1BetaSampler, Type2BetaSampler,
};
use crate::special::{gamma_p_bound, half_p1, log_beta_p, log_gamma_p};
use crate::zonal::{product_eigenvalues, HyperSeries, ZonalTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayKind {
    /// Kernel `|X|^{γ-(p+1)/2} |I - a(1-q)X|^{η/(1-q)}`; pairs with the ratio construction.
    First,
    /// Kernel `|X|^γ |I - a(1-q)X|^{η/(1-q)}`; pairs with the product construction.
    Second,
}

/// Scalar `a > 0` or a PD matrix `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathwayScale {
    Scalar(f64),
    Matrix(PDMatrix),
}

impl PathwayScale {
    /// `Some(a)` for a scalar scale or a matrix equal to `aI`.
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            PathwayScale::Scalar(a) => Some(*a),
            PathwayScale::Matrix(m) => {
                let a = m.get(0, 0);
                let p = m.dim();
                let is_scalar = (0..p).all(|i| {
                    (0..p).all(|j| {
                        let target = if i == j { a } else { 0.0 };
                        (m.get(i, j) - target).abs() <= 1e-14 * a.abs()
                    })
                });
                is_scalar.then_some(a)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayParams {
    pub p: usize,
    pub kind: PathwayKind,
    pub gamma: f64,
    pub eta: f64,
    pub q: f64,
    pub scale: PathwayScale,
}

impl PathwayParams {
    pub fn new(p: usize, kind: PathwayKind, gamma: f64, eta: f64, q: f64, scale: PathwayScale) -> Result<Self> {
        let params = PathwayParams { p, kind, gamma, eta, q, scale };
        params.validate()?;
        Ok(params)
    }

    pub fn scalar(p: usize, kind: PathwayKind, gamma: f64, eta: f64, q: f64, a: f64) -> Result<Self> {
        Self::new(p, kind, gamma, eta, q, PathwayScale::Scalar(a))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::domain("p must be positive"));
        }
        if !(self.q < 1.0) {
            return Err(Error::domain(format!("pathway needs q < 1, got {}", self.q)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::domain(format!("pathway needs eta > 0, got {}", self.eta)));
        }
        match &self.scale {
            PathwayScale::Scalar(a) if !(*a > 0.0) => {
                return Err(Error::domain(format!("pathway scale must be positive, got {a}")))
            }
            PathwayScale::Matrix(m) if m.dim() != self.p => {
                return Err(Error::DimensionMismatch { expected: self.p, found: m.dim() })
            }
            _ => {}
        }
        if !(self.beta_shapes().0 > gamma_p_bound(self.p)) {
            return Err(Error::domain(format!(
                "gamma={} violates the {:?}-kind condition at p={}",
                self.gamma, self.kind, self.p
            )));
        }
        Ok(())
    }

    /// `η / (1 - q)`.
    pub fn eta_prime(&self) -> f64 {
        self.eta / (1.0 - self.q)
    }

    /// Shapes of the type-1 beta law of the scaled variable W.
    pub fn beta_shapes(&self) -> (f64, f64) {
        let h = half_p1(self.p);
        let first = match self.kind {
            PathwayKind::First => self.gamma,
            PathwayKind::Second => self.gamma + h,
        };
        (first, self.eta_prime() + h)
    }

    /// Shape of the q → 1 matrix-gamma limit.
    pub fn limit_shape(&self) -> f64 {
        self.beta_shapes().0
    }

    /// Rate of the q → 1 limit: `aη I` or `η A`.
    pub fn limit_rate(&self) -> PDMatrix {
        match &self.scale {
            PathwayScale::Scalar(a) => PDMatrix::scaled_identity(self.p, a * self.eta),
            PathwayScale::Matrix(m) => m.scale(self.eta),
        }
    }

    /// `log` of the Jacobian factor `dW/dX`.
    fn log_jacobian(&self) -> f64 {
        let h = half_p1(self.p);
        let pf = self.p as f64;
        match &self.scale {
            PathwayScale::Scalar(a) => pf * h * (a * (1.0 - self.q)).ln(),
            PathwayScale::Matrix(m) => pf * h * (1.0 - self.q).ln() + h * m.logdet(),
        }
    }

    /// `W` as a function of `X`.
    fn to_w(&self, x: &PDMatrix) -> Result<PDMatrix> {
        match &self.scale {
            PathwayScale::Scalar(a) => Ok(x.scale(a * (1.0 - self.q))),
            PathwayScale::Matrix(m) => Ok(x.congruence(m)?.scale(1.0 - self.q)),
        }
    }

    /// `log |W| - log |X|`.
    fn log_det_ratio(&self) -> f64 {
        let pf = self.p as f64;
        match &self.scale {
            PathwayScale::Scalar(a) => pf * (a * (1.0 - self.q)).ln(),
            PathwayScale::Matrix(m) => pf * (1.0 - self.q).ln() + m.logdet(),
        }
    }
}

/// JSON catalog entry, tagged by `"density"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "density", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Type1Beta { p: usize, a: f64, b: f64 },
    Type2Beta { p: usize, a: f64, b: f64 },
    MatrixGamma {
        p: usize,
        shape: f64,
        #[serde(default)]
        rate: Option<PathwayScale>,
    },
    Pathway {
        p: usize,
        kind: PathwayKind,
        gamma: f64,
        eta: f64,
        q: f64,
        scale: PathwayScale,
    },
    PathwayLimit {
        p: usize,
        kind: PathwayKind,
        gamma: f64,
        /// `aη` for a scalar scale, `ηA` for a matrix scale.
        rate: PathwayScale,
    },
    HyperWeightedBeta {
        p: usize,
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

impl DensitySpec {
    pub fn build(&self) -> Result<MatrixDensity> {
        match self {
            DensitySpec::Type1Beta { p, a, b } => type1_beta(*p, *a, *b),
            DensitySpec::Type2Beta { p, a, b } => type2_beta(*p, *a, *b),
            DensitySpec::MatrixGamma { p, shape, rate } => {
                let rate = scale_matrix(*p, rate.as_ref().unwrap_or(&PathwayScale::Scalar(1.0)))?;
                matrix_gamma(*p, *shape, &rate)
            }
            DensitySpec::Pathway { p, kind, gamma, eta, q, scale } => {
                pathway_density(PathwayParams::new(*p, *kind, *gamma, *eta, *q, scale.clone())?)
            }
            DensitySpec::PathwayLimit { p, kind, gamma, rate } => {
                pathway_limit_matrix(*p, *gamma, &scale_matrix(*p, rate)?, *kind)
            }
            DensitySpec::HyperWeightedBeta { p, zeta, alpha, weight, a_list, b_list, kmax } => {
                if weight.dim() != *p {
                    return Err(Error::DimensionMismatch { expected: *p, found: weight.dim() });
                }
                let table = ZonalTable::shared(*kmax, *p)?;
                hyper_weighted_beta(*zeta, *alpha, weight, a_list, b_list, &table, *kmax)
            }
        }
    }
}

fn scale_matrix(p: usize, s: &PathwayScale) -> Result<PDMatrix> {
    match s {
        PathwayScale::Scalar(r) if *r > 0.0 => Ok(PDMatrix::scaled_identity(p, *r)),
        PathwayScale::Scalar(r) => Err(Error::domain(format!("rate must be positive, got {r}"))),
        PathwayScale::Matrix(m) if m.dim() == p => Ok(m.clone()),
        PathwayScale::Matrix(m) => Err(Error::DimensionMismatch { expected: p, found: m.dim() }),
    }
}

#[derive(Clone)]
struct HyperParts {
    series: HyperSeries,
    log_cf: f64,
    cf_tail: f64,
    sampler: Arc<HyperWeightedSampler>,
}

#[derive(Clone)]
enum Law {
    Type1Beta { a: f64, b: f64 },
    Type2Beta { a: f64, b: f64 },
    MatrixGamma { shape: f64, rate: PDMatrix },
    Pathway(PathwayParams),
    Hyper { zeta: f64, alpha: f64, weight: SymMatrix, parts: Box<HyperParts> },
}

/// A normalized density on the PD cone with optional closed-form M-transform
/// and an exact sampler.
#[derive(Clone)]
pub struct MatrixDensity {
    p: usize,
    label: String,
    spec: DensitySpec,
    law: Law,
    /// Additive log normalizing constant.
    log_norm: f64,
}

impl fmt::Debug for MatrixDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixDensity").field("label", &self.label).field("spec", &self.spec).finish()
    }
}

pub fn type1_beta(p: usize, a: f64, b: f64) -> Result<MatrixDensity> {
    let log_norm = -log_beta_p(p, a, b)?;
    Ok(MatrixDensity {
        p,
        label: format!("type1_beta(p={p}, a={a}, b={b})"),
        spec: DensitySpec::Type1Beta { p, a, b },
        law: Law::Type1Beta { a, b },
        log_norm,
    })
}

pub fn type2_beta(p: usize, a: f64, b: f64) -> Result<MatrixDensity> {
    let log_norm = -log_beta_p(p, a, b)?;
    Ok(MatrixDensity {
        p,
        label: format!("type2_beta(p={p}, a={a}, b={b})"),
        spec: DensitySpec::Type2Beta { p, a, b },
        law: Law::Type2Beta { a, b },
        log_norm,
    })
}

/// `|B|^γ |X|^{γ-(p+1)/2} e^{-tr(BX)} / Γ_p(γ)`.
pub fn matrix_gamma(p: usize, shape: f64, rate: &PDMatrix) -> Result<MatrixDensity> {
    if rate.dim() != p {
        return Err(Error::DimensionMismatch { expected: p, found: rate.dim() });
    }
    let log_norm = shape * rate.logdet() - log_gamma_p(p, shape)?;
    let scale = match PathwayScale::Matrix(rate.clone()).as_scalar() {
        Some(r) => PathwayScale::Scalar(r),
        None => PathwayScale::Matrix(rate.clone()),
    };
    Ok(MatrixDensity {
        p,
        label: format!("matrix_gamma(p={p}, shape={shape})"),
        spec: DensitySpec::MatrixGamma { p, shape, rate: Some(scale) },
        law: Law::MatrixGamma { shape, rate: rate.clone() },
        log_norm,
    })
}

pub fn pathway_density(params: PathwayParams) -> Result<MatrixDensity> {
    params.validate()?;
    let (a1, b1) = params.beta_shapes();
    let log_norm = params.log_jacobian() - log_beta_p(params.p, a1, b1)?;
    Ok(MatrixDensity {
        p: params.p,
        label: format!(
            "pathway_{:?}(p={}, gamma={}, eta={}, q={})",
            params.kind, params.p, params.gamma, params.eta, params.q
        )
        .to_lowercase(),
        spec: DensitySpec::Pathway {
            p: params.p,
            kind: params.kind,
            gamma: params.gamma,
            eta: params.eta,
            q: params.q,
            scale: params.scale.clone(),
        },
        law: Law::Pathway(params),
        log_norm,
    })
}

/// q → 1 limit with scalar `aη`: a matrix gamma with rate `aη I`.
pub fn pathway_limit_density(p: usize, gamma: f64, a_eta: f64, kind: PathwayKind) -> Result<MatrixDensity> {
    if !(a_eta > 0.0) {
        return Err(Error::domain(format!("a*eta must be positive, got {a_eta}")));
    }
    pathway_limit_matrix(p, gamma, &PDMatrix::scaled_identity(p, a_eta), kind)
}

/// q → 1 limit with rate matrix `ηA`.
pub fn pathway_limit_matrix(p: usize, gamma: f64, rate: &PDMatrix, kind: PathwayKind) -> Result<MatrixDensity> {
    let shape = match kind {
        PathwayKind::First => gamma,
        PathwayKind::Second => gamma + half_p1(p),
    };
    let mut d = matrix_gamma(p, shape, rate).map_err(|e| match e {
        Error::Domain(_) => Error::domain(format!("gamma={gamma} violates the {kind:?}-kind condition at p={p}")),
        other => other,
    })?;
    let rate_spec = match PathwayScale::Matrix(rate.clone()).as_scalar() {
        Some(r) => PathwayScale::Scalar(r),
        None => PathwayScale::Matrix(rate.clone()),
    };
    d.spec = DensitySpec::PathwayLimit { p, kind, gamma, rate: rate_spec };
    d.label = format!("pathway_limit_{kind:?}(p={p}, gamma={gamma})").to_lowercase();
    Ok(d)
}

/// `F(A X) |X|^ζ |I-X|^{α-(p+1)/2} / c_f` on `O < X < I`, with F the
/// truncated `rFs(a; b; ·)` and
/// `c_f = B_p(ζ+(p+1)/2, α) · r+1Fs+1(a, ζ+(p+1)/2; b, ζ+α+(p+1)/2; A)`.
pub fn hyper_weighted_beta(
    zeta: f64,
    alpha: f64,
    weight: &SymMatrix,
    a_list: &[f64],
    b_list: &[f64],
    table: &Arc<ZonalTable>,
    kmax: usize,
) -> Result<MatrixDensity> {
    let p = weight.dim();
    let h = half_p1(p);
    if !(zeta > -1.0) {
        return Err(Error::domain(format!("hypergeometric weighted beta needs zeta > -1, got {zeta}")));
    }
    if !(alpha > gamma_p_bound(p)) {
        return Err(Error::domain(format!("hypergeometric weighted beta needs alpha > (p-1)/2, got {alpha}")));
    }
    let series = HyperSeries::new(a_list, b_list, table.clone(), kmax)?;
    let (log_cf, cf_tail) = hyper_log_moment(zeta + h, zeta, alpha, weight, a_list, b_list, table, kmax)?;
    let sampler = HyperWeightedSampler::new(zeta, alpha, weight.clone(), series.clone())?;
    Ok(MatrixDensity {
        p,
        label: format!("hyper_weighted_beta(p={p}, zeta={zeta}, alpha={alpha}, r={}, s={})", a_list.len(), b_list.len()),
        spec: DensitySpec::HyperWeightedBeta {
            p,
            zeta,
            alpha,
            weight: weight.clone(),
            a_list: a_list.to_vec(),
            b_list: b_list.to_vec(),
            kmax,
        },
        law: Law::Hyper {
            zeta,
            alpha,
            weight: weight.clone(),
            parts: Box::new(HyperParts { series, log_cf, cf_tail, sampler: Arc::new(sampler) }),
        },
        log_norm: -log_cf,
    })
}

/// `log ∫ F(AX) |X|^{t-(p+1)/2} |I-X|^{α-(p+1)/2} dX` by term-wise integration,
/// plus the magnitude of the last series degree.
#[allow(clippy::too_many_arguments)]
fn hyper_log_moment(
    t: f64,
    _zeta: f64,
    alpha: f64,
    weight: &SymMatrix,
    a_list: &[f64],
    b_list: &[f64],
    table: &Arc<ZonalTable>,
    kmax: usize,
) -> Result<(f64, f64)> {
    let p = weight.dim();
    let mut a = a_list.to_vec();
    a.push(t);
    let mut b = b_list.to_vec();
    b.push(t + alpha);
    let r = HyperSeries::new(&a, &b, table.clone(), kmax)?.eval(weight)?;
    if !(r.value > 0.0) {
        return Err(Error::domain(format!("hypergeometric normalizer is not positive ({})", r.value)));
    }
    Ok((log_beta_p(p, t, alpha)? + r.value.ln(), r.last_term_magnitude / r.value))
}

impl MatrixDensity {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn pathway_params(&self) -> Option<&PathwayParams> {
        match &self.law {
            Law::Pathway(pp) => Some(pp),
            _ => None,
        }
    }

    /// Relative size of the last series degree in the normalizer, for the
    /// hypergeometric weighted beta.
    pub fn series_tail(&self) -> Option<f64> {
        match &self.law {
            Law::Hyper { parts, .. } => Some(parts.cf_tail),
            _ => None,
        }
    }

    pub fn in_support(&self, x: &PDMatrix) -> bool {
        self.log_pdf(x) > f64::NEG_INFINITY
    }

    /// Log density; `-∞` exactly off the support.
    pub fn log_pdf(&self, x: &PDMatrix) -> f64 {
        if x.dim() != self.p {
            return f64::NEG_INFINITY;
        }
        let h = half_p1(self.p);
        let ld = x.logdet();
        let kernel = match &self.law {
            Law::Type1Beta { a, b } => match x.logdet_identity_minus() {
                Some(lm) => (a - h) * ld + (b - h) * lm,
                None => f64::NEG_INFINITY,
            },
            Law::Type2Beta { a, b } => (a - h) * ld - (a + b) * x.logdet_identity_plus(),
            Law::MatrixGamma { shape, rate } => (shape - h) * ld - trace_product(rate.as_sym(), x.as_sym()),
            Law::Pathway(pp) => {
                let (a1, b1) = pp.beta_shapes();
                match pp.to_w(x).ok().and_then(|w| w.logdet_identity_minus()) {
                    Some(lm) => (a1 - h) * (ld + pp.log_det_ratio()) + (b1 - h) * lm,
                    None => f64::NEG_INFINITY,
                }
            }
            Law::Hyper { zeta, alpha, weight, parts } => match x.logdet_identity_minus() {
                Some(lm) => {
                    let w = product_eigenvalues(weight, x)
                        .and_then(|e| parts.series.eval_eigen(&e))
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN);
                    if w > 0.0 {
                        w.ln() + zeta * ld + (alpha - h) * lm
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                None => f64::NEG_INFINITY,
            },
        };
        if kernel == f64::NEG_INFINITY {
            kernel
        } else {
            kernel + self.log_norm
        }
    }

    /// Log of the normalizing constant multiplying the kernel.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn pdf(&self, x: &PDMatrix) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Density at a positive scalar when p = 1; zero for `x <= 0`.
    pub fn pdf_scalar(&self, x: f64) -> f64 {
        if !(x > 0.0) || self.p != 1 {
            return 0.0;
        }
        self.pdf(&PDMatrix::from_constructed(SymMatrix::diag(&[x])))
    }

    /// `log ∫ |X|^{s-(p+1)/2} f(X) dX` when a closed form is known.
    pub fn log_m_transform(&self, s: f64) -> Option<Result<f64>> {
        let p = self.p;
        let h = half_p1(p);
        let t = s - h;
        let pf = p as f64;
        Some(match &self.law {
            Law::Type1Beta { a, b } => log_beta_p(p, a + t, *b).and_then(|v| Ok(v - log_beta_p(p, *a, *b)?)),
            Law::Type2Beta { a, b } => {
                log_beta_p(p, a + t, b - t).and_then(|v| Ok(v - log_beta_p(p, *a, *b)?))
            }
            Law::MatrixGamma { shape, rate } => log_gamma_p(p, shape + t)
                .and_then(|v| Ok(v - log_gamma_p(p, *shape)? - t * rate.logdet())),
            Law::Pathway(pp) => {
                let (a1, b1) = pp.beta_shapes();
                log_beta_p(p, a1 + t, b1)
                    .and_then(|v| Ok(v - log_beta_p(p, a1, b1)? - t * pp.log_det_ratio()))
            }
            Law::Hyper { zeta, alpha, weight, parts } => {
                let kmax = parts.series.kmax();
                let table = parts.series.table().clone();
                hyper_log_moment(zeta + s, *zeta, *alpha, weight, parts.series.a(), parts.series.b(), &table, kmax)
                    .map(|(v, _)| v - parts.log_cf)
            }
        })
        .map(|r| {
            r.map_err(|e| match e {
                Error::Domain(m) => Error::domain(format!("M-transform at s={s} (p={pf}) undefined: {m}")),
                other => other,
            })
        })
    }

    pub fn m_transform(&self, s: f64) -> Result<f64> {
        self.log_m_transform(s).expect("every catalog density has a closed form").map(f64::exp)
    }

    /// Exact sampler for this law.
    pub fn sampler(&self) -> Result<Arc<dyn MatrixSampler>> {
        let p = self.p;
        Ok(match &self.law {
            Law::Type1Beta { a, b } => Arc::new(Type1BetaSampler::new(p, *a, *b)?),
            Law::Type2Beta { a, b } => Arc::new(Type2BetaSampler::new(p, *a, *b)?),
            Law::MatrixGamma { shape, rate } => match PathwayScale::Matrix(rate.clone()).as_scalar() {
                Some(r) => Arc::new(MatrixGammaSampler::scalar(p, *shape, r)?),
                None => Arc::new(MatrixGammaSampler::new(p, *shape, rate)?),
            },
            Law::Pathway(pp) => {
                let (a1, b1) = pp.beta_shapes();
                let w: Arc<dyn MatrixSampler> = Arc::new(Type1BetaSampler::new(p, a1, b1)?);
                match &pp.scale {
                    PathwayScale::Scalar(a) => Arc::new(ScaledSampler::new(w, 1.0 / (a * (1.0 - pp.q)), None)?),
                    PathwayScale::Matrix(m) => {
                        Arc::new(ScaledSampler::new(w, 1.0 / (1.0 - pp.q), Some(&m.power(-0.5)))?)
                    }
                }
            }
            Law::Hyper { parts, .. } => parts.sampler.clone(),
        })
    }

    /// Exponential decay rate `r` with `f(X) <= C e^{-r tr X}` far out, when known.
    pub fn decay_rate(&self) -> Option<f64> {
        match &self.law {
            Law::MatrixGamma { rate, .. } => Some(rate.min_eigenvalue()),
            _ => None,
        }
    }
}

/// `tr(A B)` for symmetric A, B.
pub fn trace_product(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// The function an operator is applied to.
#[derive(Clone)]
pub enum TestFunction {
    /// The density itself.
    Density(Arc<MatrixDensity>),
    /// `|X|^λ`.
    DetPower(f64),
    /// `e^{-r tr X}`.
    ExpTrace(f64),
    Constant(f64),
    /// `|X|^λ · inner(X)`.
    DetWeighted { power: f64, inner: Box<TestFunction> },
    Custom { label: String, f: Arc<dyn Fn(&PDMatrix) -> f64 + Send + Sync> },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({})", self.label())
    }
}

impl TestFunction {
    pub fn density(d: MatrixDensity) -> Self {
        TestFunction::Density(Arc::new(d))
    }

    pub fn det_weighted(self, power: f64) -> Self {
        TestFunction::DetWeighted { power, inner: Box::new(self) }
    }

    pub fn custom(label: impl Into<String>, f: impl Fn(&PDMatrix) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction::Custom { label: label.into(), f: Arc::new(f) }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Density(d) => d.label().to_string(),
            TestFunction::DetPower(l) => format!("det^{l}"),
            TestFunction::ExpTrace(r) => format!("exp(-{r} tr)"),
            TestFunction::Constant(c) => format!("const {c}"),
            TestFunction::DetWeighted { power, inner } => format!("det^{power} * {}", inner.label()),
            TestFunction::Custom { label, .. } => label.clone(),
        }
    }

    pub fn eval(&self, x: &PDMatrix) -> f64 {
        match self {
            TestFunction::Density(d) => d.pdf(x),
            TestFunction::DetPower(l) => (l * x.logdet()).exp(),
            TestFunction::ExpTrace(r) => (-r * x.trace()).exp(),
            TestFunction::Constant(c) => *c,
            TestFunction::DetWeighted { power, inner } => (power * x.logdet()).exp() * inner.eval(x),
            TestFunction::Custom { f, .. } => f(x),
        }
    }

    /// Value at a positive scalar (the 1×1 case).
    pub fn eval_scalar(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        match self {
            TestFunction::Density(d) => d.pdf_scalar(x),
            TestFunction::DetPower(l) => x.powf(*l),
            TestFunction::ExpTrace(r) => (-r * x).exp(),
            TestFunction::Constant(c) => *c,
            TestFunction::DetWeighted { power, inner } => x.powf(*power) * inner.eval_scalar(x),
            TestFunction::Custom { f, .. } => f(&PDMatrix::from_constructed(SymMatrix::diag(&[x]))),
        }
    }

    /// Closed-form `log f*(s)` in dimension p, when known.
    pub fn log_m_transform(&self, p: usize, s: f64) -> Option<Result<f64>> {
        match self {
            TestFunction::Density(d) => d.log_m_transform(s),
            TestFunction::ExpTrace(r) => Some(log_gamma_p(p, s).map(|v| v - p as f64 * s * r.ln())),
            TestFunction::DetWeighted { power, inner } => inner.log_m_transform(p, s + power),
            _ => None,
        }
    }

    pub fn decay_rate(&self) -> Option<f64> {
        match self {
            TestFunction::Density(d) => d.decay_rate(),
            TestFunction::ExpTrace(r) => Some(*r),
            TestFunction::DetWeighted { inner, .. } => inner.decay_rate(),
            _ => None,
        }
    }

    pub fn as_density(&self) -> Option<&Arc<MatrixDensity>> {
        match self {
            TestFunction::Density(d) => Some(d),
            _ => None,
        }
    }
}

/// JSON form of a test function, tagged by `"function"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum TestFunctionSpec {
    Density(DensitySpec),
    DetPower { lambda: f64 },
    ExpTrace { rate: f64 },
    Constant { value: f64 },
}

impl TestFunctionSpec {
    pub fn build(&self) -> Result<TestFunction> {
        Ok(match self {
            TestFunctionSpec::Density(d) => TestFunction::density(d.build()?),
            TestFunctionSpec::DetPower { lambda } => TestFunction::DetPower(*lambda),
            TestFunctionSpec::ExpTrace { rate } => TestFunction::ExpTrace(*rate),
            TestFunctionSpec::Constant { value } => TestFunction::Constant(*value),
        })
    }
}

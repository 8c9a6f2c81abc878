//! Random matrices on the positive-definite cone and the Monte Carlo engine.
//!
//! Work is cut into fixed blocks of `BLOCK_SIZE` draws. Block `b` always uses
//! the ChaCha20 stream `b` of the run seed, and block statistics are merged in
//! block order, so results do not depend on how rayon schedules the blocks.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdcore::{jacobi_svd, PDMatrix, SymMatrix};
use crate::special::{gamma_p_bound, half_p1};
use crate::zonal::{product_eigenvalues, HyperSeries};

pub const BLOCK_SIZE: usize = 4096;

/// Absolute floor of the pass rule `|lhs - rhs| <= max(3 se, floor)`.
pub const ABS_FLOOR: f64 = 1e-10;
pub const PASS_SIGMAS: f64 = 3.0;

/// Counter-based generator: `(seed, stream)` fixes the whole sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent child generator seeded from this stream's next output.
    pub fn fork(&mut self, stream: u64) -> RngStream {
        RngStream::new(self.rng.next_u64(), stream)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Welford accumulator with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.count as f64 * other.count as f64 / n as f64);
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
    pub label: String,
}

impl EstimatorResult {
    /// Exact value reported in estimator form (zero standard error).
    pub fn exact(value: f64, label: impl Into<String>) -> Self {
        EstimatorResult { estimate: value, std_error: 0.0, n: 0, seed: 0, label: label.into() }
    }

    fn from_stats(stats: &RunningStats, seed: u64, label: &str) -> Self {
        EstimatorResult {
            estimate: stats.mean(),
            std_error: stats.std_error(),
            n: stats.count() as usize,
            seed,
            label: label.to_string(),
        }
    }

    /// The estimate of `c · E[...]`.
    pub fn scaled(&self, c: f64) -> Self {
        EstimatorResult { estimate: self.estimate * c, std_error: self.std_error * c.abs(), ..self.clone() }
    }

    pub fn relabeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `estimate² / E[x²]`, an effective-sample-size fraction of the summands.
    pub fn ess_fraction(&self) -> f64 {
        let m2 = self.estimate * self.estimate;
        let second = m2 + self.std_error * self.std_error * self.n as f64;
        if second == 0.0 {
            1.0
        } else {
            m2 / second
        }
    }
}

/// A Monte Carlo estimate compared against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub lhs: EstimatorResult,
    pub rhs: f64,
}

impl Check {
    pub fn new(label: impl Into<String>, lhs: EstimatorResult, rhs: f64) -> Self {
        Check { label: label.into(), lhs, rhs }
    }

    /// `(lhs - rhs) / se`; zero when both the gap and the error vanish.
    pub fn discrepancy(&self) -> f64 {
        let gap = self.lhs.estimate - self.rhs;
        if gap == 0.0 {
            0.0
        } else if self.lhs.std_error == 0.0 {
            gap.signum() * f64::INFINITY
        } else {
            gap / self.lhs.std_error
        }
    }

    pub fn passes(&self) -> bool {
        within_band(self.lhs.estimate, self.rhs, self.lhs.std_error)
    }
}

/// The verification pass rule.
pub fn within_band(lhs: f64, rhs: f64, se: f64) -> bool {
    (lhs - rhs).abs() <= (PASS_SIGMAS * se).max(ABS_FLOOR)
}

fn block_ranges(n: usize) -> Vec<(u64, usize)> {
    let blocks = n.div_ceil(BLOCK_SIZE);
    (0..blocks).map(|b| (b as u64, BLOCK_SIZE.min(n - b * BLOCK_SIZE))).collect()
}

/// Mean and standard error of `f` over `n` independent draws.
pub fn monte_carlo<F>(n: usize, seed: u64, label: &str, f: F) -> Result<EstimatorResult>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    let out = monte_carlo_multi(n, seed, label, 1, |rng, buf| {
        buf[0] = f(rng)?;
        Ok(())
    })?;
    Ok(out.into_iter().next().expect("one output"))
}

/// Joint estimation of `k` quantities from the same draws.
pub fn monte_carlo_multi<F>(n: usize, seed: u64, label: &str, k: usize, f: F) -> Result<Vec<EstimatorResult>>
where
    F: Fn(&mut RngStream, &mut [f64]) -> Result<()> + Sync,
{
    if n < 2 {
        return Err(Error::domain(format!("Monte Carlo needs n >= 2, got {n}")));
    }
    let blocks: Vec<Result<Vec<RunningStats>>> = block_ranges(n)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = RngStream::new(seed, b);
            let mut stats = vec![RunningStats::default(); k];
            let mut buf = vec![0.0; k];
            for _ in 0..len {
                f(&mut rng, &mut buf)?;
                for (s, &v) in stats.iter_mut().zip(&buf) {
                    if !v.is_finite() {
                        return Err(Error::NonfiniteIntegrand { value: v });
                    }
                    s.push(v);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut total = vec![RunningStats::default(); k];
    for block in blocks {
        for (t, s) in total.iter_mut().zip(block?) {
            t.merge(&s);
        }
    }
    Ok(total.iter().map(|s| EstimatorResult::from_stats(s, seed, label)).collect())
}

/// Anything that draws PD matrices from an `RngStream`.
pub trait MatrixSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix>;
}

/// Matrix-gamma draws by the Bartlett construction: `X = L Lᵀ` with
/// `L_jj² ~ Gamma(shape - (j-1)/2, 1)` and `L_ij ~ N(0, 1/2)` below the
/// diagonal, then `B^{-1/2} X B^{-1/2}`.
#[derive(Debug, Clone)]
pub struct MatrixGammaSampler {
    p: usize,
    shape: f64,
    diag: Vec<Gamma<f64>>,
    /// `B^{-1/2}`, or a scalar `b^{-1}` when B = bI.
    scale: Scale,
}

#[derive(Debug, Clone)]
enum Scale {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl MatrixGammaSampler {
    pub fn new(p: usize, shape: f64, b: &PDMatrix) -> Result<Self> {
        if b.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, found: b.dim() });
        }
        let mut s = Self::scalar(p, shape, 1.0)?;
        s.scale = Scale::Matrix(b.spectral_map_na(|v| 1.0 / v.sqrt()));
        Ok(s)
    }

    /// Rate matrix `B = rate · I`.
    pub fn scalar(p: usize, shape: f64, rate: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::domain("p must be positive"));
        }
        if !(shape > gamma_p_bound(p)) {
            return Err(Error::domain(format!("matrix gamma needs shape > (p-1)/2, got {shape} at p={p}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::domain(format!("matrix gamma rate must be positive, got {rate}")));
        }
        let diag = (0..p)
            .map(|j| Gamma::new(shape - j as f64 / 2.0, 1.0).map_err(|e| Error::domain(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(MatrixGammaSampler { p, shape, diag, scale: Scale::Scalar(1.0 / rate) })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// A factor F of the draw, `X = F Fᵀ`.
    pub(crate) fn draw_factor(&self, rng: &mut RngStream) -> DMatrix<f64> {
        let p = self.p;
        let mut l = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            l[(j, j)] = self.diag[j].sample(rng).sqrt();
            for i in (j + 1)..p {
                l[(i, j)] = rng.normal() * std::f64::consts::FRAC_1_SQRT_2;
            }
        }
        match &self.scale {
            Scale::Scalar(c) => l * c.sqrt(),
            Scale::Matrix(r) => r * l,
        }
    }

    /// Raw nalgebra draw, symmetric PD up to roundoff.
    pub(crate) fn draw_na(&self, rng: &mut RngStream) -> DMatrix<f64> {
        let f = self.draw_factor(rng);
        &f * f.transpose()
    }

    pub fn draw(&self, rng: &mut RngStream) -> PDMatrix {
        PDMatrix::from_factor(&self.draw_factor(rng))
    }
}

impl MatrixSampler for MatrixGammaSampler {
    fn dim(&self) -> usize {
        self.p
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        Ok(self.draw(rng))
    }
}

/// `(G₁+G₂)^{-1/2} G₁ (G₁+G₂)^{-1/2}` with independent unit-rate matrix gammas.
#[derive(Debug, Clone)]
pub struct Type1BetaSampler {
    g1: MatrixGammaSampler,
    g2: MatrixGammaSampler,
}

impl Type1BetaSampler {
    pub fn new(p: usize, a: f64, b: f64) -> Result<Self> {
        Ok(Type1BetaSampler { g1: MatrixGammaSampler::scalar(p, a, 1.0)?, g2: MatrixGammaSampler::scalar(p, b, 1.0)? })
    }

    pub fn draw(&self, rng: &mut RngStream) -> PDMatrix {
        let l1 = self.g1.draw_factor(rng);
        let l2 = self.g2.draw_factor(rng);
        if self.g1.p == 1 {
            let (x1, x2) = (l1[(0, 0)].powi(2), l2[(0, 0)].powi(2));
            let t = x1 + x2;
            let g1 = DMatrix::from_element(1, 1, (x1 / t).sqrt());
            let g2 = DMatrix::from_element(1, 1, (x2 / t).sqrt());
            return PDMatrix::from_complementary_factors(&g1, &g2).clamp_below_identity();
        }
        let s = PDMatrix::from_na_constructed(&(&l1 * l1.transpose() + &l2 * l2.transpose()));
        let r = s.spectral_map_na(|v| 1.0 / v.sqrt());
        PDMatrix::from_complementary_factors(&(&r * l1), &(&r * l2)).clamp_below_identity()
    }
}

impl MatrixSampler for Type1BetaSampler {
    fn dim(&self) -> usize {
        self.g1.p
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        Ok(self.draw(rng))
    }
}

/// `G₂^{-1/2} G₁ G₂^{-1/2}`.
#[derive(Debug, Clone)]
pub struct Type2BetaSampler {
    g1: MatrixGammaSampler,
    g2: MatrixGammaSampler,
}

impl Type2BetaSampler {
    pub fn new(p: usize, a: f64, b: f64) -> Result<Self> {
        Ok(Type2BetaSampler { g1: MatrixGammaSampler::scalar(p, a, 1.0)?, g2: MatrixGammaSampler::scalar(p, b, 1.0)? })
    }

    /// Works from the Bartlett factors: forming G₂ would lose its small
    /// eigenvalues when the second shape is close to (p-1)/2.
    pub fn draw(&self, rng: &mut RngStream) -> PDMatrix {
        let l1 = self.g1.draw_factor(rng);
        let l2 = self.g2.draw_factor(rng);
        let (u2, sigma2, _) = jacobi_svd(&l2);
        if sigma2.iter().any(|s| !(*s > 0.0)) {
            let x2 = PDMatrix::from_na_constructed(&(&l2 * l2.transpose()));
            let r = x2.spectral_map_na(|v| 1.0 / v.sqrt());
            return PDMatrix::from_na_constructed(&(&r * (&l1 * l1.transpose()) * &r));
        }
        // G₂^{-1/2} L₁ = U₂ H with H = Σ₂⁻¹ U₂ᵀ L₁
        let mut h = u2.transpose() * l1;
        for (i, s) in sigma2.iter().enumerate() {
            h.row_mut(i).scale_mut(1.0 / s);
        }
        let inner = PDMatrix::from_factor_t(&h.transpose());
        PDMatrix::from_eigen(inner.eigenvalues().to_vec(), &u2 * inner.eigenvectors())
    }
}

impl MatrixSampler for Type2BetaSampler {
    fn dim(&self) -> usize {
        self.g1.p
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        Ok(self.draw(rng))
    }
}

/// `X = scale · C W C` for an inner draw W and fixed symmetric C.
#[derive(Clone)]
pub struct ScaledSampler {
    inner: Arc<dyn MatrixSampler>,
    scale: f64,
    conj: Option<DMatrix<f64>>,
}

impl ScaledSampler {
    pub fn new(inner: Arc<dyn MatrixSampler>, scale: f64, conj: Option<&PDMatrix>) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::domain("scale must be positive"));
        }
        if let Some(c) = conj {
            if c.dim() != inner.dim() {
                return Err(Error::DimensionMismatch { expected: inner.dim(), found: c.dim() });
            }
        }
        Ok(ScaledSampler { inner, scale, conj: conj.map(|c| c.to_na()) })
    }
}

impl MatrixSampler for ScaledSampler {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        let w = self.inner.sample(rng)?;
        Ok(match &self.conj {
            None => w.scale(self.scale),
            Some(c) => PDMatrix::from_na_constructed(&((c * w.to_na() * c) * self.scale)),
        })
    }
}

/// Rejection sampler for `F(A X) |X|^ζ |I-X|^{α-(p+1)/2}` against the plain
/// type-1 beta(ζ+(p+1)/2, α) proposal.
#[derive(Clone)]
pub struct HyperWeightedSampler {
    proposal: Type1BetaSampler,
    weight_matrix: SymMatrix,
    series: HyperSeries,
    envelope: f64,
}

/// Proposal budget of a single rejection draw.
pub const MAX_PROPOSALS: u64 = 10_000_000;
const PROBES: usize = 1000;
const ENVELOPE_SAFETY: f64 = 1.5;

impl HyperWeightedSampler {
    /// Probes the weight at 1000 proposal draws plus X = I. Fails with
    /// `Domain` when any probed weight is negative.
    pub fn new(zeta: f64, alpha: f64, weight_matrix: SymMatrix, series: HyperSeries) -> Result<Self> {
        let p = weight_matrix.dim();
        let proposal = Type1BetaSampler::new(p, zeta + half_p1(p), alpha)?;
        let mut rng = RngStream::new(0x9e37_79b9_7f4a_7c15, u64::MAX);
        let mut sup = series.eval(&weight_matrix)?.value;
        let mut inf = sup;
        for _ in 0..PROBES {
            let x = proposal.draw(&mut rng);
            let w = series.eval_eigen(&product_eigenvalues(&weight_matrix, &x)?)?.value;
            sup = sup.max(w);
            inf = inf.min(w);
        }
        if inf < 0.0 {
            return Err(Error::domain(format!(
                "hypergeometric weight is negative on the support (min probe {inf:e})"
            )));
        }
        if !(sup > 0.0 && sup.is_finite()) {
            return Err(Error::Envelope(format!("weight supremum {sup} is unusable")));
        }
        Ok(HyperWeightedSampler { proposal, weight_matrix, series, envelope: sup * ENVELOPE_SAFETY })
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }
}

impl MatrixSampler for HyperWeightedSampler {
    fn dim(&self) -> usize {
        self.weight_matrix.dim()
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        for _ in 0..MAX_PROPOSALS {
            let x = self.proposal.draw(rng);
            let w = self.series.eval_eigen(&product_eigenvalues(&self.weight_matrix, &x)?)?.value;
            let ratio = w / self.envelope;
            if ratio > 1.0 {
                return Err(Error::Envelope(format!("weight {w:e} exceeds envelope {:e}", self.envelope)));
            }
            if rng.uniform() < ratio {
                return Ok(x);
            }
        }
        Err(Error::Envelope(format!("no acceptance after {MAX_PROPOSALS} proposals")))
    }
}

/// `U = X₂^{1/2} X₁ X₂^{1/2}`.
#[derive(Clone)]
pub struct ProductSampler {
    pub x1: Arc<dyn MatrixSampler>,
    pub x2: Arc<dyn MatrixSampler>,
}

impl MatrixSampler for ProductSampler {
    fn dim(&self) -> usize {
        self.x1.dim()
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        sample_product(self.x1.as_ref(), self.x2.as_ref(), rng)
    }
}

/// `U = X₂^{1/2} X₁^{-1} X₂^{1/2}`.
#[derive(Clone)]
pub struct RatioSampler {
    pub x1: Arc<dyn MatrixSampler>,
    pub x2: Arc<dyn MatrixSampler>,
}

impl MatrixSampler for RatioSampler {
    fn dim(&self) -> usize {
        self.x1.dim()
    }
    fn sample(&self, rng: &mut RngStream) -> Result<PDMatrix> {
        sample_ratio(self.x1.as_ref(), self.x2.as_ref(), rng)
    }
}

pub fn sample_matrix_gamma(p: usize, shape: f64, b: &PDMatrix, rng: &mut RngStream) -> Result<PDMatrix> {
    Ok(MatrixGammaSampler::new(p, shape, b)?.draw(rng))
}

pub fn sample_type1_beta(p: usize, a: f64, b: f64, rng: &mut RngStream) -> Result<PDMatrix> {
    Ok(Type1BetaSampler::new(p, a, b)?.draw(rng))
}

pub fn sample_type2_beta(p: usize, a: f64, b: f64, rng: &mut RngStream) -> Result<PDMatrix> {
    Ok(Type2BetaSampler::new(p, a, b)?.draw(rng))
}

pub fn sample_product(x1: &dyn MatrixSampler, x2: &dyn MatrixSampler, rng: &mut RngStream) -> Result<PDMatrix> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch { expected: x1.dim(), found: x2.dim() });
    }
    let a = x1.sample(rng)?;
    let c = x2.sample(rng)?;
    a.congruence(&c)
}

pub fn sample_ratio(x1: &dyn MatrixSampler, x2: &dyn MatrixSampler, rng: &mut RngStream) -> Result<PDMatrix> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch { expected: x1.dim(), found: x2.dim() });
    }
    let a = x1.sample(rng)?;
    let c = x2.sample(rng)?;
    a.inverse().congruence(&c)
}

/// Sample mean and standard error of `|X|^h`.
pub fn det_moment(sampler: &dyn MatrixSampler, h: f64, n: usize, seed: u64) -> Result<EstimatorResult> {
    if h == 0.0 {
        return Ok(EstimatorResult { estimate: 1.0, std_error: 0.0, n, seed, label: "det^0".into() });
    }
    monte_carlo(n, seed, &format!("det^{h}"), |rng| Ok((h * sampler.sample(rng)?.logdet()).exp()))
}

/// Collects `n` draws of a statistic in block order (reproducible).
pub fn collect_statistic<F>(n: usize, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    let blocks: Vec<Result<Vec<f64>>> = block_ranges(n)
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = RngStream::new(seed, b);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

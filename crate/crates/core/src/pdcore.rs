//! Real symmetric and positive-definite matrices.
//!
//! Every derived quantity (square roots, inverses, determinants, Loewner
//! comparisons) comes from one cached spectral decomposition. Matrices
//! are small (p <= 10), so dynamic `nalgebra` storage is used throughout.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and averaged away) by the constructors.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Smallest eigenvalue must exceed this times `max(largest eigenvalue, 1)`.
pub const PD_TOL: f64 = 1e-12;

/// Row-major on-disk form: `{"p": 2, "data": [a, b, b, c]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub p: usize,
    pub data: Vec<f64>,
}

/// A p×p real symmetric matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct SymMatrix {
    p: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixJson> for SymMatrix {
    type Error = Error;
    fn try_from(m: MatrixJson) -> Result<Self> {
        SymMatrix::new(m.p, m.data)
    }
}

impl From<SymMatrix> for MatrixJson {
    fn from(m: SymMatrix) -> Self {
        MatrixJson { p: m.p, data: m.data }
    }
}

impl SymMatrix {
    /// Builds from row-major data, replacing M by (M+Mᵀ)/2.
    pub fn new(p: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        if data.len() != p * p {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for p={p}, got {}",
                p * p,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry {bad}")));
        }
        let max_abs = data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0_f64;
        for i in 0..p {
            for j in (i + 1)..p {
                asym = asym.max((data[i * p + j] - data[j * p + i]).abs());
            }
        }
        let tol = SYMMETRY_TOL * (1.0 + max_abs);
        if asym > tol {
            return Err(Error::NotSymmetric { asymmetry: asym, tolerance: tol });
        }
        let mut out = SymMatrix { p, data };
        out.symmetrize();
        Ok(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidMatrix("rows must form a square matrix".into()));
        }
        SymMatrix::new(p, rows.iter().flatten().copied().collect())
    }

    pub fn zeros(p: usize) -> Self {
        SymMatrix { p, data: vec![0.0; p * p] }
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix::scaled_identity(p, 1.0)
    }

    pub fn scaled_identity(p: usize, c: f64) -> Self {
        let mut m = SymMatrix::zeros(p);
        for i in 0..p {
            m.data[i * p + i] = c;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let p = d.len();
        let mut m = SymMatrix::zeros(p);
        for (i, v) in d.iter().enumerate() {
            m.data[i * p + i] = *v;
        }
        m
    }

    fn symmetrize(&mut self) {
        let p = self.p;
        for i in 0..p {
            for j in (i + 1)..p {
                let avg = 0.5 * (self.data[i * p + j] + self.data[j * p + i]);
                self.data[i * p + j] = avg;
                self.data[j * p + i] = avg;
            }
        }
    }

    /// Wraps an already (nearly) symmetric nalgebra matrix, averaging off-diagonals.
    pub(crate) fn from_na(m: &DMatrix<f64>) -> Self {
        let p = m.nrows();
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                data[i * p + j] = m[(i, j)];
            }
        }
        let mut out = SymMatrix { p, data };
        out.symmetrize();
        out
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.p, self.p, &self.data)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.p).map(|i| self.data[i * self.p + i]).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (vals, _) = sorted_eigen(&self.to_na());
        vals
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.p != other {
            return Err(Error::DimensionMismatch { expected: self.p, found: other });
        }
        Ok(())
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(other.p)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(SymMatrix { p: self.p, data })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(other.p)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SymMatrix { p: self.p, data })
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix { p: self.p, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// `I - self`.
    pub fn identity_minus(&self) -> SymMatrix {
        SymMatrix::identity(self.p).sub(self).expect("same dimension")
    }

    /// `C^{1/2} self C^{1/2}`; the result is symmetric but not necessarily PD.
    pub fn congruence_by(&self, c: &PDMatrix) -> Result<SymMatrix> {
        self.check_dim(c.dim())?;
        let r = c.sqrt_na();
        Ok(SymMatrix::from_na(&(&r * self.to_na() * &r)))
    }
}

/// Eigen-decomposition sorted by descending eigenvalue.
/// One-sided Jacobi SVD `A = U Σ Vᵀ`, singular values descending.
///
/// Unlike a bidiagonalizing SVD it keeps high relative accuracy when the
/// columns of A differ wildly in scale, which is how the factors of
/// near-singular random matrices look.
pub(crate) fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let p = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(p, p);
    for _ in 0..60 {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for m in [&mut w, &mut v] {
                    for r in 0..m.nrows() {
                        let (x, y) = (m[(r, i)], m[(r, j)]);
                        m[(r, i)] = c * x - sn * y;
                        m[(r, j)] = sn * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..p).map(|k| w.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]));
    let mut u = DMatrix::zeros(a.nrows(), p);
    let mut vs = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        if sigma[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / sigma[src]));
        }
        vs.set_column(dst, &v.column(src));
    }
    (u, order.iter().map(|&k| sigma[k]).collect(), vs)
}

fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let p = m.nrows();
    if p == 1 {
        return (vec![m[(0, 0)]], DMatrix::from_element(1, 1, 1.0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// A symmetric positive-definite matrix with its cached spectral decomposition.
#[derive(Debug, Clone)]
pub struct PDMatrix {
    sym: SymMatrix,
    /// Descending, all strictly positive.
    eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matching `eigenvalues`.
    eigenvectors: DMatrix<f64>,
    /// `1 - eigenvalues`, when known more accurately than the subtraction.
    complement: Option<Vec<f64>>,
}

impl PartialEq for PDMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.sym == other.sym
    }
}

impl Serialize for PDMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.sym.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PDMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let sym = SymMatrix::deserialize(d)?;
        PDMatrix::new(sym).map_err(serde::de::Error::custom)
    }
}

impl PDMatrix {
    /// Validates strict positive definiteness under the relative tolerance.
    pub fn new(sym: SymMatrix) -> Result<Self> {
        let (eigenvalues, eigenvectors) = sorted_eigen(&sym.to_na());
        let largest = eigenvalues[0];
        let smallest = *eigenvalues.last().expect("p >= 1");
        let threshold = PD_TOL * largest.max(1.0);
        if !(smallest > threshold) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: smallest, threshold });
        }
        Ok(PDMatrix { sym, eigenvalues, eigenvectors, complement: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        PDMatrix::new(SymMatrix::from_rows(rows)?)
    }

    pub fn identity(p: usize) -> Self {
        PDMatrix::scaled_identity(p, 1.0)
    }

    pub fn scaled_identity(p: usize, c: f64) -> Self {
        assert!(c > 0.0, "scaled identity needs c > 0");
        PDMatrix {
            sym: SymMatrix::scaled_identity(p, c),
            eigenvalues: vec![c; p],
            eigenvectors: DMatrix::identity(p, p),
            complement: None,
        }
    }

    pub fn diag(d: &[f64]) -> Result<Self> {
        PDMatrix::new(SymMatrix::diag(d))
    }

    /// Wraps a matrix that is PD by construction (products of PD factors,
    /// sampler output). Eigenvalues lost to roundoff are floored at
    /// `largest * EPSILON` instead of failing.
    pub(crate) fn from_constructed(sym: SymMatrix) -> Self {
        let (mut eigenvalues, eigenvectors) = sorted_eigen(&sym.to_na());
        let floor = eigenvalues[0].abs().max(f64::MIN_POSITIVE) * f64::EPSILON;
        let mut clamped = false;
        for v in eigenvalues.iter_mut() {
            if !(*v > 0.0) {
                *v = floor;
                clamped = true;
            }
        }
        if clamped {
            let sym = SymMatrix::from_na(&rebuild(&eigenvalues, &eigenvectors, |x| x));
            return PDMatrix { sym, eigenvalues, eigenvectors, complement: None };
        }
        PDMatrix { sym, eigenvalues, eigenvectors, complement: None }
    }

    /// From an eigendecomposition computed elsewhere; nonpositive
    /// eigenvalues are floored as in `from_constructed`.
    pub(crate) fn from_eigen(mut eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>) -> Self {
        let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let floor = top.max(f64::MIN_POSITIVE) * f64::EPSILON;
        for v in eigenvalues.iter_mut() {
            if !(*v > 0.0) {
                *v = floor;
            }
        }
        let sym = SymMatrix::from_na(&rebuild(&eigenvalues, &eigenvectors, |x| x));
        PDMatrix { sym, eigenvalues, eigenvectors, complement: None }
    }

    /// `G₁ G₁ᵀ` where `G₁ G₁ᵀ + G₂ G₂ᵀ = I`, keeping the eigenvalues of
    /// both terms so that `|I - self|` stays accurate near the boundary.
    pub(crate) fn from_complementary_factors(g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> Self {
        let (u, s1, _) = jacobi_svd(g1);
        let (_, s2, _) = jacobi_svd(g2);
        let p = s1.len();
        let mut vals = Vec::with_capacity(p);
        let mut comp = Vec::with_capacity(p);
        for k in 0..p {
            let (lam, mu) = (s1[k] * s1[k], s2[p - 1 - k] * s2[p - 1 - k]);
            if lam <= 0.5 {
                vals.push(lam);
                comp.push(1.0 - lam);
            } else {
                vals.push(1.0 - mu);
                comp.push(mu);
            }
        }
        let mut m = PDMatrix::from_eigen(vals, u);
        m.complement = Some(comp);
        m
    }

    /// `F Fᵀ` from its factor, eigenvalues taken from the singular values of F.
    pub(crate) fn from_factor(f: &DMatrix<f64>) -> Self {
        let (u, sigma, _) = jacobi_svd(f);
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return PDMatrix::from_na_constructed(&(f * f.transpose()));
        }
        PDMatrix::from_eigen(sigma.iter().map(|s| s * s).collect(), u)
    }

    /// `Fᵀ F` from F, eigenvectors taken from the right singular vectors.
    pub(crate) fn from_factor_t(f: &DMatrix<f64>) -> Self {
        let (_, sigma, v) = jacobi_svd(f);
        PDMatrix::from_eigen(sigma.iter().map(|s| s * s).collect(), v)
    }

    pub(crate) fn from_na_constructed(m: &DMatrix<f64>) -> Self {
        PDMatrix::from_constructed(SymMatrix::from_na(m))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn into_sym(self) -> SymMatrix {
        self.sym
    }

    pub fn dim(&self) -> usize {
        self.sym.p
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sym.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.sym.trace()
    }

    pub fn logdet(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.ln()).sum()
    }

    pub fn det(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("p >= 1")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `Q f(Λ) Qᵀ` as a raw nalgebra matrix.
    pub(crate) fn spectral_map_na(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        rebuild(&self.eigenvalues, &self.eigenvectors, f)
    }

    pub(crate) fn sqrt_na(&self) -> DMatrix<f64> {
        self.spectral_map_na(f64::sqrt)
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        self.sym.to_na()
    }

    /// `A^t` for real t; eigenvalue order is kept descending.
    pub fn power(&self, t: f64) -> PDMatrix {
        let mut vals: Vec<f64> = self.eigenvalues.iter().map(|v| v.powf(t)).collect();
        let mut vecs = self.eigenvectors.clone();
        if t < 0.0 {
            vals.reverse();
            let p = self.dim();
            let src = vecs.clone();
            for k in 0..p {
                vecs.set_column(k, &src.column(p - 1 - k));
            }
        }
        let sym = SymMatrix::from_na(&rebuild(&vals, &vecs, |x| x));
        PDMatrix { sym, eigenvalues: vals, eigenvectors: vecs, complement: None }
    }

    pub fn sqrt(&self) -> PDMatrix {
        self.power(0.5)
    }

    pub fn inverse(&self) -> PDMatrix {
        self.power(-1.0)
    }

    /// `C^{1/2} self C^{1/2}`.
    pub fn congruence(&self, c: &PDMatrix) -> Result<PDMatrix> {
        if self.dim() != c.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: c.dim() });
        }
        let r = c.sqrt_na();
        Ok(PDMatrix::from_na_constructed(&(&r * self.to_na() * &r)))
    }

    /// `self + other`, PD by construction.
    pub fn add_pd(&self, other: &PDMatrix) -> Result<PDMatrix> {
        Ok(PDMatrix::from_constructed(self.sym.add(&other.sym)?))
    }

    /// `self + S` where S is PSD (e.g. the identity).
    pub fn plus_identity(&self) -> PDMatrix {
        let vals: Vec<f64> = self.eigenvalues.iter().map(|v| v + 1.0).collect();
        let sym = SymMatrix::from_na(&rebuild(&vals, &self.eigenvectors, |x| x));
        PDMatrix { sym, eigenvalues: vals, eigenvectors: self.eigenvectors.clone(), complement: None }
    }

    pub fn scale(&self, c: f64) -> PDMatrix {
        assert!(c > 0.0, "PD scaling needs c > 0");
        let vals: Vec<f64> = self.eigenvalues.iter().map(|v| v * c).collect();
        PDMatrix { sym: self.sym.scale(c), eigenvalues: vals, eigenvectors: self.eigenvectors.clone(), complement: None }
    }

    /// Pulls eigenvalues that roundoff left at or above 1 back to `1 - EPSILON`.
    pub(crate) fn clamp_below_identity(self) -> PDMatrix {
        let top = 1.0 - f64::EPSILON;
        if self.eigenvalues[0] <= top {
            return self;
        }
        let vals: Vec<f64> = self.eigenvalues.iter().map(|v| v.min(top)).collect();
        let sym = SymMatrix::from_na(&rebuild(&vals, &self.eigenvectors, |x| x));
        PDMatrix { sym, eigenvalues: vals, eigenvectors: self.eigenvectors, complement: self.complement }
    }

    /// `log |I - self|`, or `None` when `I - self` is not PD (eigenvalues >= 1).
    pub fn logdet_identity_minus(&self) -> Option<f64> {
        if let Some(c) = &self.complement {
            return c.iter().all(|v| *v > 0.0).then(|| c.iter().map(|v| v.ln()).sum());
        }
        let mut acc = 0.0;
        for v in &self.eigenvalues {
            if !(*v < 1.0) {
                return None;
            }
            acc += (-v).ln_1p();
        }
        Some(acc)
    }

    /// `log |I + self|`.
    pub fn logdet_identity_plus(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.ln_1p()).sum()
    }

    /// `max |QΛQᵀ - M|` over entries.
    pub fn reconstruction_error(&self) -> f64 {
        let r = self.spectral_map_na(|x| x);
        let m = self.to_na();
        (r - m).abs().max()
    }
}

fn rebuild(vals: &[f64], vecs: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let p = vals.len();
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let fv = f(*v);
        for i in 0..p {
            scaled[(i, k)] *= fv;
        }
    }
    scaled * vecs.transpose()
}

/// Unique PD square root.
pub fn sqrt_pd(a: &PDMatrix) -> PDMatrix {
    a.sqrt()
}

/// Strict Loewner order `A > B`: the smallest eigenvalue of `A - B` exceeds
/// `PD_TOL * max(largest eigenvalue of A - B, 1)`.
pub fn loewner_gt(a: &PDMatrix, b: &SymMatrix) -> Result<bool> {
    let diff = a.as_sym().sub(b)?;
    let vals = diff.eigenvalues();
    let threshold = PD_TOL * vals[0].max(1.0);
    Ok(*vals.last().expect("p >= 1") > threshold)
}

/// `C^{1/2} A C^{1/2}`.
pub fn congruence(a: &PDMatrix, c: &PDMatrix) -> Result<PDMatrix> {
    a.congruence(c)
}

pub fn logdet(a: &PDMatrix) -> f64 {
    a.logdet()
}

pub fn inverse_pd(a: &PDMatrix) -> PDMatrix {
    a.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64) -> PDMatrix {
        PDMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap()
    }

    fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn sqrt_examples() {
        let i3 = PDMatrix::identity(3);
        assert!((sqrt_pd(&i3).to_na() - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
        let d = PDMatrix::diag(&[4.0, 9.0]).unwrap();
        let r = sqrt_pd(&d);
        assert!((r.get(0, 0) - 2.0).abs() < 1e-14 && (r.get(1, 1) - 3.0).abs() < 1e-14);
        assert!(r.get(0, 1).abs() < 1e-14);

        let a = m2(2.0, 1.0, 2.0);
        let b = sqrt_pd(&a);
        let bb = b.to_na() * b.to_na();
        assert!(frob_rel(&bb, &a.to_na()) < 1e-10);
        let ev = b.eigenvalues();
        assert!((ev[0] - 3f64.sqrt()).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loewner_examples() {
        let two = PDMatrix::scaled_identity(2, 2.0);
        assert!(loewner_gt(&two, &SymMatrix::identity(2)).unwrap());
        assert!(!loewner_gt(&PDMatrix::identity(2), &SymMatrix::identity(2)).unwrap());
        let a = PDMatrix::diag(&[3.0, 1.0]).unwrap();
        assert!(!loewner_gt(&a, &SymMatrix::diag(&[1.0, 2.0])).unwrap());
        let err = loewner_gt(&a, &SymMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn congruence_examples() {
        let a = m2(2.0, 0.5, 1.0);
        let c = congruence(&a, &PDMatrix::identity(2)).unwrap();
        assert!((c.to_na() - a.to_na()).abs().max() < 1e-14);
        let d = PDMatrix::diag(&[4.0, 9.0]).unwrap();
        let c = congruence(&PDMatrix::identity(2), &d).unwrap();
        assert!((c.to_na() - d.to_na()).abs().max() < 1e-13);
        let s = congruence(&PDMatrix::diag(&[3.0]).unwrap(), &PDMatrix::diag(&[4.0]).unwrap()).unwrap();
        assert!((s.get(0, 0) - 12.0).abs() < 1e-14);
        let c = congruence(&a, &d).unwrap();
        assert!((c.det() / (a.det() * d.det()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn logdet_and_inverse_examples() {
        assert_eq!(logdet(&PDMatrix::identity(4)), 0.0);
        assert!((logdet(&PDMatrix::diag(&[2.0, 3.0]).unwrap()) - 6f64.ln()).abs() < 1e-14);
        assert!((logdet(&m2(2.0, 1.0, 2.0)) - 3f64.ln()).abs() < 1e-14);
        let inv = inverse_pd(&PDMatrix::diag(&[2.0, 4.0]).unwrap());
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-15 && (inv.get(1, 1) - 0.25).abs() < 1e-15);
        let a = m2(2.0, 0.7, 1.3);
        let prod = a.to_na() * inverse_pd(&a).to_na();
        assert!((prod - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-10);
        // eigenvalues of the inverse stay descending
        let ev = inverse_pd(&a).eigenvalues().to_vec();
        assert!(ev[0] >= ev[1]);
    }

    #[test]
    fn constructor_rejections() {
        assert!(matches!(
            SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]),
            Err(Error::NotSymmetric { .. })
        ));
        // tiny asymmetry is averaged away
        let s = SymMatrix::from_rows(&[vec![1.0, 0.5 + 1e-12], vec![0.5, 1.0]]).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert!(matches!(
            PDMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(PDMatrix::diag(&[1.0, 1e-14]), Err(Error::NotPositiveDefinite { .. })));
        assert!(SymMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(SymMatrix::new(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn json_schema() {
        let a = m2(2.0, 1.0, 3.0);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"p":2,"data":[2.0,1.0,1.0,3.0]}"#);
        let b: PDMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        assert!(serde_json::from_str::<PDMatrix>(r#"{"p":1,"data":[-1.0]}"#).is_err());
    }

    #[test]
    fn factor_keeps_tiny_eigenvalue() {
        let l = DMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.8, 1e-12]);
        let m = PDMatrix::from_factor(&l);
        assert!((m.logdet() - 2.0 * (1.3f64 * 1e-12).ln()).abs() < 1e-10);
        let t = PDMatrix::from_factor_t(&l.transpose());
        assert!((t.logdet() - m.logdet()).abs() < 1e-10);
        assert!((m.get(0, 1) - 1.3 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn from_constructed_floors_roundoff() {
        let s = SymMatrix::diag(&[1.0, -1e-20]);
        let m = PDMatrix::from_constructed(s);
        assert!(m.min_eigenvalue() > 0.0);
    }
}

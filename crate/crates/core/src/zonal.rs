//! Partitions, zonal polynomials and hypergeometric series of matrix argument.
//!
//! Zonal polynomials use the "C" normalization, Σ_{|K|=k} C_K(Z) = (tr Z)^k.
//! Coefficients in the monomial symmetric basis are built in exact rational
//! arithmetic:
//!
//! * the monic expansion Y_K = M_K + Σ_{λ◁K} c_{K,λ} M_λ comes from the
//!   Laplace–Beltrami eigenvalue recurrence
//!   `c_{K,λ} = Σ_μ ((l_i + t) - (l_j - t)) c_{K,μ} / (ρ_K - ρ_λ)`,
//!   `ρ_K = Σ k_i (k_i - i)`, where μ runs over the raisings of λ;
//! * the leading coefficient is `2^k k! / Π_{cells} (2 arm + leg + 2)`.
//!
//! The sum identity is then verified exactly before a table is released.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdcore::{PDMatrix, SymMatrix};
use crate::sampling::{monte_carlo, Check, Type1BetaSampler};
use crate::special::{gamma_p_bound, half_p1, log_beta_p, log_gamma_p_partition, pochhammer_partition};

/// A non-increasing tuple of positive integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    parts: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.parts
    }
}

impl Partition {
    /// Trailing zeros are dropped; parts must be non-increasing.
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.windows(2).any(|w| w[0] < w[1]) || parts.contains(&0) {
            return Err(Error::domain(format!("{parts:?} is not a partition")));
        }
        Ok(Partition { parts })
    }

    pub fn empty() -> Self {
        Partition { parts: Vec::new() }
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn weight(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of nonzero parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part(&self, i: usize) -> usize {
        self.parts.get(i).copied().unwrap_or(0)
    }

    pub fn conjugate(&self) -> Partition {
        let n = self.part(0);
        let parts = (1..=n).map(|j| self.parts.iter().filter(|&&k| k >= j).count()).collect();
        Partition { parts }
    }

    /// `ρ_K = Σ k_i (k_i - i)` with 1-based i.
    fn rho(&self) -> i64 {
        self.parts
            .iter()
            .enumerate()
            .map(|(i, &k)| k as i64 * (k as i64 - (i as i64 + 1)))
            .sum()
    }

    /// Dominance order `self ⊴ other` for equal weights.
    pub fn dominated_by(&self, other: &Partition) -> bool {
        let (mut a, mut b) = (0usize, 0usize);
        for i in 0..self.len().max(other.len()) {
            a += self.part(i);
            b += other.part(i);
            if a > b {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|k| k.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// All partitions of `k` with at most `max_parts` parts, reverse-lexicographic
/// (largest first). `k = 0` yields the empty partition.
pub fn enumerate_partitions(k: usize, max_parts: usize) -> Vec<Partition> {
    fn rec(rem: usize, cap: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if rem == 0 {
            out.push(Partition { parts: cur.clone() });
            return;
        }
        if slots == 0 {
            return;
        }
        for first in (1..=cap.min(rem)).rev() {
            cur.push(first);
            rec(rem - first, first, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, k, max_parts, &mut Vec::new(), &mut out);
    out
}

fn factorial_big(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// All distinct permutations of `lambda` padded with zeros to length `p`.
fn distinct_exponent_vectors(lambda: &Partition, p: usize) -> Vec<Vec<u32>> {
    let mut v: Vec<u32> = (0..p).map(|i| lambda.part(i) as u32).collect();
    v.sort_unstable();
    let mut out = vec![v.clone()];
    // lexicographic next-permutation over the sorted multiset
    loop {
        let Some(i) = (0..v.len().saturating_sub(1)).rev().find(|&i| v[i] < v[i + 1]) else {
            break;
        };
        let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("exists");
        v.swap(i, j);
        v[i + 1..].reverse();
        out.push(v.clone());
    }
    out
}

#[derive(Debug, Clone)]
struct DegreeBlock {
    partitions: Vec<Partition>,
    /// `exact[K][λ]` = coefficient of M_λ in C_K.
    exact: Vec<Vec<BigRational>>,
    coeffs: Vec<Vec<f64>>,
    /// Distinct exponent vectors of each M_λ in p variables.
    monomials: Vec<Vec<Vec<u32>>>,
}

/// Zonal polynomial coefficients in the monomial symmetric basis, for all
/// partitions of weight `<= kmax` with at most `p` parts.
#[derive(Debug, Clone)]
pub struct ZonalTable {
    kmax: usize,
    p: usize,
    degrees: Vec<DegreeBlock>,
}

impl ZonalTable {
    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn partitions(&self, k: usize) -> &[Partition] {
        &self.degrees[k].partitions
    }

    /// Exact coefficient of `M_λ` in `C_K` (zero when λ is not dominated by K).
    pub fn coefficient(&self, kappa: &Partition, lambda: &Partition) -> Option<&BigRational> {
        let block = self.degrees.get(kappa.weight())?;
        let i = block.partitions.iter().position(|q| q == kappa)?;
        let j = block.partitions.iter().position(|q| q == lambda)?;
        Some(&block.exact[i][j])
    }

    /// Shared, lazily built table; tables are immutable once built.
    pub fn shared(kmax: usize, p: usize) -> Result<Arc<ZonalTable>> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<ZonalTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("zonal cache poisoned").get(&(kmax, p)) {
            return Ok(t.clone());
        }
        let t = Arc::new(build_zonal_table(kmax, p)?);
        cache.lock().expect("zonal cache poisoned").insert((kmax, p), t.clone());
        Ok(t)
    }

    fn power_table(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|&xi| {
                let mut row = Vec::with_capacity(self.kmax + 1);
                let mut acc = 1.0;
                for _ in 0..=self.kmax {
                    row.push(acc);
                    acc *= xi;
                }
                row
            })
            .collect()
    }

    fn monomial_values(&self, k: usize, pw: &[Vec<f64>]) -> Vec<f64> {
        self.degrees[k]
            .monomials
            .iter()
            .map(|vecs| {
                vecs.iter()
                    .map(|e| e.iter().enumerate().map(|(i, &ei)| pw[i][ei as usize]).product::<f64>())
                    .sum()
            })
            .collect()
    }

    /// `C_K` evaluated at the given eigenvalues, for every partition of degree `k`.
    pub fn eval_degree(&self, k: usize, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        self.check_eigs(eigenvalues)?;
        if k > self.kmax {
            return Err(Error::CapExceeded { weight: k, kmax: self.kmax });
        }
        let pw = self.power_table(eigenvalues);
        Ok(self.eval_degree_with(k, &pw))
    }

    fn eval_degree_with(&self, k: usize, pw: &[Vec<f64>]) -> Vec<f64> {
        let m = self.monomial_values(k, pw);
        self.degrees[k]
            .coeffs
            .iter()
            .map(|row| row.iter().zip(&m).map(|(c, v)| c * v).sum())
            .collect()
    }

    /// `C_K` for all degrees `0..=kmax`, indexed `[k][position in partitions(k)]`.
    pub fn eval_all(&self, eigenvalues: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_eigs(eigenvalues)?;
        let pw = self.power_table(eigenvalues);
        Ok((0..=self.kmax).map(|k| self.eval_degree_with(k, &pw)).collect())
    }

    /// `C_K` at the given eigenvalues; zero when K has more than p parts.
    pub fn eval_eigen(&self, kappa: &Partition, eigenvalues: &[f64]) -> Result<f64> {
        self.check_eigs(eigenvalues)?;
        let k = kappa.weight();
        if k > self.kmax {
            return Err(Error::CapExceeded { weight: k, kmax: self.kmax });
        }
        if kappa.len() > self.p {
            return Ok(0.0);
        }
        let idx = self.degrees[k].partitions.iter().position(|q| q == kappa).expect("present");
        let pw = self.power_table(eigenvalues);
        let m = self.monomial_values(k, &pw);
        Ok(self.degrees[k].coeffs[idx].iter().zip(&m).map(|(c, v)| c * v).sum())
    }

    fn check_eigs(&self, eigenvalues: &[f64]) -> Result<()> {
        if eigenvalues.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: eigenvalues.len() });
        }
        Ok(())
    }

    /// CSV rows: partition label, monomial exponent vector, rational coefficient.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("partition,monomial,coefficient\n");
        for block in &self.degrees {
            for (i, kappa) in block.partitions.iter().enumerate() {
                for (j, lambda) in block.partitions.iter().enumerate() {
                    let c = &block.exact[i][j];
                    if c.is_zero() {
                        continue;
                    }
                    let exps: Vec<String> = (0..self.p).map(|t| lambda.part(t).to_string()).collect();
                    s.push_str(&format!("\"{}\",\"{}\",{}\n", kappa, exps.join(" "), c));
                }
            }
        }
        s
    }
}

/// Builds and verifies the table. Fails with `Construction` when the sum
/// identity does not hold exactly.
pub fn build_zonal_table(kmax: usize, p: usize) -> Result<ZonalTable> {
    if p == 0 {
        return Err(Error::domain("p must be positive"));
    }
    let mut degrees = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let parts = enumerate_partitions(k, p);
        let n = parts.len();
        let index: HashMap<&Partition, usize> = parts.iter().enumerate().map(|(i, q)| (q, i)).collect();
        let mut exact = vec![vec![BigRational::zero(); n]; n];
        for (ki, kappa) in parts.iter().enumerate() {
            // monic recurrence; λ runs down the reverse-lex order
            let mut c = vec![BigRational::zero(); n];
            c[ki] = BigRational::one();
            let rho_k = kappa.rho();
            for li in (ki + 1)..n {
                let lambda = &parts[li];
                if !lambda.dominated_by(kappa) {
                    continue;
                }
                let mut acc = BigRational::zero();
                let l = lambda.parts();
                for i in 0..l.len() {
                    for j in (i + 1)..l.len() {
                        for t in 1..=l[j] {
                            let mut mu = l.to_vec();
                            mu[i] += t;
                            mu[j] -= t;
                            mu.sort_unstable_by(|a, b| b.cmp(a));
                            let mu = Partition::new(mu).expect("valid raising");
                            let Some(&mi) = index.get(&mu) else { continue };
                            if c[mi].is_zero() {
                                continue;
                            }
                            let factor = (l[i] + t) as i64 - (l[j] as i64 - t as i64);
                            acc += &c[mi] * BigRational::from_integer(BigInt::from(factor));
                        }
                    }
                }
                let denom = rho_k - lambda.rho();
                if denom == 0 {
                    return Err(Error::Construction(format!(
                        "degenerate eigenvalue gap between {kappa} and {lambda}"
                    )));
                }
                c[li] = acc / BigRational::from_integer(BigInt::from(denom));
            }
            let lead = leading_coefficient(kappa);
            for (dst, v) in exact[ki].iter_mut().zip(c) {
                *dst = v * &lead;
            }
        }
        verify_sum_identity(k, &parts, &exact)?;
        let coeffs = exact.iter().map(|row| row.iter().map(ratio_to_f64).collect()).collect();
        let monomials = parts.iter().map(|l| distinct_exponent_vectors(l, p)).collect();
        degrees.push(DegreeBlock { partitions: parts, exact, coeffs, monomials });
    }
    Ok(ZonalTable { kmax, p, degrees })
}

/// `2^k k! / Π_{cells} (2 a(s) + l(s) + 2)`.
fn leading_coefficient(kappa: &Partition) -> BigRational {
    let k = kappa.weight();
    let conj = kappa.conjugate();
    let mut hook = BigInt::one();
    for (i, &ki) in kappa.parts().iter().enumerate() {
        for j in 0..ki {
            let arm = ki - j - 1;
            let leg = conj.part(j) - i - 1;
            hook *= BigInt::from(2 * arm + leg + 2);
        }
    }
    let num = BigInt::from(2u32).pow(k as u32) * factorial_big(k);
    BigRational::new(num, hook)
}

/// Exact check of Σ_K C_K = (tr Z)^k: the M_λ coefficient of (tr Z)^k is k!/Π λ_i!.
fn verify_sum_identity(k: usize, parts: &[Partition], exact: &[Vec<BigRational>]) -> Result<()> {
    let kf = factorial_big(k);
    for (li, lambda) in parts.iter().enumerate() {
        let denom = lambda.parts().iter().fold(BigInt::one(), |acc, &x| acc * factorial_big(x));
        let target = BigRational::new(kf.clone(), denom);
        let got = exact.iter().fold(BigRational::zero(), |acc, row| acc + &row[li]);
        if got != target {
            let err = (ratio_to_f64(&got) - ratio_to_f64(&target)).abs();
            if err > 1e-9 || got != target {
                return Err(Error::Construction(format!(
                    "sum identity fails at degree {k}, monomial {lambda}: {got} != {target}"
                )));
            }
        }
    }
    Ok(())
}

/// `C_K(Z)` from the eigenvalues of symmetric `Z`.
pub fn zonal_eval(table: &ZonalTable, kappa: &Partition, z: &SymMatrix) -> Result<f64> {
    if kappa.weight() > table.kmax {
        return Err(Error::CapExceeded { weight: kappa.weight(), kmax: table.kmax });
    }
    if z.dim() != table.p {
        return Err(Error::DimensionMismatch { expected: table.p, found: z.dim() });
    }
    table.eval_eigen(kappa, &z.eigenvalues())
}

/// Eigenvalues of `M N` for symmetric M and PD N (those of `N^{1/2} M N^{1/2}`).
pub fn product_eigenvalues(m: &SymMatrix, n: &PDMatrix) -> Result<Vec<f64>> {
    Ok(m.congruence_by(n)?.eigenvalues())
}

/// Truncated series value plus the magnitude of its last retained degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: f64,
    pub last_term_magnitude: f64,
}

/// Precomputed `Π(a_i)_K / Π(b_j)_K / k!` per partition, ready for repeated
/// evaluation at many arguments.
#[derive(Debug, Clone)]
pub struct HyperSeries {
    table: Arc<ZonalTable>,
    a: Vec<f64>,
    b: Vec<f64>,
    kmax: usize,
    coefs: Vec<Vec<f64>>,
}

impl HyperSeries {
    pub fn new(a: &[f64], b: &[f64], table: Arc<ZonalTable>, kmax: usize) -> Result<Self> {
        if kmax > table.kmax {
            return Err(Error::CapExceeded { weight: kmax, kmax: table.kmax });
        }
        let mut coefs = Vec::with_capacity(kmax + 1);
        let mut kfact = 1.0;
        for k in 0..=kmax {
            if k > 0 {
                kfact *= k as f64;
            }
            let mut row = Vec::new();
            for kappa in table.partitions(k) {
                let num: f64 = a.iter().map(|&ai| pochhammer_partition(ai, kappa)).product();
                let den: f64 = b.iter().map(|&bj| pochhammer_partition(bj, kappa)).product();
                if den == 0.0 {
                    return Err(Error::Pole(format!("(b)_K vanishes for K={kappa}, b={b:?}")));
                }
                row.push(num / den / kfact);
            }
            coefs.push(row);
        }
        Ok(HyperSeries { table, a: a.to_vec(), b: b.to_vec(), kmax, coefs })
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn table(&self) -> &Arc<ZonalTable> {
        &self.table
    }

    /// Per-degree contributions `Σ_{|K|=k} coef_K C_K` at the given eigenvalues.
    pub fn terms_by_degree(&self, eigenvalues: &[f64]) -> Result<Vec<f64>> {
        self.table.check_eigs(eigenvalues)?;
        let pw = self.table.power_table(eigenvalues);
        Ok((0..=self.kmax)
            .map(|k| {
                let c = self.table.eval_degree_with(k, &pw);
                c.iter().zip(&self.coefs[k]).map(|(ck, w)| ck * w).sum()
            })
            .collect())
    }

    pub fn eval_eigen(&self, eigenvalues: &[f64]) -> Result<SeriesResult> {
        let terms = self.terms_by_degree(eigenvalues)?;
        Ok(SeriesResult {
            value: terms.iter().sum(),
            last_term_magnitude: terms.last().map(|t| t.abs()).unwrap_or(0.0),
        })
    }

    pub fn eval(&self, z: &SymMatrix) -> Result<SeriesResult> {
        self.eval_eigen(&z.eigenvalues())
    }
}

/// `rFs(a; b; Z)` truncated after degree `kmax`.
pub fn hypergeometric_matrix(a: &[f64], b: &[f64], z: &SymMatrix, kmax: usize) -> Result<SeriesResult> {
    let table = ZonalTable::shared(kmax, z.dim())?;
    HyperSeries::new(a, b, table, kmax)?.eval(z)
}

/// Monte Carlo check of
/// `∫_O^I |X|^{α-(p+1)/2} |I-X|^{β-(p+1)/2} C_K(TX) dX = Γ_p(α,K)Γ_p(β)/Γ_p(α+β,K) C_K(T)`.
///
/// X is drawn from the exact type-1 beta law, so the left side is
/// `B_p(α,β) E[C_K(TX)]` and the empty partition has zero variance.
pub fn lemma41_check(
    table: &ZonalTable,
    alpha: f64,
    beta: f64,
    kappa: &Partition,
    t: &PDMatrix,
    samples: usize,
    seed: u64,
) -> Result<Check> {
    let p = t.dim();
    if p != table.dim() {
        return Err(Error::DimensionMismatch { expected: table.dim(), found: p });
    }
    if !(alpha > gamma_p_bound(p) && beta > gamma_p_bound(p)) {
        return Err(Error::domain(format!("lemma 4.1 needs alpha, beta > (p-1)/2 (p={p})")));
    }
    let log_b = log_beta_p(p, alpha, beta)?;
    let sampler = Type1BetaSampler::new(p, alpha, beta)?;
    let label = format!("lemma41 K={kappa}");
    let est = monte_carlo(samples, seed, &label, |rng| {
        let x = sampler.draw(rng);
        table.eval_eigen(kappa, &product_eigenvalues(t.as_sym(), &x)?)
    })?;
    let ct = table.eval_eigen(kappa, t.eigenvalues())?;
    let rhs = (log_gamma_p_partition(p, alpha, kappa)? + crate::special::log_gamma_p(p, beta)?
        - log_gamma_p_partition(p, alpha + beta, kappa)?)
    .exp()
        * ct;
    Ok(Check::new(label, est.scaled(log_b.exp()), rhs))
}

/// Monte Carlo check of
/// `∫_{O<S<A} |S|^{α-(p+1)/2} C_K(ZS) dS = Γ_p(α,K)Γ_p((p+1)/2)/Γ_p(α+(p+1)/2,K) |A|^α C_K(ZA)`.
///
/// With `S = A^{1/2} Y A^{1/2}` the left side is
/// `|A|^α B_p(α,(p+1)/2) E[C_K(A^{1/2} Z A^{1/2} Y)]`, `Y ~ type-1 beta(α, (p+1)/2)`.
pub fn lemma42_check(
    table: &ZonalTable,
    alpha: f64,
    kappa: &Partition,
    a: &PDMatrix,
    z: &SymMatrix,
    samples: usize,
    seed: u64,
) -> Result<Check> {
    let p = a.dim();
    if p != table.dim() || z.dim() != p {
        return Err(Error::DimensionMismatch { expected: table.dim(), found: p });
    }
    if !(alpha > gamma_p_bound(p)) {
        return Err(Error::domain(format!("lemma 4.2 needs alpha > (p-1)/2 (p={p})")));
    }
    let h = half_p1(p);
    let scale = (alpha * a.logdet() + log_beta_p(p, alpha, h)?).exp();
    let zc = z.congruence_by(a)?;
    let sampler = Type1BetaSampler::new(p, alpha, h)?;
    let label = format!("lemma42 K={kappa}");
    let est = monte_carlo(samples, seed, &label, |rng| {
        let y = sampler.draw(rng);
        table.eval_eigen(kappa, &product_eigenvalues(&zc, &y)?)
    })?;
    let rhs = (log_gamma_p_partition(p, alpha, kappa)? + crate::special::log_gamma_p(p, h)?
        - log_gamma_p_partition(p, alpha + h, kappa)?
        + alpha * a.logdet())
    .exp()
        * table.eval_eigen(kappa, &zc.eigenvalues())?;
    Ok(Check::new(label, est.scaled(scale), rhs))
}

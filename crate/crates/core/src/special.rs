//! Matrix-variate gamma and beta functions, partition Pochhammer symbols and
//! the first-term Stirling device.
//!
//! Everything is carried in log space: Γ_p overflows quickly in p and the
//! operator constants are ratios of Γ_p values.

use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::zonal::Partition;

/// `(p - 1) / 2`, the lower bound on Γ_p arguments.
pub fn gamma_p_bound(p: usize) -> f64 {
    (p as f64 - 1.0) / 2.0
}

/// `(p + 1) / 2`, the ubiquitous Jacobian shift.
pub fn half_p1(p: usize) -> f64 {
    (p as f64 + 1.0) / 2.0
}

pub fn log_gamma(x: f64) -> f64 {
    ln_gamma(x)
}

/// `log Γ_p(α) = p(p-1)/4 log π + Σ_{j=1}^p log Γ(α - (j-1)/2)`.
pub fn log_gamma_p(p: usize, alpha: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::domain("dimension p must be positive"));
    }
    if !(alpha > gamma_p_bound(p)) {
        return Err(Error::domain(format!(
            "Gamma_p needs alpha > (p-1)/2: p={p}, alpha={alpha}"
        )));
    }
    let pf = p as f64;
    let mut acc = pf * (pf - 1.0) / 4.0 * PI.ln();
    for j in 0..p {
        acc += ln_gamma(alpha - j as f64 / 2.0);
    }
    Ok(acc)
}

/// `log B_p(a, b) = log Γ_p(a) + log Γ_p(b) - log Γ_p(a + b)`.
pub fn log_beta_p(p: usize, a: f64, b: f64) -> Result<f64> {
    Ok(log_gamma_p(p, a)? + log_gamma_p(p, b)? - log_gamma_p(p, a + b)?)
}

/// `d/dα log Γ_p(α) = Σ_j ψ(α - (j-1)/2)`.
pub fn digamma_p(p: usize, alpha: f64) -> Result<f64> {
    if !(alpha > gamma_p_bound(p)) {
        return Err(Error::domain(format!("digamma_p needs alpha > (p-1)/2, got {alpha}")));
    }
    Ok((0..p).map(|j| digamma(alpha - j as f64 / 2.0)).sum())
}

/// Rising factorial `(b)_k`. Uses log-gamma differences when `b > 0`, an
/// explicit product otherwise so zeros and sign changes are exact.
pub fn rising_factorial(b: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if b > 0.0 {
        (ln_gamma(b + k as f64) - ln_gamma(b)).exp()
    } else {
        (0..k).map(|i| b + i as f64).product()
    }
}

/// `(a)_K = Π_j (a - (j-1)/2)_{k_j}`; `(a)_∅ = 1`.
pub fn pochhammer_partition(a: f64, kappa: &Partition) -> f64 {
    kappa
        .parts()
        .iter()
        .enumerate()
        .map(|(j, &kj)| rising_factorial(a - j as f64 / 2.0, kj))
        .product()
}

/// `log Γ_p(α, K) = log Γ_p(α) + log (α)_K`; needs `(α)_K > 0`.
pub fn log_gamma_p_partition(p: usize, alpha: f64, kappa: &Partition) -> Result<f64> {
    let (sign, logabs) = log_gamma_p_partition_signed(p, alpha, kappa)?;
    if sign <= 0.0 {
        return Err(Error::domain(format!(
            "(alpha)_K is not positive for alpha={alpha}, K={kappa}"
        )));
    }
    Ok(logabs)
}

/// Signed form: `(sign of (α)_K, log |Γ_p(α, K)|)`; sign 0 means the value is zero.
pub fn log_gamma_p_partition_signed(
    p: usize,
    alpha: f64,
    kappa: &Partition,
) -> Result<(f64, f64)> {
    let lg = log_gamma_p(p, alpha)?;
    let poch = pochhammer_partition(alpha, kappa);
    if poch == 0.0 {
        return Ok((0.0, f64::NEG_INFINITY));
    }
    Ok((poch.signum(), lg + poch.abs().ln()))
}

/// First Stirling term, in log form: `log(√(2π) z^{z+γ-1/2} e^{-z}) ≈ log Γ(z + γ)`.
pub fn stirling_gamma(z: f64, gamma_shift: f64) -> f64 {
    0.5 * (2.0 * PI).ln() + (z + gamma_shift - 0.5) * z.ln() - z
}

/// `log Γ_p(z + shift)` with every scalar factor replaced by its Stirling term
/// (the constant π factor is kept exact).
pub fn stirling_gamma_p(p: usize, z: f64, shift: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * PI.ln()
        + (0..p).map(|j| stirling_gamma(z, shift - j as f64 / 2.0)).sum::<f64>()
}

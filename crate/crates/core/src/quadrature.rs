//! Adaptive Gauss–Legendre quadrature for scalar integrals.
//!
//! Each panel is integrated with a 20-point rule and again as two halves;
//! the difference is the panel's error estimate. The panel with the largest
//! estimate is bisected until the global estimate meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 20;
const MAX_PANELS: usize = 20_000;

/// Default absolute tolerance for the scalar oracles.
pub const ABS_TOL: f64 = 1e-10;
/// Default relative tolerance for the scalar oracles.
pub const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn rule(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, evals: &mut usize) -> Result<f64> {
    let (nodes, weights) = legendre_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        let v = f(mid + half * x);
        if !v.is_finite() {
            return Err(Error::NonfiniteIntegrand { value: v });
        }
        acc += w * v;
    }
    *evals += ORDER;
    Ok(acc * half)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn make_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, evals: &mut usize) -> Result<Panel> {
    let m = 0.5 * (a + b);
    let whole = rule(f, a, b, evals)?;
    let halves = rule(f, a, m, evals)? + rule(f, m, b, evals)?;
    Ok(Panel { a, b, value: halves, err: (whole - halves).abs() })
}

/// `∫_a^b f` on a finite interval. Endpoints are never evaluated, so
/// integrable endpoint singularities are tolerated.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("finite limits required; use integrate_to_infinity"));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error_estimate: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut evals = 0;
    let mut heap = BinaryHeap::new();
    heap.push(make_panel(&mut f, lo, hi, &mut evals)?);
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || heap.len() >= MAX_PANELS {
            return Ok(QuadResult { value: sign * total, error_estimate: err, evaluations: evals });
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // panel can no longer be bisected in floating point
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        heap.push(make_panel(&mut f, worst.a, m, &mut evals)?);
        heap.push(make_panel(&mut f, m, worst.b, &mut evals)?);
    }
}

/// `∫_a^∞ f` through `t = a + u/(1-u)`, `u ∈ (0, 1)`.
pub fn integrate_to_infinity(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    integrate(
        |u| {
            let one_minus = 1.0 - u;
            let v = f(a + u / one_minus);
            if v == 0.0 {
                0.0
            } else {
                v / (one_minus * one_minus)
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// `∫_a^b (t-a)^{e-1} g(t) dt` with the endpoint singularity removed by
/// `t = a + w^{1/e}`; `b` may be infinite.
pub fn integrate_left_power(
    mut g: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    e: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if !(e > 0.0) {
        return Err(Error::domain(format!("power exponent must be positive, got {e}")));
    }
    let inv = 1.0 / e;
    let h = move |w: f64| g(a + w.powf(inv)) * inv;
    let r = if b.is_infinite() {
        integrate_to_infinity(h, 0.0, abs_tol, rel_tol)?
    } else {
        integrate(h, 0.0, (b - a).powf(e), abs_tol, rel_tol)?
    };
    Ok(r)
}

/// `∫_a^b (b-t)^{e-1} g(t) dt`, singularity at the right endpoint removed.
pub fn integrate_right_power(
    mut g: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    e: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    integrate_left_power(move |t| g(a + b - t), a, b, e, abs_tol, rel_tol)
}

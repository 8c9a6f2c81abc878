//! Operator evaluators against quadrature, closed forms and each other.

use conefrac::densities::{matrix_gamma, PathwayKind, PathwayParams, PathwayScale, TestFunction};
use conefrac::mtransform::{
    closed_form, convolution_rhs, kober1_rhs, kober2_rhs, m_transform, Construction, MTransformMethod, MTransformQuery,
};
use conefrac::operators::{
    kober1_apply, kober1_eigen_constant, kober2_apply, pathway1_apply, pathway2_apply, quad, rl_left_apply,
    weyl_right_apply, McConfig, OperatorEvaluation,
};
use conefrac::sampling::within_band;
use conefrac::special::{half_p1, log_gamma, log_gamma_p};
use conefrac::PDMatrix;

fn mc(n: usize, seed: u64) -> McConfig {
    McConfig::new(n, seed)
}

fn u2() -> PDMatrix {
    PDMatrix::from_rows(&[vec![1.2, 0.25], vec![0.25, 0.8]]).unwrap()
}

fn agree(a: &OperatorEvaluation, b: &OperatorEvaluation) -> bool {
    let se = a.std_error().hypot(b.std_error());
    (a.estimate() - b.estimate()).abs() <= 3.0 * se
}

#[test]
fn scalar_kober2_matches_quadrature() {
    // x^ζ ∫_x^∞ (t-x)^{α-1} t^{-ζ-α} e^{-t} dt / Γ(α) at x = 1, ζ = α = 1
    let f = TestFunction::ExpTrace(1.0);
    let q = quad::kober2(1.0, 1.0, &f, 1.0).unwrap();
    let e = kober2_apply(1.0, 1.0, &f, &PDMatrix::diag(&[1.0]).unwrap(), mc(100_000, 1)).unwrap();
    assert!(within_band(e.estimate(), q, e.std_error()), "{} ± {} vs {q}", e.estimate(), e.std_error());
    // ∫_1^∞ e^{-t}/t² dt = e^{-1} - E₁(1)
    let e1 = 0.219_383_934_395_520_3;
    let direct = (-1.0f64).exp() - e1;
    assert!((q - direct).abs() < 1e-10, "{q} vs {direct}");
}

#[test]
fn scalar_first_kind_operators_match_quadrature() {
    let f = TestFunction::ExpTrace(0.7);
    for (zeta, alpha, x) in [(0.5, 1.3, 0.8), (2.0, 0.6, 2.5)] {
        let q = quad::kober1(zeta, alpha, &f, x).unwrap();
        let e = kober1_apply(zeta, alpha, &f, &PDMatrix::diag(&[x]).unwrap(), mc(100_000, 2)).unwrap();
        assert!(within_band(e.estimate(), q, e.std_error()), "{} ± {} vs {q}", e.estimate(), e.std_error());
    }
}

#[test]
fn riemann_liouville_closed_forms() {
    for (alpha, lambda, x) in [(1.0, 0.0, 2.0), (2.0, 0.0, 1.5), (0.7, 1.3, 0.9), (1.6, 0.4, 3.0)] {
        let q = quad::rl_left(alpha, &TestFunction::DetPower(lambda), x).unwrap();
        let exact = (log_gamma(lambda + 1.0) - log_gamma(lambda + alpha + 1.0)).exp() * x.powf(lambda + alpha);
        assert!((q - exact).abs() <= 1e-8 * exact.max(1.0), "α={alpha} λ={lambda}: {q} vs {exact}");
    }
    // |X|^α times the ζ = 0 first-kind operator, draw for draw
    let f = TestFunction::density(matrix_gamma(2, 2.5, &PDMatrix::identity(2)).unwrap());
    let x = u2();
    let rl = rl_left_apply(1.7, &f, &x, mc(20_000, 3)).unwrap();
    let k1 = kober1_apply(0.0, 1.7, &f, &x, mc(20_000, 3)).unwrap();
    let scale = (1.7 * x.logdet()).exp();
    assert!((rl.estimate() - scale * k1.estimate()).abs() <= 1e-12 * rl.estimate().abs());
}

#[test]
fn semigroup_on_power_functions() {
    // first-kind operators compose: I^{ζ+α,β} I^{ζ,α} = I^{ζ,α+β} on x^λ
    let (zeta, alpha, beta, lambda) = (0.4, 0.8, 1.3, 0.6);
    let f = TestFunction::DetPower(lambda);
    let inner = move |x: f64| quad::kober1(zeta, alpha, &TestFunction::DetPower(lambda), x).unwrap();
    let g = TestFunction::custom("inner", move |m: &PDMatrix| inner(m.get(0, 0)));
    for x in [0.5, 1.7] {
        let composed = quad::kober1(zeta + alpha, beta, &g, x).unwrap();
        let direct = quad::kober1(zeta, alpha + beta, &f, x).unwrap();
        assert!((composed - direct).abs() <= 1e-8 * direct.abs().max(1.0), "{composed} vs {direct}");
    }
    let c = |z, a| kober1_eigen_constant(1, z, a, lambda).unwrap();
    assert!((c(zeta + alpha, beta) * c(zeta, alpha) - c(zeta, alpha + beta)).abs() < 1e-12);
}

#[test]
fn weyl_matches_kober2_at_zero_zeta() {
    let f = TestFunction::density(matrix_gamma(2, 2.5, &PDMatrix::identity(2)).unwrap());
    let alpha = 1.8;
    let weighted = f.clone().det_weighted(-alpha);
    let u = u2();
    let k = kober2_apply(0.0, alpha, &f, &u, mc(100_000, 5)).unwrap();
    let w = weyl_right_apply(alpha, &weighted, u.as_sym(), mc(100_000, 6)).unwrap();
    assert!(agree(&k, &w), "{} ± {} vs {} ± {}", k.estimate(), k.std_error(), w.estimate(), w.std_error());
}

#[test]
fn matrix_scale_equal_to_scalar_gives_the_same_operator() {
    let f = TestFunction::density(matrix_gamma(2, 2.5, &PDMatrix::identity(2)).unwrap());
    let u = u2();
    let a = 1.4;
    for kind in [PathwayKind::First, PathwayKind::Second] {
        let s = PathwayParams::scalar(2, kind, 1.9, 0.8, 0.3, a).unwrap();
        let m = PathwayParams::new(2, kind, 1.9, 0.8, 0.3, PathwayScale::Matrix(PDMatrix::scaled_identity(2, a))).unwrap();
        let apply = |p: &PathwayParams| match kind {
            PathwayKind::First => pathway1_apply(p, &f, &u, mc(20_000, 7)).unwrap(),
            PathwayKind::Second => pathway2_apply(p, &f, &u, mc(20_000, 7)).unwrap(),
        };
        assert_eq!(apply(&s).estimate(), apply(&m).estimate());
    }
}

#[test]
fn genuine_matrix_scale_agrees_with_its_scalar_limit() {
    // a matrix scale close to aI goes through the generic density route
    let f = TestFunction::density(matrix_gamma(2, 2.5, &PDMatrix::identity(2)).unwrap());
    let u = u2();
    let a = PDMatrix::from_rows(&[vec![1.4, 0.0], vec![0.0, 1.4 + 1e-9]]).unwrap();
    let s = PathwayParams::scalar(2, PathwayKind::Second, 1.9, 0.8, 0.3, 1.4).unwrap();
    let m = PathwayParams::new(2, PathwayKind::Second, 1.9, 0.8, 0.3, PathwayScale::Matrix(a)).unwrap();
    let es = pathway2_apply(&s, &f, &u, mc(100_000, 8)).unwrap();
    let em = pathway2_apply(&m, &f, &u, mc(100_000, 9)).unwrap();
    assert!(agree(&es, &em), "{} ± {} vs {} ± {}", es.estimate(), es.std_error(), em.estimate(), em.std_error());
}

#[test]
fn pathway_near_one_is_close_to_limit() {
    let f = TestFunction::ExpTrace(1.0);
    let (gamma, eta, a, u) = (1.0, 1.0, 1.0, 1.0);
    let q = 1.0 - 1e-4;
    let second = quad::pathway2(gamma, eta, q, a, &f, u).unwrap();
    let second_limit = quad::pathway2_limit(gamma, a * eta, &f, u).unwrap();
    assert!((second - second_limit).abs() <= 1e-3 * second_limit, "{second} vs {second_limit}");
    let first = quad::pathway1(gamma + 0.5, eta, q, a, &f, u).unwrap();
    let first_limit = quad::pathway1_limit(gamma + 0.5, a * eta, &f, u).unwrap();
    assert!((first - first_limit).abs() <= 1e-3 * first_limit, "{first} vs {first_limit}");
}

#[test]
fn monte_carlo_m_transforms_match_closed_forms() {
    let rate = PDMatrix::from_rows(&[vec![1.3, 0.2], vec![0.2, 0.7]]).unwrap();
    let functions = [
        TestFunction::density(matrix_gamma(2, 2.5, &rate).unwrap()),
        TestFunction::ExpTrace(1.5),
        TestFunction::ExpTrace(0.8).det_weighted(0.5),
    ];
    for f in &functions {
        for (i, s) in [1.0, 1.4, 2.0, 2.6, 3.3].into_iter().enumerate() {
            let query = MTransformQuery { s, method: MTransformMethod::MonteCarlo, mc: mc(50_000, 40 + i as u64) };
            let est = m_transform(f, 2, &query).unwrap();
            let exact = closed_form(f, 2, s).unwrap();
            assert!(
                within_band(est.estimate, exact, est.std_error),
                "{} at s={s}: {} ± {} vs {exact}",
                f.label(),
                est.estimate,
                est.std_error
            );
        }
    }
}

#[test]
fn convolution_and_operator_transforms_are_consistent() {
    let f = TestFunction::density(matrix_gamma(2, 3.0, &PDMatrix::identity(2)).unwrap());
    let (p, zeta, alpha) = (2, 1.1, 1.7);
    let h = half_p1(p);
    let g = |a: f64| log_gamma_p(p, a).unwrap();
    for s in [1.2, 1.5, 2.1] {
        let product = convolution_rhs(p, zeta, alpha, s, &f, Construction::Product).unwrap();
        let op = kober2_rhs(p, zeta, alpha, s, &f).unwrap() * (g(alpha + zeta + h) - g(zeta + h)).exp();
        assert!((product - op).abs() <= 1e-12 * op.abs());
    }
    for s in [0.7, 1.0, 1.3] {
        let ratio = convolution_rhs(p, zeta, alpha, s, &f, Construction::Ratio).unwrap();
        let op = kober1_rhs(p, zeta, alpha, s, &f).unwrap() * (g(zeta + alpha) - g(zeta)).exp();
        assert!((ratio - op).abs() <= 1e-12 * op.abs());
    }
}

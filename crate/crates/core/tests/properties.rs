//! Randomized invariants of the matrix primitives, zonal polynomials and
//! densities.

use conefrac::densities::{pathway_density, type1_beta, type2_beta, PathwayKind, PathwayParams, PathwayScale};
use conefrac::pdcore::{congruence, loewner_gt, sqrt_pd};
use conefrac::special::log_beta_p;
use conefrac::zonal::{enumerate_partitions, hypergeometric_matrix, zonal_eval, ZonalTable};
use conefrac::{PDMatrix, SymMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.data())
}

fn from_na(m: &DMatrix<f64>) -> SymMatrix {
    let p = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    SymMatrix::new(p, sym.transpose().as_slice().to_vec()).unwrap()
}

/// `B Bᵀ + floor·I` from p² free entries.
fn pd_from(p: usize, entries: &[f64], floor: f64) -> PDMatrix {
    let b = DMatrix::from_row_slice(p, p, &entries[..p * p]);
    PDMatrix::new(from_na(&(&b * b.transpose() + DMatrix::identity(p, p) * floor))).unwrap()
}

fn sym_from(p: usize, entries: &[f64]) -> SymMatrix {
    from_na(&DMatrix::from_row_slice(p, p, &entries[..p * p]))
}

fn orthogonal(p: usize, entries: &[f64]) -> DMatrix<f64> {
    let g = DMatrix::from_row_slice(p, p, &entries[..p * p]) + DMatrix::identity(p, p) * 0.1;
    g.qr().q()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn dim_and_entries(n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=3, prop::collection::vec(-1.0f64..1.0, n * 9))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn det_identity_plus_product((p, e) in dim_and_entries(2)) {
        let a = pd_from(p, &e, 0.05);
        let c = pd_from(p, &e[9..], 0.05);
        let via_congruence = a.congruence(&c).unwrap().logdet_identity_plus();
        let direct = (DMatrix::identity(p, p) + to_na(a.as_sym()) * to_na(c.as_sym())).determinant().ln();
        prop_assert!(rel(via_congruence, direct) < 1e-10, "{via_congruence} vs {direct}");
    }

    #[test]
    fn square_root_properties((p, e) in dim_and_entries(2)) {
        let a = pd_from(p, &e, 0.05);
        let c = pd_from(p, &e[9..], 0.05);
        let r = sqrt_pd(&a);
        let back = to_na(r.as_sym()) * to_na(r.as_sym());
        let scale = a.max_eigenvalue();
        prop_assert!((back - to_na(a.as_sym())).amax() <= 1e-10 * scale);
        let ld = sqrt_pd(&congruence(&a, &c).unwrap()).logdet();
        prop_assert!((ld - 0.5 * (a.logdet() + c.logdet())).abs() < 1e-10);
    }

    #[test]
    fn loewner_order((p, e) in dim_and_entries(3)) {
        let c = pd_from(p, &e, 0.05);
        let b = c.add_pd(&pd_from(p, &e[9..], 0.05)).unwrap();
        let a = b.add_pd(&pd_from(p, &e[18..], 0.05)).unwrap();
        prop_assert!(loewner_gt(&a, b.as_sym()).unwrap());
        prop_assert!(loewner_gt(&b, c.as_sym()).unwrap());
        prop_assert!(loewner_gt(&a, c.as_sym()).unwrap());
        prop_assert!(!loewner_gt(&c, a.as_sym()).unwrap());
        // antisymmetry on arbitrary pairs
        let x = pd_from(p, &e, 0.05);
        let y = pd_from(p, &e[18..], 0.05);
        prop_assert!(!(loewner_gt(&x, y.as_sym()).unwrap() && loewner_gt(&y, x.as_sym()).unwrap()));
    }

    #[test]
    fn zonal_invariances((p, e) in dim_and_entries(2), k in 0usize..=5) {
        let table = ZonalTable::shared(5, p).unwrap();
        let z = sym_from(p, &e);
        let q = orthogonal(p, &e[9..]);
        let rotated = from_na(&(&q * to_na(&z) * q.transpose()));
        for kappa in enumerate_partitions(k, p) {
            let base = zonal_eval(&table, &kappa, &z).unwrap();
            let rot = zonal_eval(&table, &kappa, &rotated).unwrap();
            prop_assert!((base - rot).abs() <= 1e-10 * (1.0 + base.abs()), "{kappa}: {base} vs {rot}");
            for c in [2.0, 0.5] {
                let scaled = zonal_eval(&table, &kappa, &z.scale(c)).unwrap();
                let expected = c.powi(k as i32) * base;
                prop_assert!((scaled - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn zonal_scalar_case(x in -2.0f64..2.0, k in 0usize..=8) {
        let table = ZonalTable::shared(8, 1).unwrap();
        let parts = enumerate_partitions(k, 1);
        prop_assert_eq!(parts.len(), 1);
        let v = zonal_eval(&table, &parts[0], &SymMatrix::diag(&[x])).unwrap();
        prop_assert!((v - x.powi(k as i32)).abs() <= 1e-14 * (1.0 + x.abs().powi(k as i32)));
    }

    #[test]
    fn exponential_series_inverse((p, e) in dim_and_entries(1)) {
        let z = sym_from(p, &e).scale(0.15);
        let plus = hypergeometric_matrix(&[], &[], &z, 8).unwrap().value;
        let minus = hypergeometric_matrix(&[], &[], &z.scale(-1.0), 8).unwrap().value;
        prop_assert!((plus * minus - 1.0).abs() < 1e-8);
    }

    #[test]
    fn type1_beta_reflection((p, e) in dim_and_entries(1), a in 1.1f64..4.0, b in 1.1f64..4.0) {
        let m = pd_from(p, &e, 0.05);
        let x = m.scale(1.0 / (m.max_eigenvalue() + 0.3));
        let reflected = PDMatrix::new(x.as_sym().identity_minus()).unwrap();
        let d = type1_beta(p, a, b).unwrap();
        let swapped = type1_beta(p, b, a).unwrap();
        prop_assert!((d.log_pdf(&x) - swapped.log_pdf(&reflected)).abs() < 1e-9);
    }

    #[test]
    fn outside_support_is_negative_infinity((p, e) in dim_and_entries(1), bump in 1e-9f64..3.0) {
        let m = pd_from(p, &e, 0.05);
        // largest eigenvalue pushed to 1 + bump
        let x = m.scale((1.0 + bump) / m.max_eigenvalue());
        let d = type1_beta(p, 1.7, 2.2).unwrap();
        prop_assert_eq!(d.log_pdf(&x), f64::NEG_INFINITY);
        prop_assert!(!d.in_support(&x));
        let pw = pathway_density(PathwayParams::scalar(p, PathwayKind::Second, 0.9, 1.2, 0.5, 2.0).unwrap()).unwrap();
        // support of the pathway density is a(1-q)X < I
        prop_assert_eq!(pw.log_pdf(&x), f64::NEG_INFINITY);
        prop_assert!(type2_beta(p, 1.7, 2.2).unwrap().log_pdf(&x).is_finite());
    }

    #[test]
    fn matrix_scale_a_identity_matches_scalar((p, e) in dim_and_entries(1), a in 0.3f64..3.0, q in -1.0f64..0.9) {
        let m = pd_from(p, &e, 0.05);
        let x = m.scale(0.9 / (a * (1.0 - q) * m.max_eigenvalue()));
        for kind in [PathwayKind::First, PathwayKind::Second] {
            let s = pathway_density(PathwayParams::scalar(p, kind, 1.6, 0.8, q, a).unwrap()).unwrap();
            let mat = PathwayScale::Matrix(PDMatrix::scaled_identity(p, a));
            let mm = pathway_density(PathwayParams::new(p, kind, 1.6, 0.8, q, mat).unwrap()).unwrap();
            prop_assert!((s.log_pdf(&x) - mm.log_pdf(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_function_symmetry(p in 1usize..=4, a in 1.6f64..6.0, b in 1.6f64..6.0) {
        let ab = log_beta_p(p, a, b).unwrap();
        let ba = log_beta_p(p, b, a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
    }
}

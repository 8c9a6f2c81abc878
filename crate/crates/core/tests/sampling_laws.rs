//! Distributional checks of the samplers against closed forms.

use conefrac::densities::{
    hyper_weighted_beta, matrix_gamma, pathway_density, pathway_limit_density, type1_beta, type2_beta, MatrixDensity,
    PathwayKind, PathwayParams,
};
use conefrac::sampling::{
    collect_statistic, det_moment, ks_critical_1pct, ks_statistic, monte_carlo, sample_product, sample_ratio,
    within_band, MatrixGammaSampler, MatrixSampler, Type1BetaSampler,
};
use conefrac::special::{half_p1, log_gamma_p};
use conefrac::zonal::ZonalTable;
use conefrac::{PDMatrix, Result, RngStream, SymMatrix};
use statrs::distribution::{Beta, ContinuousCDF};

fn catalog() -> Vec<MatrixDensity> {
    let rate = PDMatrix::from_rows(&[vec![1.4, 0.2], vec![0.2, 0.9]]).unwrap();
    let table = ZonalTable::shared(8, 2).unwrap();
    vec![
        type1_beta(2, 2.0, 3.0).unwrap(),
        type2_beta(2, 3.0, 4.5).unwrap(),
        matrix_gamma(2, 2.5, &rate).unwrap(),
        pathway_density(PathwayParams::scalar(2, PathwayKind::Second, 1.1, 0.7, 0.3, 1.5).unwrap()).unwrap(),
        pathway_density(PathwayParams::scalar(2, PathwayKind::First, 1.8, 0.9, -0.5, 0.8).unwrap()).unwrap(),
        pathway_limit_density(2, 1.4, 1.2, PathwayKind::Second).unwrap(),
        hyper_weighted_beta(0.6, 1.9, &SymMatrix::diag(&[0.3, -0.2]), &[0.8, 1.2], &[2.1], &table, 8).unwrap(),
    ]
}

#[test]
fn determinant_moments_match_m_transforms() {
    for (i, d) in catalog().iter().enumerate() {
        let sampler = d.sampler().unwrap();
        let p = d.dim();
        for h in [1.0, 2.0] {
            let exact = d.m_transform(h + half_p1(p)).unwrap();
            let est = det_moment(sampler.as_ref(), h, 100_000, 900 + i as u64).unwrap();
            assert!(
                within_band(est.estimate, exact, est.std_error),
                "{}: E|X|^{h} = {} ± {} vs {exact}",
                d.label(),
                est.estimate,
                est.std_error
            );
        }
    }
}

#[test]
fn scalar_beta_passes_ks_for_most_seeds() {
    let sampler = Type1BetaSampler::new(1, 2.0, 3.0).unwrap();
    let beta = Beta::new(2.0, 3.0).unwrap();
    let n = 10_000;
    let passes = (0..40u64)
        .filter(|&seed| {
            let draws = collect_statistic(n, seed, |rng| Ok(sampler.draw(rng).get(0, 0))).unwrap();
            ks_statistic(&draws, |x| beta.cdf(x)) < ks_critical_1pct(n)
        })
        .count();
    assert!(passes >= 38, "{passes}/40 seeds below the 1% critical value");
}

#[test]
fn product_law_determinant_moment() {
    let p = 2;
    let h = half_p1(p);
    let (zeta, alpha, gamma) = (0.7, 1.6, 2.2);
    let x1 = Type1BetaSampler::new(p, zeta + h, alpha).unwrap();
    let x2 = MatrixGammaSampler::scalar(p, gamma, 1.0).unwrap();
    let g = |a: f64| log_gamma_p(p, a).unwrap();
    for t in [0.5, 1.0] {
        let est = monte_carlo(100_000, 5, "product", |rng| Ok((t * sample_product(&x1, &x2, rng)?.logdet()).exp()))
            .unwrap();
        let exact =
            (g(zeta + h + t) + g(zeta + alpha + h) - g(zeta + h) - g(zeta + alpha + h + t) + g(gamma + t) - g(gamma)).exp();
        assert!(within_band(est.estimate, exact, est.std_error), "t={t}: {} ± {} vs {exact}", est.estimate, est.std_error);
    }
}

struct Fixed(PDMatrix);

impl MatrixSampler for Fixed {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn sample(&self, _rng: &mut RngStream) -> Result<PDMatrix> {
        Ok(self.0.clone())
    }
}

#[test]
fn ratio_draws_dominate_the_second_factor() {
    let x1 = Type1BetaSampler::new(3, 1.5, 1.2).unwrap();
    let x2 = Fixed(PDMatrix::from_rows(&[vec![2.0, 0.4, 0.1], vec![0.4, 1.0, -0.2], vec![0.1, -0.2, 0.6]]).unwrap());
    let mut rng = RngStream::new(3, 0);
    for _ in 0..2_000 {
        let u = sample_ratio(&x1, &x2, &mut rng).unwrap();
        let gap = u.as_sym().sub(x2.0.as_sym()).unwrap();
        assert!(gap.eigenvalues().iter().all(|v| *v > 0.0), "U - X₂ not PD: {:?}", gap.eigenvalues());
    }
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let sampler = MatrixGammaSampler::scalar(3, 2.4, 1.0).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| det_moment(&sampler, 0.7, 50_000, 17).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&four).unwrap());
    assert_eq!(one.estimate.to_bits(), four.estimate.to_bits());
}

use imbibition::posterior::{
    correlation_with_gaps, marginal_evolution, pca_of_matrix, summarize, weighted_correlation, weighted_pca,
    weighted_quantile, WeightedSample,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("p{i}")).collect()
}

fn uniform(values: Vec<Vec<f64>>) -> WeightedSample {
    let n = values.len();
    let d = values[0].len();
    WeightedSample::new(names(d), values, vec![1.0; n]).unwrap()
}

#[test]
fn quantile_examples() {
    let s = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(weighted_quantile(&s, &[0.2; 5], 0.5).unwrap(), 3.0);
    assert_eq!(weighted_quantile(&[0.0, 10.0], &[0.9, 0.1], 0.5).unwrap(), 0.0);
    assert_eq!(weighted_quantile(&s, &[0.2; 5], 1.0).unwrap(), 5.0);
    assert_eq!(weighted_quantile(&[4.0, -1.0], &[0.5, 0.5], 0.5).unwrap(), 1.5);
    assert!(weighted_quantile(&s, &[0.2; 5], 1.5).is_err());
    assert!(weighted_quantile(&[], &[], 0.5).is_err());
}

#[test]
fn point_mass_summary_has_zero_width() {
    let sample = uniform(vec![vec![0.3, -2.0]; 50]);
    for s in summarize(&sample, 0.95).unwrap() {
        assert_eq!(s.lower, s.median);
        assert_eq!(s.upper, s.median);
    }
}

#[test]
fn diagonal_covariance_pca() {
    // four points whose biased covariance is exactly diag(4, 1, 0)
    let sample = uniform(vec![
        vec![2.0, 1.0, 0.0],
        vec![2.0, -1.0, 0.0],
        vec![-2.0, 1.0, 0.0],
        vec![-2.0, -1.0, 0.0],
    ]);
    let pca = weighted_pca(&sample, false);
    let expected = [0.8, 0.2, 0.0];
    for k in 0..3 {
        assert!((pca.explained[k] - expected[k]).abs() < 1e-12, "{:?}", pca.explained);
    }
    for (i, e) in [1.0, 0.0, 0.0].iter().enumerate() {
        assert!((pca.squared_loadings[(i, 0)] - e).abs() < 1e-12);
    }
    assert!((pca.explained.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let direct = pca_of_matrix(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 0.0])));
    assert_eq!(direct.eigenvalues, vec![4.0, 1.0, 0.0]);
}

#[test]
fn collinear_cloud_has_one_component() {
    let sample = uniform((0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect());
    let corr = weighted_correlation(&sample).unwrap();
    assert!((corr[(0, 1)] - 1.0).abs() < 1e-12);
    let pca = weighted_pca(&sample, true);
    assert!((pca.explained[0] - 1.0).abs() < 1e-12 && pca.explained[1].abs() < 1e-12);
    assert!((pca.squared_loadings[(0, 0)] - 0.5).abs() < 1e-12);
    assert!((pca.squared_loadings[(1, 0)] - 0.5).abs() < 1e-12);
}

#[test]
fn independent_and_isotropic_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sample = uniform(
        (0..10_000)
            .map(|_| vec![rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)])
            .collect(),
    );
    let corr = weighted_correlation(&sample).unwrap();
    assert!(corr[(0, 1)].abs() < 0.05);
    let pca = weighted_pca(&sample, false);
    assert!((pca.explained[0] - 0.5).abs() < 0.05 && (pca.explained[1] - 0.5).abs() < 0.05);
}

#[test]
fn constant_parameter_makes_correlation_undefined() {
    let sample = uniform((0..10).map(|i| vec![i as f64, 1.0, (i * i) as f64]).collect());
    assert!(weighted_correlation(&sample).is_err());
    let (_, undefined) = correlation_with_gaps(&sample);
    assert_eq!(undefined, vec![1]);
}

#[test]
fn histograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let prior = uniform((0..20_000).map(|_| vec![rng.random_range(0.0..2.0)]).collect());
    let point = uniform(vec![vec![0.77]; 30]);
    let h = &marginal_evolution(&[prior, point], &[(0.0, 2.0)], 40).unwrap()[0];
    let width = h.bin_width();
    for densities in &h.densities {
        assert!((densities.iter().sum::<f64>() * width - 1.0).abs() < 1e-9);
    }
    // flat at 1/2 within about four binomial standard errors
    let se = (0.025f64 * 0.975 / 20_000.0).sqrt() / width;
    assert!(h.densities[0].iter().all(|d| (d - 0.5).abs() < 4.0 * se), "{:?}", h.densities[0]);
    assert_eq!(h.densities[1].iter().filter(|&&d| d > 0.0).count(), 1);
}

fn cloud(d: usize, n: usize, seed: u64) -> WeightedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            (0..d).map(|i| (0..d).map(|j| mix[i * d + j] * z[j]).sum()).collect()
        })
        .collect();
    let weights = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    WeightedSample::new(names(d), values, weights).unwrap()
}

fn rotation(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    m.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_invariants(d in 2usize..7, seed in any::<u64>(), standardize in any::<bool>()) {
        let sample = cloud(d, 200, seed);
        let pca = weighted_pca(&sample, standardize);
        let l = &pca.loadings;
        let gram = l.transpose() * l;
        prop_assert!((gram - DMatrix::identity(d, d)).abs().max() < 1e-10);

        let target = if standardize { weighted_correlation(&sample).unwrap() } else { sample.covariance() };
        let rebuilt = l * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(pca.eigenvalues.clone())) * l.transpose();
        prop_assert!((&rebuilt - &target).norm() <= 1e-10 * target.norm());

        prop_assert!(pca.explained.iter().all(|&f| f >= 0.0));
        prop_assert!(pca.explained.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((pca.explained.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for k in 0..d {
            prop_assert!((pca.squared_loadings.column(k).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spectrum_is_rotation_invariant(d in 2usize..6, seed in any::<u64>()) {
        let sample = cloud(d, 150, seed);
        let r = rotation(d, seed ^ 0x5eed);
        let rotated_values = sample
            .values
            .iter()
            .map(|x| (0..d).map(|i| (0..d).map(|j| r[(i, j)] * x[j]).sum()).collect())
            .collect();
        let rotated = WeightedSample::new(sample.names.clone(), rotated_values, sample.weights.clone()).unwrap();
        let a = weighted_pca(&sample, false).eigenvalues;
        let b = weighted_pca(&rotated, false).eigenvalues;
        let scale = a[0].max(1e-300);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * scale, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn intervals_contain_the_median(
        values in proptest::collection::vec(-10.0..10.0f64, 1..80),
        raw in proptest::collection::vec(0.0..1.0f64, 80),
        nu in 0.0..1.0f64,
    ) {
        let weights: Vec<f64> = raw[..values.len()].iter().map(|w| w + 1e-3).collect();
        let sample = WeightedSample::new(names(1), values.iter().map(|&v| vec![v]).collect(), weights).unwrap();
        let s = summarize(&sample, nu).unwrap()[0];
        prop_assert!(s.lower <= s.median && s.median <= s.upper, "{:?}", s);
    }

    #[test]
    fn quantile_ignores_sample_order(
        values in proptest::collection::vec(-5.0..5.0f64, 2..40),
        q in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let n = values.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let v2: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let w2: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
        prop_assert_eq!(
            weighted_quantile(&values, &weights, q).unwrap(),
            weighted_quantile(&v2, &w2, q).unwrap()
        );
    }
}

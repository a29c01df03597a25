use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srrw::asymptotics::{
    covariance_u, covariance_u_fundamental, covariance_v, loewner_gap, reduction_bound, sampling_variance,
};
use srrw::validation::random_chain;
use srrw::compute_spectrum;

const GRID: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn covariance_is_a_rank_deficient_psd_matrix(seed in any::<u64>(), n in 2usize..=12, alpha in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let spec = compute_spectrum(&k).unwrap();
        let v = covariance_v(&spec, alpha).unwrap().matrix;
        prop_assert!((&v - v.transpose()).amax() <= 1e-14 * v.amax());
        prop_assert!((&v * DVector::from_element(n, 1.0)).amax() <= 1e-10);
        let eig = SymmetricEigen::new(v.clone()).eigenvalues;
        let mut sorted: Vec<f64> = eig.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let scale = sorted[n - 1];
        prop_assert!(sorted[0].abs() <= 1e-10 * scale.max(1.0));
        if n > 1 {
            prop_assert!(sorted[1] > 1e-10 * scale);
        }
    }

    #[test]
    fn spectral_and_fundamental_u_agree(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let spec = compute_spectrum(&k).unwrap();
        let a = covariance_u(&spec).unwrap();
        let b = covariance_u_fundamental(&k).unwrap();
        prop_assert!((&a - &b).amax() <= 1e-8 * a.amax().max(1.0));
    }

    #[test]
    fn variance_shrinks_like_one_over_alpha(seed in any::<u64>(), n in 2usize..=10, g in prop::collection::vec(-5.0f64..5.0, 10)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let spec = compute_spectrum(&k).unwrap();
        let g = &g[..n];
        let base = sampling_variance(g, &covariance_v(&spec, 0.0).unwrap().matrix);
        let lambda = spec.eigenvalues();
        let sup_for = |a: f64| lambda[..n - 1].iter().map(|l| a / (2.0 * a * (1.0 + l) + 1.0)).fold(0.0, f64::max);
        let loose = base / (2.0 * (1.0 + lambda[0]));
        for a in GRID.into_iter().skip(1) {
            let scaled = a * sampling_variance(g, &covariance_v(&spec, a).unwrap().matrix);
            let tight = base * sup_for(a);
            prop_assert!(scaled <= tight * (1.0 + 1e-10) + 1e-12);
            prop_assert!(tight <= loose * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn larger_alpha_is_loewner_smaller(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let spec = compute_spectrum(&k).unwrap();
        let vs: Vec<DMatrix<f64>> = GRID.iter().map(|&a| covariance_v(&spec, a).unwrap().matrix).collect();
        for pair in vs.windows(2) {
            prop_assert!(loewner_gap(&pair[1], &pair[0]) > 0.0);
        }
    }

    #[test]
    fn reduction_ratio_respects_the_bound(
        seed in any::<u64>(),
        n in 2usize..=10,
        alpha in 0.0f64..10.0,
        g in prop::collection::vec(-5.0f64..5.0, 10),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let spec = compute_spectrum(&k).unwrap();
        if let Ok(r) = reduction_bound(&g[..n], &spec, alpha) {
            prop_assert!(r.ratio <= r.bound + 1e-12);
            prop_assert!(r.ratio > 0.0 && r.bound <= 1.0 + 1e-15);
        }
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srrw::graph::random_connected;
use srrw::validation::random_chain;
use srrw::{build_mhrw, build_srw, compute_spectrum, verify_dbe};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spectral_reconstruction_and_invariance(seed in any::<u64>(), n in 2usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let p = k.to_dense();
        let mu = nalgebra::DVector::from_column_slice(k.mu());
        prop_assert!((mu.transpose() * &p - mu.transpose()).amax() <= 1e-10);
        prop_assert!(verify_dbe(&k) <= 1e-12);
        let spec = compute_spectrum(&k).unwrap();
        prop_assert!((spec.reconstruct() - &p).amax() <= 1e-8);
        let eig = spec.eigenvalues();
        prop_assert!(eig.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(eig[n - 1], 1.0);
    }

    #[test]
    fn uniform_metropolis_rows(seed in any::<u64>(), n in 2usize..=25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected(n, 0.4, false, &mut rng).unwrap();
        let k = build_mhrw(&g, &vec![1.0 / n as f64; n]).unwrap();
        for i in 0..n {
            for &(j, _) in g.neighbors(i) {
                let expected = (1.0 / g.degree(i).unwrap()).min(1.0 / g.degree(j).unwrap());
                prop_assert_eq!(k.get(i, j), expected);
            }
        }
    }

    #[test]
    fn simple_walk_targets_degrees(seed in any::<u64>(), n in 2usize..=25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected(n, 0.4, true, &mut rng).unwrap();
        let k = build_srw(&g).unwrap();
        let total: f64 = g.degrees().iter().sum();
        for (m, d) in k.mu().iter().zip(g.degrees()) {
            prop_assert!((m - d / total).abs() <= 1e-15);
        }
        prop_assert!(verify_dbe(&k) <= 1e-15);
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srrw::estimators::tvd;
use srrw::kernel::{kernel_matrix, kernel_row, stationary_of, verify_scale_invariance};
use srrw::validation::{perron_by_power_iteration, random_chain, random_interior};
use srrw::Repellence;

fn alpha_choice() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.5, 1.0, 2.0, 5.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nonlinear_pair_is_in_detailed_balance(seed in any::<u64>(), n in 2usize..=20, a in alpha_choice()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let x = random_interior(n, &mut rng);
        let p = Repellence::new(a).unwrap();
        let pi = stationary_of(&k, &x, p).unwrap();
        let m = kernel_matrix(&k, &x, p).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        for i in 0..n {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-14);
            for j in 0..n {
                prop_assert!((pi[i] * m[(i, j)] - pi[j] * m[(j, i)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stationary_law_matches_power_iteration(seed in any::<u64>(), n in 2usize..=12, a in alpha_choice()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let x = random_interior(n, &mut rng);
        let p = Repellence::new(a).unwrap();
        let pi = stationary_of(&k, &x, p).unwrap();
        let oracle = perron_by_power_iteration(&kernel_matrix(&k, &x, p).unwrap()).unwrap();
        for (u, v) in pi.iter().zip(&oracle) {
            prop_assert!((u - v).abs() <= 1e-10);
        }
    }

    #[test]
    fn more_visits_mean_less_mass(
        seed in any::<u64>(),
        n in 2usize..=15,
        a in 0.05f64..8.0,
        bump in 1e-3f64..10.0,
        pick in any::<prop::sample::Index>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let x: Vec<f64> = random_interior(n, &mut rng).iter().map(|v| v * 7.0).collect();
        let p = Repellence::new(a).unwrap();
        let i = pick.index(n);
        let (cols, _) = k.row(i);
        for &j in cols {
            let mut raised = x.clone();
            raised[j] *= 1.0 + bump;
            let before = kernel_row(&k, &x, i, p).unwrap();
            let after = kernel_row(&k, &raised, i, p).unwrap();
            let at = |row: &[(usize, f64)]| row.iter().find(|e| e.0 == j).unwrap().1;
            prop_assert!(at(&after) <= at(&before));
        }
    }

    #[test]
    fn kernel_ignores_overall_scale(seed in any::<u64>(), n in 2usize..=20, a in alpha_choice()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_chain(n, &mut rng).unwrap();
        let x = random_interior(n, &mut rng);
        let p = Repellence::new(a).unwrap();
        for c in [0.5, 2.0, 10.0] {
            prop_assert!(verify_scale_invariance(&k, &x, p, c).unwrap() <= 1e-14);
        }
    }
}

// Damped iteration x <- (1 - s) x + s pi(x) from many starts lands on mu,
// so mu is the only fixed point of pi on the open simplex.
#[test]
fn damped_fixed_point_iteration_finds_only_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = 0.25;
    for _ in 0..100 {
        let n = rand::Rng::random_range(&mut rng, 2..=12);
        let k = random_chain(n, &mut rng).unwrap();
        let start = random_interior(n, &mut rng);
        for a in [0.5, 1.0, 2.0, -0.25] {
            let p = Repellence::new(a).unwrap();
            let mut x = start.clone();
            for _ in 0..5000 {
                let pi = stationary_of(&k, &x, p).unwrap();
                x = x.iter().zip(&pi).map(|(xi, pi)| (1.0 - s) * xi + s * pi).collect();
                if tvd(&x, k.mu()).unwrap() < 1e-12 {
                    break;
                }
            }
            let d = tvd(&x, k.mu()).unwrap();
            assert!(d < 1e-10, "alpha {a}: TVD {d:e} after damped iteration");
        }
    }
}

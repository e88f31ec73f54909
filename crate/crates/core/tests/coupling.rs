//! Coupling-layer checks against independent oracles.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usb_core::coupling::{
    default_epsilon, minibatch_semi_coupling, pair_sampler, penalty_psi, penalty_psi_dual,
    semi_coupling_from_oet, snapshot_semi_coupling, solve_oet, wfr_cost_matrix, CouplingOptions,
};
use usb_core::data::Snapshot;
use usb_core::Matrix;

fn random_instance(
    rng: &mut ChaCha8Rng,
    max_side: usize,
) -> (Vec<f64>, Vec<f64>, Matrix) {
    let n0 = rng.random_range(1..=max_side);
    let n1 = rng.random_range(1..=max_side);
    let mu0: Vec<f64> = (0..n0).map(|_| rng.random_range(0.2..2.0)).collect();
    let mu1: Vec<f64> = (0..n1).map(|_| rng.random_range(0.2..2.0)).collect();
    let mut cost = Matrix::zeros(n0, n1);
    for v in cost.data_mut() {
        // mostly moderate costs, occasionally an unreachable pair
        *v = if rng.random_range(0.0..1.0) < 0.06 {
            f64::INFINITY
        } else {
            rng.random_range(0.0..3.0)
        };
    }
    (mu0, mu1, cost)
}

#[test]
fn solver_matches_convex_oracle_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..60 {
        let (mu0, mu1, cost) = random_instance(&mut rng, 3);
        let eps = default_epsilon(&cost);
        let sol = solve_oet(&mu0, &mu1, &cost, eps, 100_000, 1e-10).unwrap();
        let (_, oracle_obj) = common::oet_oracle(&mu0, &mu1, &cost, eps);
        assert!(
            (sol.objective - oracle_obj).abs() < 1e-4,
            "trial {trial}: solver {} vs oracle {}",
            sol.objective,
            oracle_obj
        );
    }
}

#[test]
fn balanced_limit_ratio_reaches_one() {
    // equal masses, delta large enough that growth is never worth paying for
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10;
    let rows0: Vec<Vec<f64>> =
        (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let rows1: Vec<Vec<f64>> =
        (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let x0 = Matrix::from_rows(&rows0).unwrap();
    let x1 = Matrix::from_rows(&rows1).unwrap();
    let cost = wfr_cost_matrix(&x0, &x1, 100.0).unwrap();
    let eps = default_epsilon(&cost);
    let mu = vec![1.0; n];
    // the log-scaling tolerance is out of reach at eps ~ 5e-8 (the damped
    // iteration contracts at rate O(eps)); the plan itself settles to
    // ratio deviations ~ 1e-5 within a few thousand sweeps
    let sol = solve_oet(&mu, &mu, &cost, eps, 20_000, 1e-9).unwrap();
    let semi = semi_coupling_from_oet(&sol.gamma, &mu, &mu).unwrap();
    let mut max_dev = 0.0_f64;
    for &(i, j) in semi.support() {
        let ratio = semi.gamma1.get(i, j) / semi.gamma0.get(i, j);
        max_dev = max_dev.max((ratio - 1.0).abs());
    }
    assert!(max_dev < 1e-3, "max |m1 - 1| = {max_dev}");
}

#[test]
fn swapping_marginals_transposes_the_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mu0, mu1, cost) = random_instance(&mut rng, 3);
    let eps = 0.05;
    let fwd = solve_oet(&mu0, &mu1, &cost, eps, 100_000, 1e-11).unwrap();
    let bwd = solve_oet(&mu1, &mu0, &cost.transpose(), eps, 100_000, 1e-11).unwrap();
    for i in 0..cost.rows() {
        for j in 0..cost.cols() {
            let (a, b) = (fwd.gamma.get(i, j), bwd.gamma.get(j, i));
            assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "({i},{j}): {a} vs {b}");
        }
    }
}

#[test]
fn pair_frequencies_follow_gamma0() {
    let mut gamma = Matrix::zeros(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for v in gamma.data_mut() {
        *v = rng.random_range(0.0..1.0);
    }
    let mu0 = vec![1.0, 2.0, 0.5, 1.5];
    let mu1 = vec![2.0, 1.0, 2.0];
    let semi = semi_coupling_from_oet(&gamma, &mu0, &mu1).unwrap();
    let total: f64 = semi.gamma0.sum();

    let draws = 100_000;
    let mut counts = std::collections::HashMap::new();
    for d in pair_sampler(&semi, draws, &mut rng).unwrap() {
        *counts.entry((d.i, d.j)).or_insert(0usize) += 1;
    }
    let mut tv = 0.0;
    for i in 0..4 {
        for j in 0..3 {
            let p = semi.gamma0.get(i, j) / total;
            let p_hat = *counts.get(&(i, j)).unwrap_or(&0) as f64 / draws as f64;
            tv += 0.5 * (p - p_hat).abs();
        }
    }
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn legendre_transform_recovers_the_penalty() {
    // max over h of (g h - Psi*(h)) equals Psi(g)
    for &(nu, lambda) in &[(1.0_f64, 1.0_f64), (0.6, 1.4), (2.0, 0.5)] {
        for &g in &[-1.5_f64, -0.7, -0.1, 0.0, 0.2, 0.9, 1.5] {
            let h_star = nu * (g / lambda).asinh();
            let span = 3.0 * h_star.abs().max(nu);
            let steps = 60_000;
            let mut best = f64::NEG_INFINITY;
            for k in 0..=steps {
                let h = -span + 2.0 * span * k as f64 / steps as f64;
                best = best.max(g * h - penalty_psi_dual(h, nu, lambda));
            }
            let psi = penalty_psi(g, nu, lambda);
            assert!(
                (best - psi).abs() < 1e-6,
                "nu={nu} lambda={lambda} g={g}: grid {best} vs psi {psi}"
            );
        }
    }
}

#[test]
fn minibatch_plans_keep_marginals_and_beat_full_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1200;
    let cloud = |rng: &mut ChaCha8Rng, shift: f64| {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(0.0..1.0) + shift, rng.random_range(0.0..1.0)])
            .collect();
        Snapshot::from_points(0.0, Matrix::from_rows(&rows).unwrap()).unwrap()
    };
    let s0 = cloud(&mut rng, 0.0);
    let s1 = cloud(&mut rng, 0.3);
    let opts = CouplingOptions { delta: 1.0, eps_entropic: Some(0.02), max_iter: 4000, tol: 1e-7 };

    let t_mini = std::time::Instant::now();
    let plans = minibatch_semi_coupling(&s0, &s1, 200, &opts, 6, &mut rng).unwrap();
    let mini_elapsed = t_mini.elapsed();
    assert_eq!(plans.len(), 6);
    for plan in &plans {
        let sums = plan.semi.gamma0.row_sums();
        for (i, &global) in plan.idx0.iter().enumerate() {
            assert!((sums[i] - s0.weights[global]).abs() < 1e-10);
        }
        let sums = plan.semi.gamma1.col_sums();
        for (j, &global) in plan.idx1.iter().enumerate() {
            assert!((sums[j] - s1.weights[global]).abs() < 1e-10);
        }
    }

    let t_full = std::time::Instant::now();
    let _ = snapshot_semi_coupling(&s0, &s1, &opts).unwrap();
    let full_elapsed = t_full.elapsed();
    assert!(
        mini_elapsed < full_elapsed,
        "mini-batch {mini_elapsed:?} not faster than full {full_elapsed:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_scale_covariant(
        scale in 0.1_f64..10.0,
        ax in -2.0_f64..2.0, ay in -2.0_f64..2.0,
        bx in -2.0_f64..2.0, by in -2.0_f64..2.0,
        delta in 0.05_f64..5.0,
    ) {
        let x0 = Matrix::from_vec(1, 2, vec![ax, ay]).unwrap();
        let x1 = Matrix::from_vec(1, 2, vec![bx, by]).unwrap();
        let c = wfr_cost_matrix(&x0, &x1, delta).unwrap().get(0, 0);
        let mut sx0 = x0.clone();
        let mut sx1 = x1.clone();
        sx0.scale(scale);
        sx1.scale(scale);
        let cs = wfr_cost_matrix(&sx0, &sx1, delta * scale).unwrap().get(0, 0);
        if c.is_finite() {
            prop_assert!((c - cs).abs() < 1e-9 * c.max(1.0));
        } else {
            prop_assert!(cs.is_infinite());
        }
    }

    #[test]
    fn penalty_is_even(g in -5.0_f64..5.0, nu in 0.01_f64..3.0, lambda in 0.05_f64..3.0) {
        let p = penalty_psi(g, nu, lambda);
        let m = penalty_psi(-g, nu, lambda);
        prop_assert!((p - m).abs() <= 1e-12 * p.abs().max(1.0));
        let pd = penalty_psi_dual(g, nu, lambda);
        let md = penalty_psi_dual(-g, nu, lambda);
        prop_assert!((pd - md).abs() <= 1e-12 * pd.abs().max(1.0));
        prop_assert!(p >= -1e-15 && pd >= -1e-15);
    }

    #[test]
    fn semi_coupling_marginals_always_exact(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mu0, mu1, cost) = random_instance(&mut rng, 4);
        let eps = default_epsilon(&cost);
        let sol = solve_oet(&mu0, &mu1, &cost, eps, 20_000, 1e-9).unwrap();
        let semi = semi_coupling_from_oet(&sol.gamma, &mu0, &mu1).unwrap();
        let rows = semi.gamma0.row_sums();
        for (i, &m) in mu0.iter().enumerate() {
            prop_assert!((rows[i] - m).abs() < 1e-10);
        }
        let cols = semi.gamma1.col_sums();
        for (j, &m) in mu1.iter().enumerate() {
            prop_assert!((cols[j] - m).abs() < 1e-10);
        }
    }
}

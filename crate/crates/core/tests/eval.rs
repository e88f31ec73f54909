//! Metric checks against the LP-vertex oracle and metric axioms.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usb_core::data::{Snapshot, TimeSeriesDataset};
use usb_core::eval::{hold_one_out, w1};
use usb_core::inference::WeightedCloud;
use usb_core::training::TrainConfig;
use usb_core::Matrix;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> WeightedCloud {
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    WeightedCloud {
        points: Matrix::from_rows(&rows).unwrap(),
        log_weights: (0..n).map(|_| rng.random_range(0.1_f64..2.0).ln()).collect(),
        time: 0.0,
    }
}

#[test]
fn w1_matches_the_lp_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..50 {
        let n = rng.random_range(2..=3);
        let m = rng.random_range(2..=3);
        let a = random_cloud(&mut rng, n, 2);
        let b = random_cloud(&mut rng, m, 2);
        let got = w1(&a, &b).unwrap();

        // oracle works on normalized weights and raw distances
        let wa: Vec<f64> = {
            let w = a.weights();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        };
        let wb: Vec<f64> = {
            let w = b.weights();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        };
        let mut dist = Matrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                let dx = a.points.get(i, 0) - b.points.get(j, 0);
                let dy = a.points.get(i, 1) - b.points.get(j, 1);
                dist.set(i, j, (dx * dx + dy * dy).sqrt());
            }
        }
        let oracle = common::transport_oracle_small(&wa, &wb, &dist);
        assert!(
            (got - oracle).abs() < 1e-6,
            "trial {trial}: solver {got} vs oracle {oracle}"
        );
    }
}

#[test]
fn w1_is_symmetric_and_triangular() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..25 {
        let (na, nb, nc) =
            (rng.random_range(2..7), rng.random_range(2..7), rng.random_range(2..7));
        let a = random_cloud(&mut rng, na, 3);
        let b = random_cloud(&mut rng, nb, 3);
        let c = random_cloud(&mut rng, nc, 3);
        let ab = w1(&a, &b).unwrap();
        let ba = w1(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9, "symmetry: {ab} vs {ba}");
        let bc = w1(&b, &c).unwrap();
        let ac = w1(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-6, "triangle: {ac} > {ab} + {bc}");
    }
}

fn three_snapshot_dataset() -> TimeSeriesDataset {
    let snap = |t: f64, shift: f64| {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![shift + 0.05 * i as f64]).collect();
        Snapshot::from_points(t, Matrix::from_rows(&rows).unwrap()).unwrap()
    };
    TimeSeriesDataset::new(vec![snap(0.0, 0.0), snap(4.0, 0.5), snap(8.0, 1.0)]).unwrap()
}

#[test]
fn holdout_evaluates_at_the_time_fraction_midpoint() {
    let ds = three_snapshot_dataset();
    let mut config = TrainConfig::new(50.0, 0.2);
    config.epochs = 10;
    config.batch_per_pair = 16;
    config.hidden_width = 8;
    config.depth = 2;
    let report = hold_one_out(&ds, &config, 1, 0.05).unwrap();
    assert_eq!(report.rows.len(), 1);
    // uniform spacing: the held time sits at the midpoint of the merged
    // unit interval
    assert!((report.rows[0].internal_time - 0.5).abs() < 1e-12);
    assert_eq!(report.rows[0].original_time, 4.0);
    assert!(report.rows[0].w1.is_finite());
}

#[test]
fn holdout_rejects_boundary_indices() {
    let ds = three_snapshot_dataset();
    let config = TrainConfig::new(50.0, 0.2);
    assert!(hold_one_out(&ds, &config, 0, 0.05).is_err());
    assert!(hold_one_out(&ds, &config, 2, 0.05).is_err());
}

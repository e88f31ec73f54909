//! Simulation-mode checks: branching means, step-size consistency, and
//! agreement between the two inference modes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use usb_core::data::Snapshot;
use usb_core::inference::{branching_inference, continuous_inference, lineage_stats};
use usb_core::training::{ModelArch, ModelTriple};
use usb_core::Matrix;

fn roots(n: usize, d: usize) -> Snapshot {
    Snapshot::from_points(0.0, Matrix::zeros(n, d)).unwrap()
}

#[test]
fn branching_mean_matches_exponential_growth() {
    // constant g = 0.5 over T = 1: expected survivors per root is e^0.5
    let model = ModelTriple::constant_fields(1, &[0.0], 0.5, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 4_000;
    let run = branching_inference(&model, &roots(n, 1), (0.0, 1.0), 0.01, &mut rng, 100_000, false)
        .unwrap();
    let mean = run.survivors.len() as f64 / n as f64;
    let expect = 0.5_f64.exp();
    assert!(
        (mean - expect).abs() / expect < 0.05,
        "mean {mean} vs {expect}"
    );
    run.tree.check_invariants().unwrap();
    let stats = lineage_stats(&run.tree);
    assert_eq!(stats.survivors, stats.roots + stats.divisions - stats.deaths);
}

#[test]
fn halving_dt_halves_the_weight_error() {
    // nonlinear growth along a drifting path, no noise: the log-weight
    // integral converges at first order, so successive differences shrink
    // by about two
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let arch = ModelArch { input_dim: 1, hidden_width: 8, depth: 3, leaky_slope: 0.01 };
    let mut model = ModelTriple::init(arch, 1.0, &mut rng).unwrap();
    model.nu = 0.0;
    model.v = usb_core::nn::MlpParams::constant(&model.spec_v(), &[1.0]).unwrap();
    // leave g as its random initialization but force a usable magnitude
    model.g = usb_core::nn::MlpParams::init(&model.spec_g(), &mut rng).unwrap();

    let start = roots(3, 1);
    let weight_at = |dt: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (cloud, _) = continuous_inference(&model, &start, (0.0, 1.0), dt, &mut rng).unwrap();
        cloud.log_weights.clone()
    };
    let w1 = weight_at(0.1);
    let w2 = weight_at(0.05);
    let w4 = weight_at(0.025);
    for i in 0..3 {
        let d1 = w1[i] - w2[i];
        let d2 = w2[i] - w4[i];
        assert!(d1.abs() > 1e-12, "degenerate richardson probe");
        let ratio = d1 / d2;
        assert!(
            (1.5..=2.5).contains(&ratio),
            "particle {i}: refinement ratio {ratio}"
        );
    }
}

#[test]
fn continuous_mass_tracks_branching_population() {
    // same constant-growth field driven both ways
    let g = 0.4;
    let model = ModelTriple::constant_fields(2, &[0.1, -0.2], g, 0.05).unwrap();
    let start = roots(2_000, 2);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (cloud, _) = continuous_inference(&model, &start, (0.0, 1.0), 0.01, &mut rng).unwrap();
    let continuous_mass = cloud.total_mass();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let run = branching_inference(&model, &start, (0.0, 1.0), 0.01, &mut rng, 100_000, false)
        .unwrap();
    let population = run.survivors.len() as f64;

    let rel = (continuous_mass - population).abs() / continuous_mass;
    assert!(rel < 0.05, "mass {continuous_mass} vs population {population}");
}

//! Scratch harness for sizing the end-to-end pipeline (not part of the
//! test suite). Run with `cargo run --release -p usb-core --example
//! pipeline_probe`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use usb_core::data::{gen_sim_gene, sim_gene_growth_rate, SimGeneParams};
use usb_core::eval::{evaluate_on_dataset, growth_correlation, standardized_w1, w1};
use usb_core::inference::{branching_inference, continuous_inference, WeightedCloud};
use usb_core::training::{train, CouplingKind, TrainConfig};

fn main() {
    let t0 = Instant::now();
    let params = SimGeneParams::default();
    let dataset = gen_sim_gene(&params, 7).unwrap();
    let counts: Vec<usize> = dataset.snapshots().iter().map(|s| s.len()).collect();
    println!("[{:.1?}] data: counts {counts:?}", t0.elapsed());
    for s in dataset.snapshots() {
        let mean_x: f64 = (0..s.len()).map(|i| s.points.get(i, 0)).sum::<f64>() / s.len() as f64;
        let mean_y: f64 = (0..s.len()).map(|i| s.points.get(i, 1)).sum::<f64>() / s.len() as f64;
        println!("  t={}: n={} mean=({mean_x:.2},{mean_y:.2})", s.time, s.len());
    }
    // finite-sample floor: W1 between the same law drawn with another seed
    let dataset_b = gen_sim_gene(&params, 1007).unwrap();
    for k in 1..=dataset.num_intervals() {
        let a = WeightedCloud::from_snapshot(dataset.snapshot(k));
        let b = WeightedCloud::from_snapshot(dataset_b.snapshot(k));
        println!(
            "  floor t={}: raw w1={:.4} std w1={:.4}",
            dataset.snapshot(k).time,
            w1(&a, &b).unwrap(),
            standardized_w1(&b, &a).unwrap()
        );
    }

    let mut config = TrainConfig::new(1.3, 0.001);
    config.epochs = std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(1200);
    config.batch_per_pair =
        std::env::var("BATCH").ok().and_then(|s| s.parse().ok()).unwrap_or(192);
    config.hidden_width = std::env::var("HIDDEN").ok().and_then(|s| s.parse().ok()).unwrap_or(64);
    config.depth = 3;
    config.learning_rate = std::env::var("LR").ok().and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    config.seed = 7;
    config.coupling_tol = 1e-7;
    config.coupling_max_iter = 40_000;
    config.eps_entropic = std::env::var("EPS").ok().and_then(|s| s.parse().ok());

    let t_train = Instant::now();
    let out = train(&dataset, &config).unwrap();
    println!(
        "[{:.1?}] train: {} steps, loss {:.4} -> {:.4} (v {:.4} g {:.4} s {:.4})",
        t_train.elapsed(),
        out.log.len(),
        out.log.first().unwrap().loss,
        out.log.last().unwrap().loss,
        out.log.last().unwrap().loss_v,
        out.log.last().unwrap().loss_g,
        out.log.last().unwrap().loss_s,
    );

    let t_eval = Instant::now();
    let report = evaluate_on_dataset(&out.model, &dataset, &config, 0.01, 99).unwrap();
    println!("[{:.1?}] eval:", t_eval.elapsed());
    for row in &report.rows {
        println!(
            "  t={} w1={:.4} rme={:.4}",
            row.original_time, row.w1, row.rme
        );
    }
    println!("  mean w1={:.4} mean rme={:.4}", report.mean_w1, report.mean_rme);

    // standardized W1 per time
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let record: Vec<f64> = (1..=dataset.num_intervals()).map(|k| k as f64).collect();
    let run = usb_core::inference::continuous_inference_path(
        &out.model,
        dataset.snapshot(0),
        0.0,
        &record,
        0.01,
        &mut rng,
    )
    .unwrap();
    let mut std_w1s = Vec::new();
    for (cloud, k) in run.clouds.iter().zip(1..) {
        let truth = WeightedCloud::from_snapshot(dataset.snapshot(k));
        std_w1s.push(standardized_w1(cloud, &truth).unwrap());
    }
    println!("  standardized w1 per time: {std_w1s:?}");
    println!(
        "  mean standardized w1: {:.4}",
        std_w1s.iter().sum::<f64>() / std_w1s.len() as f64
    );

    // growth correlation on the final snapshot
    let probe = dataset.snapshot(dataset.num_intervals());
    let interval_scale = 8.0; // original time units per internal interval
    let true_g: Vec<f64> = (0..probe.len())
        .map(|i| sim_gene_growth_rate(probe.points.get(i, 1), params.alpha_g) * interval_scale)
        .collect();
    let corr = growth_correlation(&out.model, probe, &true_g, dataset.num_intervals() as f64)
        .unwrap();
    println!("  growth pearson: {corr:?}");

    // weak equivalence
    let t_we = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let n_int = dataset.num_intervals() as f64;
    let (cloud, _) =
        continuous_inference(&out.model, dataset.snapshot(0), (0.0, n_int), 0.01, &mut rng)
            .unwrap();
    let cmass = cloud.total_mass();
    let mut rng = ChaCha8Rng::seed_from_u64(124);
    let brun = branching_inference(
        &out.model,
        dataset.snapshot(0),
        (0.0, n_int),
        0.01,
        &mut rng,
        2_000_000,
        false,
    )
    .unwrap();
    println!(
        "[{:.1?}] weak equivalence: continuous mass {cmass:.1} vs population {}",
        t_we.elapsed(),
        brun.survivors.len()
    );

    // ablation
    let t_abl = Instant::now();
    let mut abl = config.clone();
    abl.coupling = CouplingKind::Product;
    let abl_out = train(&dataset, &abl).unwrap();
    match evaluate_on_dataset(&abl_out.model, &dataset, &abl, 0.01, 99) {
        Ok(abl_report) => println!(
            "[{:.1?}] ablation: mean w1={:.4} mean rme={:.4}",
            t_abl.elapsed(),
            abl_report.mean_w1,
            abl_report.mean_rme
        ),
        Err(e) => println!("[{:.1?}] ablation: evaluation failed: {e}", t_abl.elapsed()),
    }

    // delta sensitivity arms
    for delta in [0.5, 2.5] {
        let mut arm = config.clone();
        arm.delta = delta;
        let arm_out = train(&dataset, &arm).unwrap();
        let arm_report = evaluate_on_dataset(&arm_out.model, &dataset, &arm, 0.01, 99).unwrap();
        println!(
            "  delta={delta}: mean w1={:.4} mean rme={:.4}",
            arm_report.mean_w1, arm_report.mean_rme
        );
    }

    // hold-one-out at interior times
    let t_ho = Instant::now();
    for held in 1..dataset.num_intervals() {
        let rep = usb_core::eval::hold_one_out(&dataset, &config, held, 0.01).unwrap();
        let mut abl_cfg = config.clone();
        abl_cfg.coupling = CouplingKind::Product;
        let rep_abl = usb_core::eval::hold_one_out(&dataset, &abl_cfg, held, 0.01).unwrap();
        println!(
            "  holdout {held}: w1={:.4} (ablation {:.4})",
            rep.mean_w1, rep_abl.mean_w1
        );
    }
    println!("[{:.1?}] holdouts done", t_ho.elapsed());

    // sanity: w1 between snapshot 0 and itself
    let c0 = WeightedCloud::from_snapshot(dataset.snapshot(0));
    println!("self-w1 check: {:.2e}", w1(&c0, &c0).unwrap());
    println!("total {:.1?}", t0.elapsed());
}

//! Metrics and experiment harnesses: 1-Wasserstein distance, relative
//! mass error, growth-rate correlation, and the hold-one-out protocol.

mod emd;

pub use emd::{entropic_transport_cost, transport_cost};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Snapshot, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::inference::{continuous_inference_path, WeightedCloud};
use crate::matrix::Matrix;
use crate::training::{train, ModelTriple, TrainConfig};

/// Cost matrices up to this many entries use the exact solver; larger
/// pairs fall back to an entropic approximation with
/// `eps = 0.005 * median pairwise distance`.
pub const W1_EXACT_THRESHOLD: usize = 4_000_000;

fn pairwise_distances(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m, d) = (a.rows(), b.rows(), a.cols());
    let mut rows = Vec::with_capacity(n);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let bj = b.row(j);
                let mut sq = 0.0;
                for k in 0..d {
                    let diff = ai[k] - bj[k];
                    sq += diff * diff;
                }
                row.push(sq.sqrt());
            }
            row
        })
        .collect_into_vec(&mut rows);
    Matrix::from_rows(&rows).expect("rectangular by construction")
}

fn normalized_weights(cloud: &WeightedCloud) -> Result<(Vec<usize>, Vec<f64>)> {
    if cloud.is_empty() {
        return Err(Error::Parameter("cannot evaluate an empty cloud".into()));
    }
    let weights = cloud.weights();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Parameter("cloud must carry positive finite mass".into()));
    }
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for (i, &wi) in weights.iter().enumerate() {
        if wi > 0.0 {
            idx.push(i);
            w.push(wi / total);
        }
    }
    Ok((idx, w))
}

fn select_rows(points: &Matrix, idx: &[usize]) -> Matrix {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| points.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("rectangular")
}

/// 1-Wasserstein distance between the normalized clouds.
pub fn w1(a: &WeightedCloud, b: &WeightedCloud) -> Result<f64> {
    if a.points.cols() != b.points.cols() {
        return Err(Error::Shape("clouds have different dimensions".into()));
    }
    let (ia, wa) = normalized_weights(a)?;
    let (ib, wb) = normalized_weights(b)?;
    let pa = select_rows(&a.points, &ia);
    let pb = select_rows(&b.points, &ib);
    let dist = pairwise_distances(&pa, &pb);
    if ia.len() * ib.len() <= W1_EXACT_THRESHOLD {
        transport_cost(&wa, &wb, &dist)
    } else {
        let mut d: Vec<f64> = dist.data().to_vec();
        d.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let eps = (0.005 * d[d.len() / 2]).max(1e-12);
        entropic_transport_cost(&wa, &wb, &dist, eps, 2000)
    }
}

/// W1 after mapping both clouds through the per-coordinate affine
/// transform that standardizes the reference cloud `truth`.
pub fn standardized_w1(pred: &WeightedCloud, truth: &WeightedCloud) -> Result<f64> {
    if pred.points.cols() != truth.points.cols() {
        return Err(Error::Shape("clouds have different dimensions".into()));
    }
    let (it, wt) = normalized_weights(truth)?;
    let d = truth.points.cols();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for (&i, &w) in it.iter().zip(&wt) {
        for (k, m) in mean.iter_mut().enumerate() {
            *m += w * truth.points.get(i, k);
        }
    }
    for (&i, &w) in it.iter().zip(&wt) {
        for (k, v) in var.iter_mut().enumerate() {
            let c = truth.points.get(i, k) - mean[k];
            *v += w * c * c;
        }
    }
    let scale: Vec<f64> = var.iter().map(|v| 1.0 / v.sqrt().max(1e-12)).collect();
    let transform = |cloud: &WeightedCloud| {
        let mut pts = cloud.points.clone();
        for i in 0..pts.rows() {
            let row = pts.row_mut(i);
            for k in 0..d {
                row[k] = (row[k] - mean[k]) * scale[k];
            }
        }
        WeightedCloud { points: pts, log_weights: cloud.log_weights.clone(), time: cloud.time }
    };
    w1(&transform(pred), &transform(truth))
}

/// Relative total-mass error `|m_pred - m_true| / m_true`.
pub fn rme(pred: &WeightedCloud, truth: &WeightedCloud) -> Result<f64> {
    let m_true = truth.total_mass();
    if !(m_true > 0.0) {
        return Err(Error::Parameter("true mass must be > 0".into()));
    }
    Ok((pred.total_mass() - m_true).abs() / m_true)
}

/// Pearson correlation between the learned growth rate at `(probe, t)` and
/// the provided ground truth. `None` when either side has zero variance.
pub fn growth_correlation(
    model: &ModelTriple,
    probe: &Snapshot,
    true_g: &[f64],
    t_probe: f64,
) -> Result<Option<f64>> {
    if true_g.len() != probe.len() {
        return Err(Error::Shape("true_g length must match probe points".into()));
    }
    let predicted = model.eval_g(&probe.points, &vec![t_probe; probe.len()])?;
    Ok(pearson(&predicted, true_g))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// One evaluation time of an [`EvalReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub internal_time: f64,
    pub original_time: f64,
    pub w1: f64,
    pub rme: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_w1: f64,
    pub mean_rme: f64,
    pub growth_pearson: Option<f64>,
    pub runtime_seconds: f64,
    pub config_hash: String,
    pub seed: u64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Stable fingerprint of a training configuration.
pub fn config_hash(config: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(config).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}

/// Simulates from the first snapshot and scores W1/RME against every later
/// snapshot. The per-particle mass convention matches training: every
/// simulated particle starts at weight 1, and the true mass at time `k` is
/// the snapshot's total weight relative to the start snapshot's.
pub fn evaluate_on_dataset(
    model: &ModelTriple,
    dataset: &TimeSeriesDataset,
    config: &TrainConfig,
    dt: f64,
    seed: u64,
) -> Result<EvalReport> {
    let started = std::time::Instant::now();
    let record: Vec<f64> = (1..=dataset.num_intervals()).map(|k| k as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = continuous_inference_path(model, dataset.snapshot(0), 0.0, &record, dt, &mut rng)?;

    let n0 = dataset.snapshot(0).total_mass();
    let mut rows = Vec::with_capacity(record.len());
    for (cloud, k) in run.clouds.iter().zip(1..) {
        let truth = dataset.snapshot(k);
        let truth_cloud = WeightedCloud::from_snapshot(truth);
        let w1_k = w1(cloud, &truth_cloud)?;
        // predicted relative mass vs true relative mass
        let rel_pred = cloud.total_mass() / dataset.snapshot(0).len() as f64;
        let rel_true = truth.total_mass() / n0;
        let rme_k = (rel_pred - rel_true).abs() / rel_true;
        rows.push(EvalRow {
            internal_time: k as f64,
            original_time: truth.time,
            w1: w1_k,
            rme: rme_k,
        });
    }
    Ok(EvalReport {
        mean_w1: mean(rows.iter().map(|r| r.w1)),
        mean_rme: mean(rows.iter().map(|r| r.rme)),
        rows,
        growth_pearson: None,
        runtime_seconds: started.elapsed().as_secs_f64(),
        config_hash: config_hash(config),
        seed,
    })
}

/// Hold-one-out: train with interior snapshot `held` removed, simulate
/// from the first snapshot, and score W1 at the held time. The held time
/// maps into the merged interval by its original-time fraction.
pub fn hold_one_out(
    dataset: &TimeSeriesDataset,
    config: &TrainConfig,
    held: usize,
    dt: f64,
) -> Result<EvalReport> {
    let started = std::time::Instant::now();
    let reduced = dataset.without_snapshot(held)?;
    let times = dataset.original_times();
    let frac = (times[held] - times[held - 1]) / (times[held + 1] - times[held - 1]);
    let eval_t = (held - 1) as f64 + frac;

    let trained = train(&reduced, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    let run =
        continuous_inference_path(&trained.model, reduced.snapshot(0), 0.0, &[eval_t], dt, &mut rng)?;
    let held_snap = dataset.snapshot(held);
    let truth_cloud = WeightedCloud::from_snapshot(held_snap);
    let w1_held = w1(&run.clouds[0], &truth_cloud)?;
    let rel_pred = run.clouds[0].total_mass() / reduced.snapshot(0).len() as f64;
    let rel_true = held_snap.total_mass() / reduced.snapshot(0).total_mass();
    let rme_held = (rel_pred - rel_true).abs() / rel_true;

    Ok(EvalReport {
        rows: vec![EvalRow {
            internal_time: eval_t,
            original_time: times[held],
            w1: w1_held,
            rme: rme_held,
        }],
        mean_w1: w1_held,
        mean_rme: rme_held,
        growth_pearson: None,
        runtime_seconds: started.elapsed().as_secs_f64(),
        config_hash: config_hash(config),
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: Vec<Vec<f64>>, weights: Vec<f64>) -> WeightedCloud {
        WeightedCloud {
            points: Matrix::from_rows(&points).unwrap(),
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            time: 0.0,
        }
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let a = cloud(vec![vec![0.0, 1.0], vec![2.0, 0.5]], vec![1.0, 2.0]);
        assert!(w1(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn two_unit_points() {
        let a = cloud(vec![vec![0.0]], vec![1.0]);
        let b = cloud(vec![vec![3.0]], vec![1.0]);
        assert!((w1(&a, &b).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weight_scaling_leaves_w1_unchanged() {
        let a = cloud(vec![vec![0.0], vec![1.0]], vec![1.0, 3.0]);
        let b = cloud(vec![vec![0.5], vec![2.0]], vec![2.0, 2.0]);
        let scaled = cloud(vec![vec![0.0], vec![1.0]], vec![5.0, 15.0]);
        assert!((w1(&a, &b).unwrap() - w1(&scaled, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let a = cloud(vec![vec![0.0]], vec![1.0]);
        let empty = WeightedCloud { points: Matrix::zeros(0, 1), log_weights: vec![], time: 0.0 };
        assert!(w1(&a, &empty).is_err());
    }

    #[test]
    fn rme_cases() {
        let t = cloud(vec![vec![0.0]], vec![1.0]);
        let p = cloud(vec![vec![0.0]], vec![1.1]);
        assert!((rme(&p, &t).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rme(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn rme_scale_law() {
        let t = cloud(vec![vec![0.0]], vec![2.0]);
        let p = cloud(vec![vec![0.0], vec![1.0]], vec![0.7, 0.9]);
        let c = 3.0;
        let scaled = cloud(vec![vec![0.0], vec![1.0]], vec![c * 0.7, c * 0.9]);
        let expect = (c * 1.6_f64 - 2.0).abs() / 2.0;
        assert!((rme(&scaled, &t).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn correlation_signs() {
        let model = crate::training::ModelTriple::constant_fields(1, &[0.0], 0.0, 0.1).unwrap();
        // constant prediction has zero variance
        let probe = Snapshot::from_points(
            0.0,
            Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap(),
        )
        .unwrap();
        let r = growth_correlation(&model, &probe, &[0.0, 0.5, 1.0], 0.0).unwrap();
        assert!(r.is_none());

        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), Some(1.0));
        let r = pearson(&[1.0, 2.0, 3.0], &[-2.0, -4.0, -6.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardized_w1_is_scale_free() {
        let t = cloud(vec![vec![0.0, 0.0], vec![1.0, 10.0]], vec![1.0, 1.0]);
        let p = cloud(vec![vec![0.1, 1.0], vec![0.9, 9.0]], vec![1.0, 1.0]);
        // scaling both clouds' coordinates leaves the standardized value fixed
        let scale = |c: &WeightedCloud, f: f64| {
            let mut pts = c.points.clone();
            pts.scale(f);
            WeightedCloud { points: pts, log_weights: c.log_weights.clone(), time: 0.0 }
        };
        let a = standardized_w1(&p, &t).unwrap();
        let b = standardized_w1(&scale(&p, 7.0), &scale(&t, 7.0)).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

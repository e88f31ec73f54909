//! Snapshot and dataset types, CSV interchange, and synthetic ground-truth
//! generators.

mod generators;
mod io;

pub use generators::{gen_gaussian_mixture, gen_sim_gene, sim_gene_growth_rate, steady_state, GaussianMixtureParams, SimGeneParams};
pub use io::{load_snapshots, save_snapshots, save_weighted_cloud};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A weighted point cloud observed at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Observation time in the dataset's original units.
    pub time: f64,
    /// `(n, d)` point coordinates.
    pub points: Matrix,
    /// Nonnegative weight per point; total mass must be positive.
    pub weights: Vec<f64>,
}

impl Snapshot {
    pub fn new(time: f64, points: Matrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.rows() {
            return Err(Error::Shape(format!(
                "{} weights for {} points",
                weights.len(),
                points.rows()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Format("weights must be finite and >= 0".into()));
        }
        if !points.is_finite() {
            return Err(Error::Format("point coordinates must be finite".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Format("snapshot must carry positive total mass".into()));
        }
        Ok(Snapshot { time, points, weights })
    }

    /// Unit-weight snapshot.
    pub fn from_points(time: f64, points: Matrix) -> Result<Self> {
        let w = vec![1.0; points.rows()];
        Snapshot::new(time, points, w)
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// An ordered sequence of snapshots.
///
/// Observation times are kept in original units; internally every
/// consecutive pair spans one unit interval, so snapshot `k` lives at
/// internal time `k`. Training and inference always work in internal time;
/// [`TimeSeriesDataset::to_original_time`] maps back.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    snapshots: Vec<Snapshot>,
    /// Free-form `key = value` pairs carried through the CSV header.
    pub metadata: Vec<(String, String)>,
}

impl TimeSeriesDataset {
    pub fn new(mut snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::Format("dataset needs at least 2 snapshots".into()));
        }
        snapshots.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        let dim = snapshots[0].dim();
        for pair in snapshots.windows(2) {
            if pair[0].time >= pair[1].time {
                return Err(Error::Format("observation times must be strictly increasing".into()));
            }
        }
        if snapshots.iter().any(|s| s.dim() != dim) {
            return Err(Error::Format("snapshots must share one dimension".into()));
        }
        Ok(TimeSeriesDataset { snapshots, metadata: Vec::new() })
    }

    pub fn with_metadata(mut self, metadata: Vec<(String, String)>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, k: usize) -> &Snapshot {
        &self.snapshots[k]
    }

    /// Number of unit intervals, i.e. snapshots minus one.
    pub fn num_intervals(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.snapshots[0].dim()
    }

    pub fn original_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Internal times are the snapshot ranks `0..=K`.
    pub fn internal_times(&self) -> Vec<f64> {
        (0..self.snapshots.len()).map(|k| k as f64).collect()
    }

    /// Piecewise-linear map from internal time to original units.
    pub fn to_original_time(&self, internal: f64) -> f64 {
        let k_max = self.num_intervals() as f64;
        let t = internal.clamp(0.0, k_max);
        let k = (t.floor() as usize).min(self.num_intervals() - 1);
        let frac = t - k as f64;
        let (a, b) = (self.snapshots[k].time, self.snapshots[k + 1].time);
        a + frac * (b - a)
    }

    /// Drops snapshot `held` (must be interior), keeping original times.
    pub fn without_snapshot(&self, held: usize) -> Result<TimeSeriesDataset> {
        if held == 0 || held + 1 >= self.snapshots.len() {
            return Err(Error::Parameter(format!(
                "can only hold out an interior snapshot, got index {held} of {}",
                self.snapshots.len()
            )));
        }
        let kept: Vec<Snapshot> = self
            .snapshots
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != held)
            .map(|(_, s)| s.clone())
            .collect();
        Ok(TimeSeriesDataset::new(kept)?.with_metadata(self.metadata.clone()))
    }

    /// Stable fingerprint of the numeric content, recorded in model files.
    pub fn content_hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |bits: u64| {
            h ^= bits;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        for s in &self.snapshots {
            mix(s.time.to_bits());
            mix(s.points.rows() as u64);
            mix(s.points.cols() as u64);
            for v in s.points.data() {
                mix(v.to_bits());
            }
            for w in &s.weights {
                mix(w.to_bits());
            }
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(t: f64, pts: Vec<f64>) -> Snapshot {
        let n = pts.len();
        Snapshot::new(t, Matrix::from_vec(n, 1, pts).unwrap(), vec![1.0; n]).unwrap()
    }

    #[test]
    fn rejects_single_snapshot() {
        assert!(TimeSeriesDataset::new(vec![snap(0.0, vec![1.0])]).is_err());
    }

    #[test]
    fn sorts_and_maps_times() {
        let ds = TimeSeriesDataset::new(vec![snap(8.0, vec![1.0]), snap(0.0, vec![0.0]), snap(24.0, vec![2.0])]).unwrap();
        assert_eq!(ds.original_times(), vec![0.0, 8.0, 24.0]);
        assert_eq!(ds.internal_times(), vec![0.0, 1.0, 2.0]);
        assert_eq!(ds.to_original_time(0.5), 4.0);
        assert_eq!(ds.to_original_time(1.5), 16.0);
    }

    #[test]
    fn negative_weight_rejected() {
        let m = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        assert!(Snapshot::new(0.0, m, vec![-1.0]).is_err());
    }

    #[test]
    fn holdout_requires_interior() {
        let ds = TimeSeriesDataset::new(vec![snap(0.0, vec![0.0]), snap(1.0, vec![1.0]), snap(2.0, vec![2.0])]).unwrap();
        assert!(ds.without_snapshot(0).is_err());
        assert!(ds.without_snapshot(2).is_err());
        let reduced = ds.without_snapshot(1).unwrap();
        assert_eq!(reduced.original_times(), vec![0.0, 2.0]);
    }
}

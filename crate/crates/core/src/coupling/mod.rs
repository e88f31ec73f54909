//! Static semi-coupling between consecutive snapshots.
//!
//! The pipeline here: build the clamped-cosine transport cost, solve the
//! entropy-transport problem by generalized Sinkhorn scaling
//! ([`solve_oet`]), split the plan into the sent/received pair
//! `(gamma0, gamma1)` whose marginals match the snapshot weights exactly,
//! then sample training pairs from `gamma0` with per-pair mass ratios.

mod oet;

pub use oet::{default_epsilon, oet_objective, solve_oet, OetSolution};

use rand::Rng;
use rayon::prelude::*;

use crate::data::Snapshot;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mass ratios are clipped to this range before anything takes their log.
pub const MASS_RATIO_FLOOR: f64 = 1e-8;
pub const MASS_RATIO_CEIL: f64 = 1e8;

/// The linked triple (diffusion, growth penalty, branching rate).
///
/// Any two determine the third through `delta = sqrt(nu / (2 lambda))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub nu: f64,
    pub delta: f64,
    pub lambda_branch: f64,
}

impl PenaltyParams {
    pub fn from_nu_delta(nu: f64, delta: f64) -> Result<Self> {
        if !(nu > 0.0) || !(delta > 0.0) {
            return Err(Error::Parameter("nu and delta must be > 0".into()));
        }
        Ok(PenaltyParams { nu, delta, lambda_branch: nu / (2.0 * delta * delta) })
    }

    pub fn from_nu_lambda(nu: f64, lambda_branch: f64) -> Result<Self> {
        if !(nu > 0.0) || !(lambda_branch > 0.0) {
            return Err(Error::Parameter("nu and lambda must be > 0".into()));
        }
        Ok(PenaltyParams { nu, delta: (nu / (2.0 * lambda_branch)).sqrt(), lambda_branch })
    }
}

/// Growth penalty `Psi_{nu,lambda}(g) = nu lambda Psi(g/lambda)` with
/// `Psi(u) = 1 - sqrt(1+u^2) + u asinh(u)`; even, zero at zero, and
/// `(nu/2lambda) g^2` to second order.
pub fn penalty_psi(g: f64, nu: f64, lambda_branch: f64) -> f64 {
    let u = g / lambda_branch;
    nu * lambda_branch * (1.0 - (1.0 + u * u).sqrt() + u * u.asinh())
}

/// Convex conjugate of [`penalty_psi`]:
/// `Psi*_{nu,lambda}(h) = nu lambda (cosh(h/nu) - 1)`.
pub fn penalty_psi_dual(h: f64, nu: f64, lambda_branch: f64) -> f64 {
    nu * lambda_branch * ((h / nu).cosh() - 1.0)
}

/// Transport cost `-2 ln cos(min(|x-y|/(2 delta), pi/2))`, entrywise over
/// two point clouds. Pairs at distance `>= pi delta` get `+inf`.
pub fn wfr_cost_matrix(x0: &Matrix, x1: &Matrix, delta: f64) -> Result<Matrix> {
    if x0.cols() != x1.cols() {
        return Err(Error::Shape(format!(
            "point dimensions differ: {} vs {}",
            x0.cols(),
            x1.cols()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter("delta must be > 0".into()));
    }
    let (n0, n1, d) = (x0.rows(), x1.rows(), x0.cols());
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n0);
    (0..n0)
        .into_par_iter()
        .map(|i| {
            let xi = x0.row(i);
            let mut row = Vec::with_capacity(n1);
            for j in 0..n1 {
                let yj = x1.row(j);
                let mut sq = 0.0;
                for k in 0..d {
                    let diff = xi[k] - yj[k];
                    sq += diff * diff;
                }
                let angle = sq.sqrt() / (2.0 * delta);
                row.push(if angle >= std::f64::consts::FRAC_PI_2 {
                    f64::INFINITY
                } else {
                    -2.0 * angle.cos().ln()
                });
            }
            row
        })
        .collect_into_vec(&mut rows);
    Matrix::from_rows(&rows)
}

/// Paired nonnegative plans over sample pairs: `gamma0` is mass sent from
/// each source point, `gamma1` mass received at each target point.
///
/// Row sums of `gamma0` reproduce the source weights and column sums of
/// `gamma1` the target weights, exactly up to float summation.
#[derive(Debug, Clone)]
pub struct SemiCoupling {
    pub gamma0: Matrix,
    pub gamma1: Matrix,
    /// Entries with `gamma0 > 0`, the sampleable support.
    support: Vec<(usize, usize)>,
}

impl SemiCoupling {
    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    /// Entries of either plan above `threshold`, for inspection dumps.
    pub fn entries_above(&self, threshold: f64) -> Vec<(usize, usize, f64, f64)> {
        let mut out = Vec::new();
        for i in 0..self.gamma0.rows() {
            for j in 0..self.gamma0.cols() {
                let (g0, g1) = (self.gamma0.get(i, j), self.gamma1.get(i, j));
                if g0 > threshold || g1 > threshold {
                    out.push((i, j, g0, g1));
                }
            }
        }
        out
    }
}

/// Splits an OET plan into the semi-coupling pair by renormalizing rows to
/// `mu0` and columns to `mu1`.
///
/// Rows of `gamma` with no mass (sources beyond the transport cutoff) keep
/// their full weight in `gamma0` on the index-nearest column with zero
/// received mass there: the pair encodes complete destruction. Dead
/// columns get the mirrored treatment in `gamma1` so that both marginal
/// identities always hold; those creation-only entries are the one place
/// where `gamma1 > 0` with `gamma0 = 0`, and they never enter the support.
pub fn semi_coupling_from_oet(gamma: &Matrix, mu0: &[f64], mu1: &[f64]) -> Result<SemiCoupling> {
    let (n0, n1) = (gamma.rows(), gamma.cols());
    if mu0.len() != n0 || mu1.len() != n1 {
        return Err(Error::Shape("marginal lengths do not match the plan".into()));
    }
    if gamma.data().iter().any(|&g| g < 0.0 || !g.is_finite()) {
        return Err(Error::Parameter("plan entries must be finite and >= 0".into()));
    }

    let row_sums = gamma.row_sums();
    let col_sums = gamma.col_sums();
    let mut gamma0 = Matrix::zeros(n0, n1);
    let mut gamma1 = Matrix::zeros(n0, n1);

    for i in 0..n0 {
        if row_sums[i] > 0.0 {
            let scale = mu0[i] / row_sums[i];
            for (j, &g) in gamma.row(i).iter().enumerate() {
                gamma0.set(i, j, g * scale);
            }
        } else if mu0[i] > 0.0 {
            gamma0.set(i, i.min(n1 - 1), mu0[i]);
        }
    }
    for j in 0..n1 {
        if col_sums[j] > 0.0 {
            let scale = mu1[j] / col_sums[j];
            for i in 0..n0 {
                gamma1.set(i, j, gamma.get(i, j) * scale);
            }
        } else if mu1[j] > 0.0 {
            gamma1.set(j.min(n0 - 1), j, mu1[j]);
        }
    }

    let mut support = Vec::new();
    for i in 0..n0 {
        for (j, &g0) in gamma0.row(i).iter().enumerate() {
            if g0 > 0.0 {
                support.push((i, j));
            }
        }
    }
    Ok(SemiCoupling { gamma0, gamma1, support })
}

/// One training pair drawn from `gamma0`.
#[derive(Debug, Clone, Copy)]
pub struct PairDraw {
    pub i: usize,
    pub j: usize,
    /// Source mass, fixed to 1 under `gamma0`-sampling.
    pub m0: f64,
    /// Received-over-sent mass ratio `gamma1/gamma0`, clipped to
    /// `[MASS_RATIO_FLOOR, MASS_RATIO_CEIL]`.
    pub m1: f64,
}

/// Draws `batch` pairs categorically proportional to `gamma0`.
pub fn pair_sampler<R: Rng + ?Sized>(
    semi: &SemiCoupling,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<PairDraw>> {
    if semi.support.is_empty() {
        return Err(Error::Parameter("semi-coupling has empty support".into()));
    }
    let mut cumulative = Vec::with_capacity(semi.support.len());
    let mut total = 0.0;
    for &(i, j) in &semi.support {
        total += semi.gamma0.get(i, j);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Parameter("gamma0 has no positive mass".into()));
    }

    let mut draws = Vec::with_capacity(batch);
    for _ in 0..batch {
        let target = rng.random_range(0.0..total);
        let idx = cumulative.partition_point(|&c| c <= target).min(semi.support.len() - 1);
        let (i, j) = semi.support[idx];
        let ratio = semi.gamma1.get(i, j) / semi.gamma0.get(i, j);
        draws.push(PairDraw {
            i,
            j,
            m0: 1.0,
            m1: ratio.clamp(MASS_RATIO_FLOOR, MASS_RATIO_CEIL),
        });
    }
    Ok(draws)
}

/// Solver knobs for one coupling computation.
#[derive(Debug, Clone, Copy)]
pub struct CouplingOptions {
    pub delta: f64,
    /// `None` picks [`default_epsilon`] from the cost matrix.
    pub eps_entropic: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl CouplingOptions {
    pub fn new(delta: f64) -> Self {
        CouplingOptions { delta, eps_entropic: None, max_iter: 100_000, tol: 1e-9 }
    }
}

/// Cost build + OET solve + marginal split for one snapshot pair.
pub fn snapshot_semi_coupling(
    snap0: &Snapshot,
    snap1: &Snapshot,
    opts: &CouplingOptions,
) -> Result<(SemiCoupling, OetSolution)> {
    let cost = wfr_cost_matrix(&snap0.points, &snap1.points, opts.delta)?;
    let eps = opts.eps_entropic.unwrap_or_else(|| default_epsilon(&cost));
    let sol = solve_oet(&snap0.weights, &snap1.weights, &cost, eps, opts.max_iter, opts.tol)?;
    let semi = semi_coupling_from_oet(&sol.gamma, &snap0.weights, &snap1.weights)?;
    Ok((semi, sol))
}

/// Independent-pairing ablation: the product plan `mu0 (x) mu1` pushed
/// through the same marginal split. Every sampled pair then carries the
/// constant mass ratio `sum(mu1)/sum(mu0)`.
pub fn product_semi_coupling(snap0: &Snapshot, snap1: &Snapshot) -> Result<SemiCoupling> {
    let (n0, n1) = (snap0.len(), snap1.len());
    let mut gamma = Matrix::zeros(n0, n1);
    for i in 0..n0 {
        for j in 0..n1 {
            gamma.set(i, j, snap0.weights[i] * snap1.weights[j]);
        }
    }
    semi_coupling_from_oet(&gamma, &snap0.weights, &snap1.weights)
}

/// One mini-batch coupling over uniform subsamples of the two snapshots.
#[derive(Debug, Clone)]
pub struct MinibatchPlan {
    /// Source indices into the full snapshot, batch order.
    pub idx0: Vec<usize>,
    pub idx1: Vec<usize>,
    pub semi: SemiCoupling,
    pub converged: bool,
}

/// Solves `n_batches` independent mini-batch couplings. Falls back to one
/// full-batch plan when `batch_size` does not subsample either side.
pub fn minibatch_semi_coupling<R: Rng + ?Sized>(
    snap0: &Snapshot,
    snap1: &Snapshot,
    batch_size: usize,
    opts: &CouplingOptions,
    n_batches: usize,
    rng: &mut R,
) -> Result<Vec<MinibatchPlan>> {
    if batch_size == 0 || batch_size >= snap0.len().min(snap1.len()) {
        let (semi, sol) = snapshot_semi_coupling(snap0, snap1, opts)?;
        return Ok(vec![MinibatchPlan {
            idx0: (0..snap0.len()).collect(),
            idx1: (0..snap1.len()).collect(),
            semi,
            converged: sol.converged,
        }]);
    }
    let mut plans = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let idx0 = rand::seq::index::sample(rng, snap0.len(), batch_size).into_vec();
        let idx1 = rand::seq::index::sample(rng, snap1.len(), batch_size).into_vec();
        let sub0 = subsample(snap0, &idx0)?;
        let sub1 = subsample(snap1, &idx1)?;
        let (semi, sol) = snapshot_semi_coupling(&sub0, &sub1, opts)?;
        plans.push(MinibatchPlan { idx0, idx1, semi, converged: sol.converged });
    }
    Ok(plans)
}

fn subsample(snap: &Snapshot, idx: &[usize]) -> Result<Snapshot> {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| snap.points.row(i).to_vec()).collect();
    let weights = idx.iter().map(|&i| snap.weights[i]).collect();
    Snapshot::new(snap.time, Matrix::from_rows(&rows)?, weights)
}

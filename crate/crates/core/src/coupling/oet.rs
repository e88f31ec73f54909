//! Generalized Sinkhorn scaling for the optimal entropy-transport problem
//!
//!   min_{gamma >= 0}  <cost, gamma> + KL(gamma 1 || mu0) + KL(gamma^T 1 || mu1)
//!                     + eps * sum (gamma ln gamma - gamma + 1)
//!
//! over the finite-cost entries; infinite-cost entries are structurally
//! zero (their kernel weight is exactly 0) and are excluded from the
//! entropy sum. KL uses the unnormalized convention
//! `KL(p||q) = sum p ln(p/q) - p + q`, so full destruction of a marginal
//! costs its total mass.
//!
//! The scaling update with marginal weight 1 is
//!   a <- (mu0 / K b)^(1/(1+eps)),   b <- (mu1 / K^T a)^(1/(1+eps))
//! with kernel `K = exp(-cost/eps)`. The solver anneals eps from a few
//! larger values down to the target (warm-starting the dual potentials),
//! which keeps the iteration count reasonable when eps is far below the
//! cost scale. Iterations run in the vector domain when eps is large
//! relative to the cost and in the log domain otherwise.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Result of one OET solve.
#[derive(Debug, Clone)]
pub struct OetSolution {
    /// Optimal plan, `(n0, n1)`, nonnegative.
    pub gamma: Matrix,
    /// Objective value at `gamma` (see module docs for the convention).
    pub objective: f64,
    /// Total scaling iterations across all annealing stages.
    pub iterations: usize,
    /// Whether the final stage met the tolerance, on the log-scalings or
    /// on the induced log-plan entries (see `run_stage`).
    pub converged: bool,
    /// Entropic regularization actually used.
    pub eps_entropic: f64,
}

/// Scale-adaptive default: `0.01 * median(finite cost entries)`, floored
/// at `0.002 * max(finite cost)` and with a fallback when the cost matrix
/// has no usable scale.
///
/// The floor matters for strongly bimodal costs (tight clusters far
/// apart): there the median sits at the within-cluster scale, and an eps
/// that small makes the scaling iteration count blow up like `1/eps`
/// while adding nothing downstream.
pub fn default_epsilon(cost: &Matrix) -> f64 {
    let mut finite: Vec<f64> = cost.data().iter().copied().filter(|c| c.is_finite()).collect();
    if finite.is_empty() {
        return 1e-3;
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = finite[finite.len() / 2];
    let max = *finite.last().unwrap();
    let eps = (0.01 * median).max(0.002 * max);
    if eps > 0.0 {
        eps
    } else {
        1e-3
    }
}

pub fn solve_oet(
    mu0: &[f64],
    mu1: &[f64],
    cost: &Matrix,
    eps_entropic: f64,
    max_iter: usize,
    tol: f64,
) -> Result<OetSolution> {
    let (n0, n1) = (mu0.len(), mu1.len());
    if cost.rows() != n0 || cost.cols() != n1 {
        return Err(Error::Shape(format!(
            "cost is {}x{}, marginals are {n0} and {n1}",
            cost.rows(),
            cost.cols()
        )));
    }
    if !(eps_entropic > 0.0) {
        return Err(Error::Parameter("eps_entropic must be > 0".into()));
    }
    if mu0.iter().chain(mu1).any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::Parameter("marginal weights must be finite and >= 0".into()));
    }

    let max_finite = cost
        .data()
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_finite.is_finite() {
        // Nothing can move: the plan is empty and the objective is the full
        // KL price of destroying mu0 and creating mu1.
        let total = mu0.iter().sum::<f64>() + mu1.iter().sum::<f64>();
        return Ok(OetSolution {
            gamma: Matrix::zeros(n0, n1),
            objective: total,
            iterations: 0,
            converged: true,
            eps_entropic,
        });
    }

    // A row (column) is dead when no finite-cost entry or no mass makes any
    // plan entry possible there.
    let row_alive: Vec<bool> = (0..n0)
        .map(|i| mu0[i] > 0.0 && cost.row(i).iter().any(|c| c.is_finite()))
        .collect();
    let col_alive: Vec<bool> = (0..n1)
        .map(|j| mu1[j] > 0.0 && (0..n0).any(|i| cost.get(i, j).is_finite()))
        .collect();

    // Annealing schedule down to the target eps.
    let mut stages = Vec::new();
    for factor in [1000.0, 100.0, 10.0] {
        let e = eps_entropic * factor;
        if e < max_finite.max(eps_entropic) {
            stages.push(e);
        }
    }
    stages.push(eps_entropic);

    let mut state = Potentials::new(n0, n1);
    let mut iterations = 0usize;
    let mut converged = false;
    let warmup_iters = 200.min(max_iter / 4).max(1);

    for (s, &eps) in stages.iter().enumerate() {
        let is_final = s == stages.len() - 1;
        let budget = if is_final { max_iter.saturating_sub(iterations) } else { warmup_iters };
        let stage_tol = if is_final { tol } else { tol.max(1e-4) };
        let (used, ok) = state.run_stage(
            mu0, mu1, cost, eps, max_finite, &row_alive, &col_alive, budget, stage_tol,
        );
        iterations += used;
        if is_final {
            converged = ok;
        }
    }

    let gamma = state.plan(cost, eps_entropic, &row_alive, &col_alive);
    let objective = oet_objective(&gamma, mu0, mu1, cost, eps_entropic);
    Ok(OetSolution { gamma, objective, iterations, converged, eps_entropic })
}

/// Objective value of a candidate plan under the module's convention.
pub fn oet_objective(gamma: &Matrix, mu0: &[f64], mu1: &[f64], cost: &Matrix, eps: f64) -> f64 {
    let mut obj = 0.0;
    for i in 0..gamma.rows() {
        for (g, c) in gamma.row(i).iter().zip(cost.row(i)) {
            if !c.is_finite() {
                continue;
            }
            let ent = if *g > 0.0 { g * g.ln() - g + 1.0 } else { 1.0 };
            obj += c * g + eps * ent;
        }
    }
    obj + kl_unnormalized(&gamma.row_sums(), mu0) + kl_unnormalized(&gamma.col_sums(), mu1)
}

fn kl_unnormalized(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| {
            if p == 0.0 {
                q
            } else if q == 0.0 {
                f64::INFINITY
            } else {
                p * (p / q).ln() - p + q
            }
        })
        .sum()
}

/// Dual potentials `u, v` with `gamma = exp((u_i + v_j - c_ij)/eps)`.
/// Stored in potential form so they survive annealing stage changes.
struct Potentials {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Potentials {
    fn new(n0: usize, n1: usize) -> Self {
        Potentials { u: vec![0.0; n0], v: vec![0.0; n1] }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_stage(
        &mut self,
        mu0: &[f64],
        mu1: &[f64],
        cost: &Matrix,
        eps: f64,
        max_finite: f64,
        row_alive: &[bool],
        col_alive: &[bool],
        budget: usize,
        tol: f64,
    ) -> (usize, bool) {
        let log_domain = eps < 1e-3 * max_finite;
        let fi = 1.0 / (1.0 + eps);
        let cost_t = cost.transpose();
        // Vector-domain kernel, built once per stage.
        let kernel = (!log_domain).then(|| {
            let mut k = cost.clone();
            for v in k.data_mut() {
                *v = if v.is_finite() { (-*v / eps).exp() } else { 0.0 };
            }
            (k.clone(), k.transpose())
        });

        for iter in 0..budget {
            let scalings_v: Option<Vec<f64>> =
                kernel.as_ref().map(|_| self.v.iter().map(|&vj| softexp(vj / eps)).collect());
            let u_new: Vec<f64> = (0..mu0.len())
                .into_par_iter()
                .map(|i| {
                    if !row_alive[i] {
                        return f64::NEG_INFINITY;
                    }
                    let s = match (&kernel, &scalings_v) {
                        (Some((k, _)), Some(b)) => {
                            let dot: f64 =
                                k.row(i).iter().zip(b).map(|(&kij, &bj)| kij * bj).sum();
                            dot.max(f64::MIN_POSITIVE).ln()
                        }
                        _ => lse_row(cost.row(i), &self.v, eps),
                    };
                    eps * fi * (mu0[i].ln() - s)
                })
                .collect();
            let (du, du_lo, du_hi) = signed_log_changes(&u_new, &self.u, eps);
            self.u = u_new;

            let scalings_u: Option<Vec<f64>> =
                kernel.as_ref().map(|_| self.u.iter().map(|&ui| softexp(ui / eps)).collect());
            let v_new: Vec<f64> = (0..mu1.len())
                .into_par_iter()
                .map(|j| {
                    if !col_alive[j] {
                        return f64::NEG_INFINITY;
                    }
                    let s = match (&kernel, &scalings_u) {
                        (Some((_, kt)), Some(a)) => {
                            let dot: f64 =
                                kt.row(j).iter().zip(a).map(|(&kij, &ai)| kij * ai).sum();
                            dot.max(f64::MIN_POSITIVE).ln()
                        }
                        _ => lse_row(cost_t.row(j), &self.u, eps),
                    };
                    eps * fi * (mu1[j].ln() - s)
                })
                .collect();
            let (dv, dv_lo, dv_hi) = signed_log_changes(&v_new, &self.v, eps);
            self.v = v_new;

            // Two stopping criteria. The scaling change is the documented
            // one; the plan change `max |d(ln a_i) + d(ln b_j)|` ignores
            // the a<->b rebalancing direction that leaves gamma fixed and
            // that, for eps far below the marginal penalty, contracts at
            // rate O(eps) without ever affecting the output.
            let scaling_change = du.max(dv);
            let plan_change = (du_hi + dv_hi).max(-(du_lo + dv_lo)).max(0.0);
            if scaling_change < tol || plan_change < tol {
                return (iter + 1, true);
            }
        }
        (budget, false)
    }

    fn plan(&self, cost: &Matrix, eps: f64, row_alive: &[bool], col_alive: &[bool]) -> Matrix {
        let mut gamma = Matrix::zeros(cost.rows(), cost.cols());
        for i in 0..cost.rows() {
            if !row_alive[i] {
                continue;
            }
            let ui = self.u[i];
            let row = gamma.row_mut(i);
            for (j, (&c, slot)) in cost.row(i).iter().zip(row.iter_mut()).enumerate() {
                if c.is_finite() && col_alive[j] {
                    *slot = ((ui + self.v[j] - c) / eps).exp();
                }
            }
        }
        gamma
    }
}

#[inline]
fn softexp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else {
        x.exp()
    }
}

/// log sum_j exp((v_j - c_j)/eps) over finite-cost entries.
fn lse_row(costs: &[f64], pot: &[f64], eps: f64) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    for (&c, &p) in costs.iter().zip(pot) {
        if c.is_finite() && p > f64::NEG_INFINITY {
            hi = hi.max((p - c) / eps);
        }
    }
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for (&c, &p) in costs.iter().zip(pot) {
        if c.is_finite() && p > f64::NEG_INFINITY {
            sum += (((p - c) / eps) - hi).exp();
        }
    }
    hi + sum.ln()
}

/// Changes of the log-scalings `ln a = u/eps` between iterations:
/// `(sup |d|, min d, max d)` over alive entries.
fn signed_log_changes(new: &[f64], old: &[f64], eps: f64) -> (f64, f64, f64) {
    let mut sup = 0.0_f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&n, &o) in new.iter().zip(old) {
        if n == f64::NEG_INFINITY && o == f64::NEG_INFINITY {
            continue;
        }
        let d = (n - o) / eps;
        sup = sup.max(d.abs());
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo > hi {
        // no alive entries on this side
        return (0.0, 0.0, 0.0);
    }
    (sup, lo, hi)
}

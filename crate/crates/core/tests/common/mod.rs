//! Shared independent oracles for the integration and acceptance suites.
//!
//! Everything here deliberately avoids the library's solver paths: the
//! entropy-transport oracle is a coordinate-descent convex minimizer with
//! bisection line searches, and the transportation oracle enumerates
//! basic feasible solutions of the LP. Slow and simple on purpose.

#![allow(dead_code)]

use usb_core::Matrix;

/// Objective of the entropy-transport problem, written out independently:
/// transport cost plus marginal KL terms plus the entropic term over
/// finite-cost entries (`gamma ln gamma - gamma + 1`).
pub fn oet_objective_oracle(
    gamma: &Matrix,
    mu0: &[f64],
    mu1: &[f64],
    cost: &Matrix,
    eps: f64,
) -> f64 {
    let (n0, n1) = (gamma.rows(), gamma.cols());
    let mut obj = 0.0;
    for i in 0..n0 {
        for j in 0..n1 {
            let c = cost.get(i, j);
            if !c.is_finite() {
                continue;
            }
            let g = gamma.get(i, j);
            let ent = if g > 0.0 { g * g.ln() - g + 1.0 } else { 1.0 };
            obj += c * g + eps * ent;
        }
    }
    let rows = gamma.row_sums();
    let cols = gamma.col_sums();
    let kl = |p: f64, q: f64| {
        if p == 0.0 {
            q
        } else {
            p * (p / q).ln() - p + q
        }
    };
    for (i, &m) in mu0.iter().enumerate() {
        obj += kl(rows[i], m);
    }
    for (j, &m) in mu1.iter().enumerate() {
        obj += kl(cols[j], m);
    }
    obj
}

/// Brute-force convex minimizer for the entropy-transport objective:
/// cyclic coordinate descent, each coordinate solved by bisection on the
/// monotone stationarity condition
///
///   c_ij + eps ln g + ln(r_i/mu0_i) + ln(c_j/mu1_j) = 0.
pub fn oet_oracle(mu0: &[f64], mu1: &[f64], cost: &Matrix, eps: f64) -> (Matrix, f64) {
    let (n0, n1) = (mu0.len(), mu1.len());
    let mut gamma = Matrix::zeros(n0, n1);
    for i in 0..n0 {
        for j in 0..n1 {
            if cost.get(i, j).is_finite() && mu0[i] > 0.0 && mu1[j] > 0.0 {
                gamma.set(i, j, 0.5 * (mu0[i] * mu1[j]).sqrt() / (n0 * n1) as f64 + 1e-3);
            }
        }
    }
    for _ in 0..20_000 {
        let mut max_change = 0.0_f64;
        for i in 0..n0 {
            for j in 0..n1 {
                if !(cost.get(i, j).is_finite() && mu0[i] > 0.0 && mu1[j] > 0.0) {
                    continue;
                }
                let old = gamma.get(i, j);
                let r_rest: f64 = gamma.row(i).iter().sum::<f64>() - old;
                let c_rest: f64 = (0..n0).map(|a| gamma.get(a, j)).sum::<f64>() - old;
                let phi = |g: f64| {
                    cost.get(i, j)
                        + eps * g.ln()
                        + ((r_rest + g) / mu0[i]).ln()
                        + ((c_rest + g) / mu1[j]).ln()
                };
                let mut lo = 1e-300;
                let mut hi = (mu0[i] + mu1[j] + 1.0) * 10.0;
                while phi(hi) < 0.0 {
                    hi *= 10.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if phi(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let new = 0.5 * (lo + hi);
                gamma.set(i, j, new);
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < 1e-13 {
            break;
        }
    }
    let obj = oet_objective_oracle(&gamma, mu0, mu1, cost, eps);
    (gamma, obj)
}

/// Exact transportation optimum for tiny instances by enumerating basic
/// feasible solutions (spanning bases of the bipartite graph).
pub fn transport_oracle_small(supply: &[f64], demand: &[f64], cost: &Matrix) -> f64 {
    let (n, m) = (supply.len(), demand.len());
    assert!(n <= 3 && m <= 3, "oracle only enumerates up to 3x3");
    let cells = n * m;
    let basis_size = n + m - 1;
    let mut best = f64::INFINITY;

    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != basis_size {
            continue;
        }
        if let Some(flow) = solve_basis(mask, supply, demand, n, m) {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..m {
                    total += flow[i * m + j] * cost.get(i, j);
                }
            }
            best = best.min(total);
        }
    }
    best
}

/// Triangular solve of the basis equations; `None` when the basis is
/// cyclic (not a tree) or the resulting flow is infeasible.
fn solve_basis(mask: u32, supply: &[f64], demand: &[f64], n: usize, m: usize) -> Option<Vec<f64>> {
    let in_basis = |i: usize, j: usize| mask >> (i * m + j) & 1 == 1;
    let mut flow = vec![0.0; n * m];
    let mut assigned = vec![false; n * m];
    let mut rs: Vec<f64> = supply.to_vec();
    let mut rd: Vec<f64> = demand.to_vec();

    loop {
        let mut progressed = false;
        for i in 0..n {
            let open: Vec<usize> =
                (0..m).filter(|&j| in_basis(i, j) && !assigned[i * m + j]).collect();
            if open.len() == 1 {
                let j = open[0];
                flow[i * m + j] = rs[i];
                rd[j] -= rs[i];
                rs[i] = 0.0;
                assigned[i * m + j] = true;
                progressed = true;
            }
        }
        for j in 0..m {
            let open: Vec<usize> =
                (0..n).filter(|&i| in_basis(i, j) && !assigned[i * m + j]).collect();
            if open.len() == 1 {
                let i = open[0];
                flow[i * m + j] = rd[j];
                rs[i] -= rd[j];
                rd[j] = 0.0;
                assigned[i * m + j] = true;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let all_assigned = (0..n * m).all(|c| !((mask >> c & 1) == 1) || assigned[c]);
    let balanced = rs.iter().chain(rd.iter()).all(|r| r.abs() < 1e-9);
    let feasible = flow.iter().all(|&f| f >= -1e-9);
    (all_assigned && balanced && feasible).then_some(flow)
}

//! Exact transportation solve by successive shortest augmenting paths.
//!
//! Dense bipartite formulation with node potentials: every augmentation
//! runs one heap-based Dijkstra over reduced costs (nonnegative by
//! induction, clamped against float noise), pushes the bottleneck flow,
//! and rebalances the potentials. Augmentations snap drained arcs and
//! residuals to exact zero so float dust can never pin a bottleneck; each
//! augmentation then genuinely saturates a source, a sink, or a residual
//! arc, keeping the iteration count near `n + m` in practice. A generous
//! cap guards against degenerate stalls.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Min-heap entry; ties broken by node index for determinism.
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Minimum total cost of moving `supply` onto `demand` under `cost`.
/// Totals must match; callers normalize both sides to 1.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &Matrix) -> Result<f64> {
    let (n, m) = (supply.len(), demand.len());
    if cost.rows() != n || cost.cols() != m {
        return Err(Error::Shape("cost matrix does not match supply/demand".into()));
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 * total_supply.max(1.0) {
        return Err(Error::Parameter("supply and demand totals differ".into()));
    }

    let mut rs = supply.to_vec();
    let mut rd = demand.to_vec();
    let mut flow = Matrix::zeros(n, m);
    // sources with positive flow into each sink; kept sparse so residual
    // relaxations never scan the dense flow matrix
    let mut inflow: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut p_src = vec![0.0_f64; n];
    let mut p_snk = vec![0.0_f64; m];

    let mass_eps = 1e-14 * total_supply.max(1.0);
    let max_augment = 64 * (n + m) + 256;
    let nn = n + m;
    let mut dist = vec![f64::INFINITY; nn];
    let mut parent = vec![usize::MAX; nn];
    let mut visited = vec![false; nn];

    for _ in 0..max_augment {
        let remaining: f64 = rs.iter().sum();
        if remaining <= mass_eps {
            break;
        }

        // Dijkstra from all unsaturated sources; nodes 0..n are sources,
        // n..n+m sinks. Early exit at the first deficit sink popped.
        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        visited.fill(false);
        let mut heap = BinaryHeap::with_capacity(m + 16);
        for (i, &r) in rs.iter().enumerate() {
            if r > 0.0 {
                dist[i] = 0.0;
                heap.push(HeapEntry { dist: 0.0, node: i });
            }
        }
        let mut target = usize::MAX;
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if visited[node] || d > dist[node] {
                continue;
            }
            visited[node] = true;
            if node >= n && rd[node - n] > 0.0 {
                target = node;
                break;
            }
            if node < n {
                let i = node;
                for (j, &c) in cost.row(i).iter().enumerate() {
                    if visited[n + j] {
                        continue;
                    }
                    let rc = (c + p_src[i] - p_snk[j]).max(0.0);
                    if d + rc < dist[n + j] {
                        dist[n + j] = d + rc;
                        parent[n + j] = i;
                        heap.push(HeapEntry { dist: d + rc, node: n + j });
                    }
                }
            } else {
                let j = node - n;
                for &i in &inflow[j] {
                    if visited[i] {
                        continue;
                    }
                    let rc = (p_snk[j] - p_src[i] - cost.get(i, j)).max(0.0);
                    if d + rc < dist[i] {
                        dist[i] = d + rc;
                        parent[i] = n + j;
                        heap.push(HeapEntry { dist: d + rc, node: i });
                    }
                }
            }
        }
        if target == usize::MAX {
            return Err(Error::Numeric("transportation network disconnected".into()));
        }

        let target_dist = dist[target];
        for (i, p) in p_src.iter_mut().enumerate() {
            *p += dist[i].min(target_dist);
        }
        for (j, p) in p_snk.iter_mut().enumerate() {
            *p += dist[n + j].min(target_dist);
        }

        // walk back to find the bottleneck, then push
        let mut bottleneck = rd[target - n];
        let mut node = target;
        while parent[node] != usize::MAX {
            let prev = parent[node];
            if node < n {
                bottleneck = bottleneck.min(flow.get(node, prev - n));
            }
            node = prev;
        }
        bottleneck = bottleneck.min(rs[node]);

        let mut walker = target;
        while parent[walker] != usize::MAX {
            let prev = parent[walker];
            if walker >= n {
                let (i, j) = (prev, walker - n);
                if flow.get(i, j) == 0.0 {
                    inflow[j].push(i);
                }
                flow.set(i, j, flow.get(i, j) + bottleneck);
            } else {
                // snap drained arcs to exactly zero so float residue can
                // never pin future bottlenecks near zero
                let (i, j) = (walker, prev - n);
                let left = flow.get(i, j) - bottleneck;
                if left <= mass_eps {
                    flow.set(i, j, 0.0);
                    if let Some(pos) = inflow[j].iter().position(|&s| s == i) {
                        inflow[j].swap_remove(pos);
                    }
                } else {
                    flow.set(i, j, left);
                }
            }
            walker = prev;
        }
        rs[node] = if rs[node] - bottleneck <= mass_eps { 0.0 } else { rs[node] - bottleneck };
        rd[target - n] = if rd[target - n] - bottleneck <= mass_eps {
            0.0
        } else {
            rd[target - n] - bottleneck
        };
    }

    let remaining: f64 = rs.iter().sum();
    if remaining > 1e-9 * total_supply.max(1.0) {
        return Err(Error::Numeric(format!(
            "transportation solve stalled with {remaining:.3e} mass unrouted"
        )));
    }

    let mut total = 0.0;
    for i in 0..n {
        for (f, c) in flow.row(i).iter().zip(cost.row(i)) {
            total += f * c;
        }
    }
    Ok(total)
}

/// Entropic transport cost for clouds past the exact-solver budget:
/// balanced Sinkhorn, no debiasing, cost evaluated on the smoothed plan.
pub fn entropic_transport_cost(
    supply: &[f64],
    demand: &[f64],
    cost: &Matrix,
    eps: f64,
    max_iter: usize,
) -> Result<f64> {
    let (n, m) = (supply.len(), demand.len());
    if cost.rows() != n || cost.cols() != m {
        return Err(Error::Shape("cost matrix does not match supply/demand".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter("eps must be > 0".into()));
    }
    let mut kernel = cost.clone();
    for v in kernel.data_mut() {
        *v = (-*v / eps).exp();
    }
    let mut a = vec![1.0; n];
    let mut b = vec![1.0; m];
    for _ in 0..max_iter {
        let mut max_change = 0.0_f64;
        for i in 0..n {
            let kb: f64 = kernel.row(i).iter().zip(&b).map(|(k, bj)| k * bj).sum();
            let new = supply[i] / kb.max(f64::MIN_POSITIVE);
            max_change = max_change.max((new / a[i]).ln().abs());
            a[i] = new;
        }
        for j in 0..m {
            let ka: f64 = (0..n).map(|i| kernel.get(i, j) * a[i]).sum();
            let new = demand[j] / ka.max(f64::MIN_POSITIVE);
            max_change = max_change.max((new / b[j]).ln().abs());
            b[j] = new;
        }
        if max_change < 1e-9 {
            break;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            total += a[i] * kernel.get(i, j) * b[j] * cost.get(i, j);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_distance() {
        let cost = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let c = transport_cost(&[1.0], &[1.0], &cost).unwrap();
        assert!((c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn prefers_cheap_assignment() {
        // classic 2x2: identity pairing is optimal
        let cost = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let c = transport_cost(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn splits_supply_when_needed() {
        // one source feeding two sinks at different prices
        let cost = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let c = transport_cost(&[1.0], &[0.25, 0.75], &cost).unwrap();
        assert!((c - (0.25 + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_totals_rejected() {
        let cost = Matrix::zeros(1, 1);
        assert!(transport_cost(&[1.0], &[0.5], &cost).is_err());
    }

    #[test]
    fn handles_many_partial_augmentations() {
        // irrational-ish weights force repeated partial saturations
        let n = 40;
        let supply: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 7.0).collect();
        let total_s: f64 = supply.iter().sum();
        let demand: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 104729) % 11) as f64 / 5.0).collect();
        let total_d: f64 = demand.iter().sum();
        let supply: Vec<f64> = supply.iter().map(|s| s / total_s).collect();
        let demand: Vec<f64> = demand.iter().map(|d| d / total_d).collect();
        let mut cost = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cost.set(i, j, ((i as f64 - j as f64).abs()).sqrt());
            }
        }
        let c = transport_cost(&supply, &demand, &cost).unwrap();
        assert!(c.is_finite() && c >= 0.0);
    }
}

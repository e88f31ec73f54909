//! Forward simulation of a trained model.
//!
//! Continuous inference integrates every particle through
//! `dx = (v + nu^2/2 s) dt + nu dW` while its log-weight accumulates the
//! learned growth rate. Branching inference keeps unit weights and instead
//! draws discrete division/death events at rate `|g|`, recording the full
//! lineage. Network evaluations are batched over the population per step;
//! per-particle randomness is consumed in index order, so runs are
//! reproducible given a seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Snapshot;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::training::ModelTriple;

/// A weighted point cloud at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCloud {
    pub points: Matrix,
    pub log_weights: Vec<f64>,
    pub time: f64,
}

impl WeightedCloud {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.log_weights.iter().map(|lw| lw.exp()).sum()
    }

    pub fn from_snapshot(snap: &Snapshot) -> Self {
        WeightedCloud {
            points: snap.points.clone(),
            log_weights: snap.weights.iter().map(|w| w.ln()).collect(),
            time: snap.time,
        }
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

pub struct ContinuousRun {
    /// One cloud per requested record time.
    pub clouds: Vec<WeightedCloud>,
    /// Particles that left the finite range and were excluded.
    pub dropped_nonfinite: usize,
}

/// Weighted-mass SDE integration from `t_start`, recording the population
/// at every time in `record_times` (ascending). Initial weights are 1.
pub fn continuous_inference_path<R: Rng + ?Sized>(
    model: &ModelTriple,
    start: &Snapshot,
    t_start: f64,
    record_times: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<ContinuousRun> {
    if !(dt > 0.0) {
        return Err(Error::Parameter("dt must be > 0".into()));
    }
    if start.dim() != model.arch.input_dim {
        return Err(Error::Shape(format!(
            "start cloud dim {} != model dim {}",
            start.dim(),
            model.arch.input_dim
        )));
    }
    if record_times.is_empty() || record_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("record_times must be non-empty and ascending".into()));
    }
    if record_times[0] < t_start - 1e-12 {
        return Err(Error::Parameter("record_times must not precede t_start".into()));
    }

    let n = start.len();
    let d = start.dim();
    let mut x = start.points.clone();
    let mut lw = vec![0.0; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut dropped = 0usize;
    let normal = StandardNormal;
    let mut t = t_start;

    let mut clouds = Vec::with_capacity(record_times.len());
    for &rt in record_times {
        while t < rt - 1e-12 {
            let h = dt.min(rt - t);
            let idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
            if idx.is_empty() {
                break;
            }
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| x.row(i).to_vec()).collect();
            let xb = Matrix::from_rows(&rows)?;
            let times = vec![t; idx.len()];
            let v = model.eval_v(&xb, &times)?;
            let g = model.eval_g(&xb, &times)?;
            let s = model.eval_s(&xb, &times)?;

            let noise_scale = model.nu * h.sqrt();
            let half_nu2 = 0.5 * model.nu * model.nu;
            for (row, &i) in idx.iter().enumerate() {
                let xi = x.row_mut(i);
                let mut finite = true;
                for k in 0..d {
                    let z: f64 = normal.sample(rng);
                    xi[k] += (v.get(row, k) + half_nu2 * s.get(row, k)) * h + noise_scale * z;
                    finite &= xi[k].is_finite();
                }
                lw[i] += g[row] * h;
                finite &= lw[i].is_finite();
                if !finite {
                    active[i] = false;
                    dropped += 1;
                }
            }
            t += h;
        }
        let keep: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        let rows: Vec<Vec<f64>> = keep.iter().map(|&i| x.row(i).to_vec()).collect();
        clouds.push(WeightedCloud {
            points: Matrix::from_rows(&rows)?,
            log_weights: keep.iter().map(|&i| lw[i]).collect(),
            time: rt,
        });
    }
    Ok(ContinuousRun { clouds, dropped_nonfinite: dropped })
}

/// Single-endpoint convenience wrapper around
/// [`continuous_inference_path`].
pub fn continuous_inference<R: Rng + ?Sized>(
    model: &ModelTriple,
    start: &Snapshot,
    t_span: (f64, f64),
    dt: f64,
    rng: &mut R,
) -> Result<(WeightedCloud, usize)> {
    let run = continuous_inference_path(model, start, t_span.0, &[t_span.1], dt, rng)?;
    let ContinuousRun { mut clouds, dropped_nonfinite } = run;
    Ok((clouds.pop().expect("one record time"), dropped_nonfinite))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalEvent {
    Division,
    Death,
    Survived,
}

/// One entity in a branching run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineageNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    /// Set only for nodes that died.
    pub death_time: Option<f64>,
    /// `(t, x)` at step times, when path recording is on. The birth
    /// position is always the first entry.
    pub path: Vec<(f64, Vec<f64>)>,
    pub terminal: TerminalEvent,
}

/// Event-sourced record of a branching run. Children always carry larger
/// ids than their parent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineageTree {
    pub nodes: Vec<LineageNode>,
    pub roots: usize,
}

impl LineageTree {
    pub fn children_of(&self, id: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.parent == Some(id))
            .map(|n| n.id)
            .collect()
    }

    /// Structural invariants: ordering of birth times, division arity,
    /// and terminal-event consistency.
    pub fn check_invariants(&self) -> Result<()> {
        for node in &self.nodes {
            let kids = self.children_of(node.id);
            if let Some(p) = node.parent {
                if self.nodes[p].birth_time >= node.birth_time {
                    return Err(Error::Numeric(format!(
                        "node {} born before its parent {p}",
                        node.id
                    )));
                }
            }
            match node.terminal {
                TerminalEvent::Division => {
                    if kids.len() != 2 {
                        return Err(Error::Numeric(format!(
                            "divided node {} has {} children",
                            node.id,
                            kids.len()
                        )));
                    }
                }
                TerminalEvent::Death => {
                    if !kids.is_empty() || node.death_time.is_none() {
                        return Err(Error::Numeric(format!("dead node {} is malformed", node.id)));
                    }
                }
                TerminalEvent::Survived => {
                    if !kids.is_empty() {
                        return Err(Error::Numeric(format!("survivor {} has children", node.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

pub struct BranchingRun {
    /// Unit-weight survivors at the stop time.
    pub survivors: WeightedCloud,
    pub tree: LineageTree,
    /// Steps where `|g| dt` exceeded 1 and was clipped.
    pub clipped_probability_steps: usize,
    /// True when the population hit `max_population` and the run stopped
    /// early; results cover the simulated prefix.
    pub truncated: bool,
}

/// Discrete birth-death simulation. Each particle follows the same SDE as
/// continuous inference with its weight fixed at 1; per step it branches
/// with probability `min(|g| dt, 1)`, dividing into two copies when
/// `g >= 0` and dying otherwise. Children join the sweep at the next step.
#[allow(clippy::too_many_arguments)]
pub fn branching_inference<R: Rng + ?Sized>(
    model: &ModelTriple,
    start: &Snapshot,
    t_span: (f64, f64),
    dt: f64,
    rng: &mut R,
    max_population: usize,
    record_paths: bool,
) -> Result<BranchingRun> {
    if !(dt > 0.0) {
        return Err(Error::Parameter("dt must be > 0".into()));
    }
    if start.dim() != model.arch.input_dim {
        return Err(Error::Shape("start cloud dim != model dim".into()));
    }
    if max_population == 0 || start.len() > max_population {
        return Err(Error::Parameter("max_population must cover the start population".into()));
    }
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::Parameter("t_span must be increasing".into()));
    }

    let d = start.dim();
    let mut nodes: Vec<LineageNode> = Vec::with_capacity(2 * start.len());
    let mut alive: Vec<(usize, Vec<f64>)> = Vec::with_capacity(start.len());
    for i in 0..start.len() {
        let x = start.points.row(i).to_vec();
        nodes.push(LineageNode {
            id: i,
            parent: None,
            birth_time: t0,
            death_time: None,
            path: if record_paths { vec![(t0, x.clone())] } else { Vec::new() },
            terminal: TerminalEvent::Survived,
        });
        alive.push((i, x));
    }
    let roots = start.len();

    let normal = StandardNormal;
    let mut clipped = 0usize;
    let mut truncated = false;
    let mut t = t0;

    while t < t1 - 1e-12 && !alive.is_empty() {
        let h = dt.min(t1 - t);
        let rows: Vec<Vec<f64>> = alive.iter().map(|(_, x)| x.clone()).collect();
        let xb = Matrix::from_rows(&rows)?;
        let times = vec![t; alive.len()];
        let v = model.eval_v(&xb, &times)?;
        let g = model.eval_g(&xb, &times)?;
        let s = model.eval_s(&xb, &times)?;

        let noise_scale = model.nu * h.sqrt();
        let half_nu2 = 0.5 * model.nu * model.nu;
        let t_next = t + h;
        let mut next_alive: Vec<(usize, Vec<f64>)> = Vec::with_capacity(alive.len());

        for (row, (id, x)) in alive.iter().enumerate() {
            let id = *id;
            let mut xp = x.clone();
            let mut finite = true;
            for k in 0..d {
                let z: f64 = normal.sample(rng);
                xp[k] += (v.get(row, k) + half_nu2 * s.get(row, k)) * h + noise_scale * z;
                finite &= xp[k].is_finite();
            }
            if !finite {
                nodes[id].terminal = TerminalEvent::Death;
                nodes[id].death_time = Some(t_next);
                continue;
            }
            if record_paths {
                nodes[id].path.push((t_next, xp.clone()));
            }

            let growth = g[row];
            let p_raw = growth.abs() * h;
            if p_raw > 1.0 {
                clipped += 1;
            }
            let p = p_raw.min(1.0);
            let alpha: f64 = rng.random_range(0.0..1.0);
            if alpha <= p {
                if growth >= 0.0 {
                    nodes[id].terminal = TerminalEvent::Division;
                    for _ in 0..2 {
                        let child_id = nodes.len();
                        nodes.push(LineageNode {
                            id: child_id,
                            parent: Some(id),
                            birth_time: t_next,
                            death_time: None,
                            path: if record_paths {
                                vec![(t_next, xp.clone())]
                            } else {
                                Vec::new()
                            },
                            terminal: TerminalEvent::Survived,
                        });
                        next_alive.push((child_id, xp.clone()));
                    }
                } else {
                    nodes[id].terminal = TerminalEvent::Death;
                    nodes[id].death_time = Some(t_next);
                }
            } else {
                next_alive.push((id, xp));
            }
        }

        alive = next_alive;
        t = t_next;
        if alive.len() > max_population {
            truncated = true;
            break;
        }
    }

    let rows: Vec<Vec<f64>> = alive.iter().map(|(_, x)| x.clone()).collect();
    let survivors = WeightedCloud {
        points: Matrix::from_rows(&rows)?,
        log_weights: vec![0.0; alive.len()],
        time: t,
    };
    Ok(BranchingRun {
        survivors,
        tree: LineageTree { nodes, roots },
        clipped_probability_steps: clipped,
        truncated,
    })
}

/// Summary counts of a lineage tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageStats {
    pub roots: usize,
    pub divisions: usize,
    pub deaths: usize,
    pub survivors: usize,
    pub max_depth: usize,
    /// Surviving descendants per root, root order.
    pub survivors_per_root: Vec<usize>,
}

pub fn lineage_stats(tree: &LineageTree) -> LineageStats {
    let mut divisions = 0;
    let mut deaths = 0;
    let mut survivors = 0;
    // parents precede children, so one forward pass settles depth and root
    let mut depth = vec![0usize; tree.nodes.len()];
    let mut root_of = vec![0usize; tree.nodes.len()];
    let mut per_root = vec![0usize; tree.roots];
    let mut max_depth = 0;
    for node in &tree.nodes {
        match node.parent {
            Some(p) => {
                depth[node.id] = depth[p] + 1;
                root_of[node.id] = root_of[p];
            }
            None => root_of[node.id] = node.id,
        }
        max_depth = max_depth.max(depth[node.id]);
        match node.terminal {
            TerminalEvent::Division => divisions += 1,
            TerminalEvent::Death => deaths += 1,
            TerminalEvent::Survived => {
                survivors += 1;
                per_root[root_of[node.id]] += 1;
            }
        }
    }
    LineageStats {
        roots: tree.roots,
        divisions,
        deaths,
        survivors,
        max_depth,
        survivors_per_root: per_root,
    }
}

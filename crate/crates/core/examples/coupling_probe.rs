//! Scratch: per-pair coupling diagnostics on sim-gene data.

use std::time::Instant;

use usb_core::coupling::{default_epsilon, solve_oet, wfr_cost_matrix};
use usb_core::data::{gen_sim_gene, SimGeneParams};

fn main() {
    let dataset = gen_sim_gene(&SimGeneParams::default(), 7).unwrap();
    for k in 0..dataset.num_intervals() {
        let (s0, s1) = (dataset.snapshot(k), dataset.snapshot(k + 1));
        let cost = wfr_cost_matrix(&s0.points, &s1.points, 1.3).unwrap();
        let finite: Vec<f64> = cost.data().iter().copied().filter(|c| c.is_finite()).collect();
        let n_inf = cost.data().len() - finite.len();
        let maxc = finite.iter().cloned().fold(0.0_f64, f64::max);
        let eps = default_epsilon(&cost);
        let t = Instant::now();
        for (max_iter, tol) in [(5_000usize, 1e-7), (40_000, 1e-7), (40_000, 1e-9)] {
            let sol = solve_oet(&s0.weights, &s1.weights, &cost, eps, max_iter, tol).unwrap();
            println!(
                "pair {k}: {}x{} inf%={:.1} maxc={maxc:.2} eps={eps:.2e} iter_budget={max_iter} tol={tol:.0e} -> used={} conv={} obj={:.4} [{:?}]",
                s0.len(),
                s1.len(),
                100.0 * n_inf as f64 / cost.data().len() as f64,
                sol.iterations,
                sol.converged,
                sol.objective,
                t.elapsed()
            );
        }
    }
}

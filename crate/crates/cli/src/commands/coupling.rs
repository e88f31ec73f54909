use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Parser;
use serde_json::json;
use usb_core::coupling::{snapshot_semi_coupling, CouplingOptions};
use usb_core::data::load_snapshots;

use crate::config::FileConfig;
use crate::{ensure_dir, write_run_json, CliError, CliResult};

#[derive(Parser, Debug)]
pub struct Args {
    #[arg(long)]
    data: PathBuf,

    /// Growth penalty scale.
    #[arg(long)]
    delta: Option<f64>,

    /// Entropic regularization; default adapts to the cost scale.
    #[arg(long)]
    eps: Option<f64>,

    #[arg(long)]
    max_iter: Option<usize>,

    #[arg(long)]
    tol: Option<f64>,

    /// Also write gamma0/gamma1 entries per pair as CSV.
    #[arg(long)]
    dump_coupling: bool,

    #[arg(long, default_value = "coupling-out")]
    out_dir: PathBuf,
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let delta = args
        .delta
        .or(file.coupling.delta)
        .ok_or_else(|| CliError::Config("coupling needs --delta".into()))?;
    if !(delta > 0.0) {
        return Err(CliError::Config(format!("delta must be > 0, got {delta}")));
    }
    let dataset = load_snapshots(&args.data)?;
    ensure_dir(&args.out_dir)?;

    let opts = CouplingOptions {
        delta,
        eps_entropic: args.eps.or(file.coupling.eps_entropic),
        max_iter: args.max_iter.or(file.coupling.max_iter).unwrap_or(100_000),
        tol: args.tol.or(file.coupling.tol).unwrap_or(1e-9),
    };

    let mut summaries = Vec::new();
    for k in 0..dataset.num_intervals() {
        let (snap0, snap1) = (dataset.snapshot(k), dataset.snapshot(k + 1));
        let (semi, sol) = snapshot_semi_coupling(snap0, snap1, &opts)?;
        summaries.push(json!({
            "pair": k,
            "n0": snap0.len(),
            "n1": snap1.len(),
            "eps_entropic": sol.eps_entropic,
            "iterations": sol.iterations,
            "converged": sol.converged,
            "objective": sol.objective,
            "mass0": snap0.total_mass(),
            "mass1": snap1.total_mass(),
        }));
        if args.dump_coupling {
            let path = args.out_dir.join(format!("coupling_{k}.csv"));
            let mut w = BufWriter::new(
                File::create(&path)
                    .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?,
            );
            writeln!(w, "i,j,gamma0,gamma1").map_err(|e| CliError::Io(e.to_string()))?;
            for (i, j, g0, g1) in semi.entries_above(1e-12) {
                writeln!(w, "{i},{j},{g0},{g1}").map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
        println!(
            "pair {k}: eps {:.3e}, {} iterations, converged {}",
            sol.eps_entropic, sol.iterations, sol.converged
        );
    }

    let summary_path = args.out_dir.join("coupling_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summaries).unwrap() + "\n")
        .map_err(|e| CliError::Io(format!("writing {}: {e}", summary_path.display())))?;
    write_run_json(
        &args.out_dir,
        "coupling",
        &json!({
            "data": args.data,
            "delta": delta,
            "eps_entropic": opts.eps_entropic,
            "max_iter": opts.max_iter,
            "tol": opts.tol,
            "dump_coupling": args.dump_coupling,
        }),
    )
}

use std::path::PathBuf;

use clap::Parser;
use serde_json::json;
use usb_core::data::{
    gen_gaussian_mixture, gen_sim_gene, save_snapshots, GaussianMixtureParams, SimGeneParams,
};

use crate::config::{resolve_seed, FileConfig};
use crate::{ensure_dir, write_run_json, CliError, CliResult};

#[derive(Parser, Debug)]
pub struct Args {
    /// `sim-gene` or `gaussian`.
    #[arg(long)]
    generator: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output CSV path.
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,

    /// Gaussian mixture dimension.
    #[arg(long)]
    dim: Option<usize>,

    /// Sim-gene initial population at the resting state.
    #[arg(long)]
    n_steady: Option<usize>,

    /// Sim-gene initial population on the transitioning branch.
    #[arg(long)]
    n_transit: Option<usize>,

    /// Sim-gene division-rate scale (percent per unit time).
    #[arg(long)]
    alpha_g: Option<f64>,
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let generator = args
        .generator
        .or_else(|| file.data.generator.clone())
        .ok_or_else(|| CliError::Config("gen-data needs --generator".into()))?;
    let seed = resolve_seed(args.seed, file.data.seed)?;

    let (dataset, resolved) = match generator.as_str() {
        "sim-gene" => {
            let mut params = SimGeneParams::default();
            if let Some(n) = args.n_steady.or(file.data.n_steady) {
                params.n_steady = n;
            }
            if let Some(n) = args.n_transit.or(file.data.n_transit) {
                params.n_transit = n;
            }
            if let Some(a) = args.alpha_g.or(file.data.alpha_g) {
                params.alpha_g = a;
            }
            let ds = gen_sim_gene(&params, seed)?;
            (ds, json!({"generator": "sim-gene", "seed": seed,
                        "n_steady": params.n_steady, "n_transit": params.n_transit,
                        "alpha_g": params.alpha_g}))
        }
        "gaussian" => {
            let mut params = GaussianMixtureParams::default();
            if let Some(d) = args.dim.or(file.data.dim) {
                params.dim = d;
            }
            let ds = gen_gaussian_mixture(&params, seed)?;
            (ds, json!({"generator": "gaussian", "seed": seed, "dim": params.dim}))
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown generator {other:?}; expected sim-gene or gaussian"
            )));
        }
    };

    let out_dir = args.out.parent().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    if !out_dir.as_os_str().is_empty() {
        ensure_dir(&out_dir)?;
    }
    save_snapshots(&dataset, &args.out)?;
    write_run_json(
        if out_dir.as_os_str().is_empty() { std::path::Path::new(".") } else { &out_dir },
        "gen-data",
        &json!({"params": resolved, "out": args.out}),
    )?;
    let counts: Vec<usize> = dataset.snapshots().iter().map(|s| s.len()).collect();
    println!("wrote {} ({} snapshots, counts {counts:?})", args.out.display(), counts.len());
    Ok(())
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Parser;
use serde_json::json;
use usb_core::data::load_snapshots;
use usb_core::training::{save_model, train, CouplingKind, ModelProvenance, TrainConfig};

use crate::config::{resolve_seed, FileConfig};
use crate::{ensure_dir, write_run_json, CliError, CliResult};

/// Training hyperparameters, shared by `train` and the hold-one-out mode
/// of `evaluate`.
#[derive(Parser, Debug, Clone)]
pub struct TrainParams {
    /// Growth penalty scale of the coupling cost.
    #[arg(long)]
    pub delta: Option<f64>,

    /// Diffusion parameter.
    #[arg(long)]
    pub nu: Option<f64>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// Training pairs drawn per snapshot interval per step.
    #[arg(long)]
    pub batch: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub hidden: Option<usize>,

    #[arg(long)]
    pub depth: Option<usize>,

    /// Mini-batch size for the coupling solves (0 = full batch).
    #[arg(long)]
    pub minibatch: Option<usize>,

    /// Entropic regularization override for the coupling solves.
    #[arg(long)]
    pub eps: Option<f64>,

    /// `transport` (the pipeline) or `product` (independent-pairing
    /// ablation).
    #[arg(long)]
    pub coupling_mode: Option<String>,

    #[arg(long)]
    pub t_floor: Option<f64>,

    #[arg(long)]
    pub cosine_lr: Option<bool>,
}

#[derive(Parser, Debug)]
pub struct Args {
    #[arg(long)]
    pub data: PathBuf,

    #[command(flatten)]
    pub params: TrainParams,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value = "train-out")]
    pub out_dir: PathBuf,
}

pub fn build_config(
    params: &TrainParams,
    seed_flag: Option<u64>,
    file: &FileConfig,
) -> CliResult<TrainConfig> {
    let delta = params
        .delta
        .or(file.coupling.delta)
        .ok_or_else(|| CliError::Config("training needs --delta".into()))?;
    let nu = params
        .nu
        .or(file.coupling.nu)
        .ok_or_else(|| CliError::Config("training needs --nu".into()))?;
    let mut config = TrainConfig::new(delta, nu);
    config.seed = resolve_seed(seed_flag, file.train.seed)?;
    if let Some(v) = params.epochs.or(file.train.epochs) {
        config.epochs = v;
    }
    if let Some(v) = params.batch.or(file.train.batch_per_pair) {
        config.batch_per_pair = v;
    }
    if let Some(v) = params.lr.or(file.train.learning_rate) {
        config.learning_rate = v;
    }
    if let Some(v) = params.hidden.or(file.train.hidden_width) {
        config.hidden_width = v;
    }
    if let Some(v) = params.depth.or(file.train.depth) {
        config.depth = v;
    }
    if let Some(v) = params.minibatch.or(file.coupling.minibatch) {
        config.minibatch_ot_size = v;
    }
    if let Some(v) = params.t_floor.or(file.train.t_floor) {
        config.t_floor = v;
    }
    config.cosine_lr = params.cosine_lr.or(file.train.cosine_lr);
    config.eps_entropic = params.eps.or(file.coupling.eps_entropic);
    if let Some(v) = file.coupling.max_iter {
        config.coupling_max_iter = v;
    }
    if let Some(v) = file.coupling.tol {
        config.coupling_tol = v;
    }
    config.coupling = match params.coupling_mode.as_deref() {
        None => file.train.coupling_mode.unwrap_or(CouplingKind::Transport),
        Some("transport") => CouplingKind::Transport,
        Some("product") => CouplingKind::Product,
        Some(other) => {
            return Err(CliError::Config(format!(
                "unknown coupling mode {other:?}; expected transport or product"
            )));
        }
    };
    config.validate()?;
    Ok(config)
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let config = build_config(&args.params, args.seed, file)?;
    let dataset = load_snapshots(&args.data)?;
    ensure_dir(&args.out_dir)?;

    let out = train(&dataset, &config)?;

    let model_path = args.out_dir.join("model.json");
    let provenance = ModelProvenance {
        delta: config.delta,
        seed: config.seed,
        data_hash: dataset.content_hash(),
    };
    save_model(&out.model, &provenance, &model_path)?;

    let log_path = args.out_dir.join("loss.csv");
    let mut w = BufWriter::new(
        File::create(&log_path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", log_path.display())))?,
    );
    writeln!(w, "step,loss,loss_v,loss_g,loss_s").map_err(|e| CliError::Io(e.to_string()))?;
    for row in &out.log {
        writeln!(w, "{},{},{},{},{}", row.step, row.loss, row.loss_v, row.loss_g, row.loss_s)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    drop(w);

    write_run_json(&args.out_dir, "train", &json!({"data": args.data, "config": config}))?;
    println!(
        "trained {} steps (final loss {:.5}); model at {}",
        out.log.len(),
        out.log.last().map(|r| r.loss).unwrap_or(f64::NAN),
        model_path.display()
    );
    Ok(())
}

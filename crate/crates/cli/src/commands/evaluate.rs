use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Parser;
use serde_json::json;
use usb_core::data::{load_snapshots, sim_gene_growth_rate};
use usb_core::eval::{evaluate_on_dataset, growth_correlation, hold_one_out, EvalReport};
use usb_core::training::load_model;

use crate::config::{resolve_seed, FileConfig};
use crate::{ensure_dir, write_run_json, CliError, CliResult};

#[derive(Parser, Debug)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,

    #[arg(long)]
    data: PathBuf,

    #[arg(long)]
    dt: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Run the hold-one-out protocol over every interior snapshot;
    /// requires the training flags since each fold retrains.
    #[arg(long)]
    holdout: bool,

    #[command(flatten)]
    train: super::train::TrainParams,

    #[arg(long, default_value = "eval-out")]
    out_dir: PathBuf,
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let dataset = load_snapshots(&args.data)?;
    let dt = args.dt.or(file.eval.dt).unwrap_or(0.01);
    let seed = resolve_seed(args.seed, file.eval.seed)?;
    ensure_dir(&args.out_dir)?;

    if args.holdout || file.eval.holdout.unwrap_or(false) {
        if dataset.snapshots().len() < 3 {
            return Err(CliError::Config(
                "hold-one-out needs at least one interior snapshot (3+ times)".into(),
            ));
        }
        let config = super::train::build_config(&args.train, args.seed, file)?;
        let mut reports = Vec::new();
        for held in 1..dataset.num_intervals() {
            let report = hold_one_out(&dataset, &config, held, dt)?;
            println!("holdout {held}: w1 = {:.5}", report.mean_w1);
            reports.push((held, report));
        }
        let mean_w1: f64 =
            reports.iter().map(|(_, r)| r.mean_w1).sum::<f64>() / reports.len() as f64;
        let payload = json!({
            "folds": reports
                .iter()
                .map(|(held, r)| json!({"held": held, "report": r}))
                .collect::<Vec<_>>(),
            "mean_w1": mean_w1,
        });
        std::fs::write(
            args.out_dir.join("holdout_report.json"),
            serde_json::to_string_pretty(&payload).unwrap() + "\n",
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
        println!("mean held-out w1 = {mean_w1:.5}");
        return write_run_json(
            &args.out_dir,
            "evaluate",
            &json!({"data": args.data, "dt": dt, "holdout": true, "config": config}),
        );
    }

    let (model, provenance) = load_model(&args.model)?;
    let config = usb_core::training::TrainConfig::new(provenance.delta, model.nu);
    let mut report = evaluate_on_dataset(&model, &dataset, &config, dt, seed)?;
    attach_growth_probe(&mut report, &model, &dataset)?;
    write_report(&report, &args.out_dir)?;
    for row in &report.rows {
        println!(
            "t = {}: w1 = {:.5}, rme = {:.5}",
            row.original_time, row.w1, row.rme
        );
    }
    println!("mean w1 = {:.5}, mean rme = {:.5}", report.mean_w1, report.mean_rme);
    if let Some(r) = report.growth_pearson {
        println!("growth pearson = {r:.4}");
    }
    write_run_json(
        &args.out_dir,
        "evaluate",
        &json!({"model": args.model, "data": args.data, "dt": dt, "seed": seed,
                "model_provenance": provenance}),
    )
}

/// When the dataset metadata identifies the gene generator, score the
/// learned growth rate against the analytic division rate on the final
/// snapshot.
fn attach_growth_probe(
    report: &mut EvalReport,
    model: &usb_core::training::ModelTriple,
    dataset: &usb_core::data::TimeSeriesDataset,
) -> CliResult<()> {
    let meta = |key: &str| {
        dataset
            .metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
    };
    if meta("generator").as_deref() != Some("sim-gene") {
        return Ok(());
    }
    let Some(alpha_g) = meta("alpha_g").and_then(|v| v.parse::<f64>().ok()) else {
        return Ok(());
    };
    let probe = dataset.snapshot(dataset.num_intervals());
    let true_g: Vec<f64> = (0..probe.len())
        .map(|i| sim_gene_growth_rate(probe.points.get(i, 1), alpha_g))
        .collect();
    report.growth_pearson =
        growth_correlation(model, probe, &true_g, dataset.num_intervals() as f64)?;
    Ok(())
}

fn write_report(report: &EvalReport, out_dir: &std::path::Path) -> CliResult<()> {
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(report).unwrap() + "\n",
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = BufWriter::new(
        File::create(out_dir.join("report.csv")).map_err(|e| CliError::Io(e.to_string()))?,
    );
    writeln!(w, "internal_time,original_time,w1,rme").map_err(|e| CliError::Io(e.to_string()))?;
    for row in &report.rows {
        writeln!(w, "{},{},{},{}", row.internal_time, row.original_time, row.w1, row.rme)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

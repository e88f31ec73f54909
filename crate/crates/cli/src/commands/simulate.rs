use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use usb_core::data::{load_snapshots, save_weighted_cloud, Snapshot};
use usb_core::inference::{
    branching_inference, continuous_inference_path, lineage_stats, LineageTree, TerminalEvent,
};
use usb_core::training::load_model;
use usb_core::Matrix;

use crate::config::{resolve_seed, FileConfig};
use crate::svg::{palette, SvgCanvas};
use crate::{ensure_dir, write_run_json, CliError, CliResult};

#[derive(Parser, Debug)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,

    /// Dataset providing the start snapshot and the time map.
    #[arg(long)]
    data: PathBuf,

    /// `continuous` or `branching`.
    #[arg(long)]
    mode: Option<String>,

    #[arg(long)]
    dt: Option<f64>,

    /// Use only the first N points of the start snapshot.
    #[arg(long)]
    n_roots: Option<usize>,

    /// Replicate every root this many times (branching mode).
    #[arg(long)]
    repeats: Option<usize>,

    #[arg(long)]
    max_population: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Emit an SVG of the first two coordinates.
    #[arg(long)]
    plot: bool,

    #[arg(long, default_value = "simulate-out")]
    out_dir: PathBuf,
}

pub fn run(args: Args, file: &FileConfig) -> CliResult<()> {
    let mode = args
        .mode
        .clone()
        .or_else(|| file.inference.mode.clone())
        .ok_or_else(|| CliError::Config("simulate needs --mode continuous|branching".into()))?;
    let dt = args.dt.or(file.inference.dt).unwrap_or(0.01);
    if !(dt > 0.0) {
        return Err(CliError::Config(format!("dt must be > 0, got {dt}")));
    }
    let seed = resolve_seed(args.seed, file.inference.seed)?;

    let (model, provenance) = load_model(&args.model)?;
    let dataset = load_snapshots(&args.data)?;
    if dataset.dim() != model.arch.input_dim {
        return Err(CliError::Config(format!(
            "dataset dimension {} does not match model dimension {}",
            dataset.dim(),
            model.arch.input_dim
        )));
    }
    ensure_dir(&args.out_dir)?;

    let start_full = dataset.snapshot(0);
    let n_roots = args.n_roots.or(file.inference.n_roots).unwrap_or(start_full.len());
    let repeats = args.repeats.or(file.inference.repeats).unwrap_or(1).max(1);
    let start = build_start(start_full, n_roots.min(start_full.len()), repeats)?;

    let resolved = json!({
        "model": args.model, "data": args.data, "mode": mode, "dt": dt,
        "n_roots": n_roots, "repeats": repeats, "seed": seed,
        "max_population": args.max_population, "plot": args.plot,
        "model_provenance": provenance,
    });

    let span_end = dataset.num_intervals() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode.as_str() {
        "continuous" => {
            let record: Vec<f64> = (1..=dataset.num_intervals()).map(|k| k as f64).collect();
            let run = continuous_inference_path(&model, &start, 0.0, &record, dt, &mut rng)?;
            if run.dropped_nonfinite > 0 {
                eprintln!("warning: {} particles left the finite range", run.dropped_nonfinite);
            }
            let mut plot = args.plot.then(SvgCanvas::new);
            for (mut cloud, k) in run.clouds.into_iter().zip(1..) {
                cloud.time = dataset.to_original_time(cloud.time);
                let path = args.out_dir.join(format!("cloud_t{}.csv", cloud.time));
                save_weighted_cloud(&cloud, &path)?;
                if let (Some(canvas), true) = (plot.as_mut(), dataset.dim() >= 2) {
                    let pts: Vec<(f64, f64)> = (0..cloud.len())
                        .map(|i| (cloud.points.get(i, 0), cloud.points.get(i, 1)))
                        .collect();
                    canvas.scatter(&pts, palette(k - 1), 0.02);
                }
            }
            finish_plot(plot, &args.out_dir, dataset.dim())?;
        }
        "branching" => {
            let max_population =
                args.max_population.or(file.inference.max_population).unwrap_or(1_000_000);
            let run = branching_inference(
                &model,
                &start,
                (0.0, span_end),
                dt,
                &mut rng,
                max_population,
                true,
            )?;
            write_trajectories(&run.tree, &dataset, &args.out_dir)?;
            write_events(&run.tree, &dataset, &args.out_dir)?;
            let stats = lineage_stats(&run.tree);
            let stats_path = args.out_dir.join("lineage_summary.json");
            std::fs::write(&stats_path, serde_json::to_string_pretty(&stats).unwrap() + "\n")
                .map_err(|e| CliError::Io(e.to_string()))?;
            let mut survivors = run.survivors;
            survivors.time = dataset.to_original_time(survivors.time);
            save_weighted_cloud(&survivors, &args.out_dir.join("survivors.csv"))?;

            if args.plot && dataset.dim() >= 2 {
                let mut canvas = SvgCanvas::new();
                for node in &run.tree.nodes {
                    let path: Vec<(f64, f64)> =
                        node.path.iter().map(|(_, x)| (x[0], x[1])).collect();
                    canvas.polyline(&path, palette(root_of(&run.tree, node.id)));
                }
                std::fs::write(args.out_dir.join("plot.svg"), canvas.finish())
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
            println!(
                "branching: {} roots -> {} survivors ({} divisions, {} deaths{})",
                stats.roots,
                stats.survivors,
                stats.divisions,
                stats.deaths,
                if run.truncated { ", truncated" } else { "" }
            );
            write_run_json(&args.out_dir, "simulate", &resolved)?;
            if run.truncated {
                return Err(CliError::Numeric(format!(
                    "population exceeded max_population = {max_population}; partial results written"
                )));
            }
            return Ok(());
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown mode {other:?}; expected continuous or branching"
            )));
        }
    }
    write_run_json(&args.out_dir, "simulate", &resolved)
}

fn build_start(snap: &Snapshot, n_roots: usize, repeats: usize) -> CliResult<Snapshot> {
    if n_roots == 0 {
        return Err(CliError::Config("need at least one root".into()));
    }
    let mut rows = Vec::with_capacity(n_roots * repeats);
    for i in 0..n_roots {
        for _ in 0..repeats {
            rows.push(snap.points.row(i).to_vec());
        }
    }
    Ok(Snapshot::from_points(snap.time, Matrix::from_rows(&rows)?)?)
}

fn root_of(tree: &LineageTree, mut id: usize) -> usize {
    while let Some(p) = tree.nodes[id].parent {
        id = p;
    }
    id
}

fn write_trajectories(
    tree: &LineageTree,
    dataset: &usb_core::data::TimeSeriesDataset,
    out_dir: &std::path::Path,
) -> CliResult<()> {
    let path = out_dir.join("trajectories.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::Io(e.to_string()))?);
    let dim = dataset.dim();
    write!(w, "traj_id,parent_id,t").map_err(|e| CliError::Io(e.to_string()))?;
    for k in 0..dim {
        write!(w, ",x{k}").map_err(|e| CliError::Io(e.to_string()))?;
    }
    writeln!(w).map_err(|e| CliError::Io(e.to_string()))?;
    for node in &tree.nodes {
        let parent = node.parent.map(|p| p as i64).unwrap_or(-1);
        for (t, x) in &node.path {
            write!(w, "{},{},{}", node.id, parent, dataset.to_original_time(*t))
                .map_err(|e| CliError::Io(e.to_string()))?;
            for v in x {
                write!(w, ",{v}").map_err(|e| CliError::Io(e.to_string()))?;
            }
            writeln!(w).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn write_events(
    tree: &LineageTree,
    dataset: &usb_core::data::TimeSeriesDataset,
    out_dir: &std::path::Path,
) -> CliResult<()> {
    let path = out_dir.join("events.jsonl");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::Io(e.to_string()))?);
    let mut emit = |value: serde_json::Value| -> CliResult<()> {
        writeln!(w, "{value}").map_err(|e| CliError::Io(e.to_string()))
    };
    for node in &tree.nodes {
        if let Some((t, x)) = node.path.first() {
            emit(json!({
                "id": node.id, "parent": node.parent, "kind": "birth",
                "t": dataset.to_original_time(*t), "x": x,
            }))?;
        }
        match node.terminal {
            TerminalEvent::Division => {
                if let Some((t, x)) = node.path.last() {
                    emit(json!({
                        "id": node.id, "parent": node.parent, "kind": "division",
                        "t": dataset.to_original_time(*t), "x": x,
                    }))?;
                }
            }
            TerminalEvent::Death => {
                if let (Some(t), Some((_, x))) = (node.death_time, node.path.last()) {
                    emit(json!({
                        "id": node.id, "parent": node.parent, "kind": "death",
                        "t": dataset.to_original_time(t), "x": x,
                    }))?;
                }
            }
            TerminalEvent::Survived => {}
        }
    }
    Ok(())
}

fn finish_plot(
    plot: Option<SvgCanvas>,
    out_dir: &std::path::Path,
    dim: usize,
) -> CliResult<()> {
    if let Some(canvas) = plot {
        if dim >= 2 {
            std::fs::write(out_dir.join("plot.svg"), canvas.finish())
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

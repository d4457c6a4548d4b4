use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use inrbench::fieldmodels::{build, count_params, save_checkpoint, ModelConfig, ModelKind};
use inrbench::harness::{
    emit_heatmaps, fmt_float, parse_config, read_results_csv, resolve_workers, run_matrix, write_tables, ExperimentMatrix, Metric,
    RunOptions, MATRIX_FILE, RESULTS_CSV,
};
use inrbench::metrics::score;
use inrbench::signals::{generate, load_raster, save_signal, Bandwidth, Family};
use inrbench::tasks::{build_dataset, train, TaskArgs, TaskKind, TrainConfig};

#[derive(Parser)]
#[command(name = "inrb", version, about = "Fit continuous signal representations and sweep them at fixed parameter budgets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic signal as a native container.
    Gen(GenArgs),
    /// Fit one model to one signal.
    Fit(FitArgs),
    /// Run or report an experiment matrix.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    res: usize,
    /// One of 0.1, 0.2, …, 0.9; ignored by the star target.
    #[arg(long, default_value_t = 0.5)]
    bandwidth: f64,
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value = "overfit")]
    task: TaskKind,
    /// Native container, PGM/PPM or (with the `png` feature) PNG.
    #[arg(long)]
    signal: PathBuf,
    /// Noise standard deviation for denoising.
    #[arg(long)]
    eps: Option<f64>,
    /// Downsampling factor for super-resolution.
    #[arg(long)]
    factor: Option<usize>,
    /// Projection count for CT.
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    /// Overrides the per-model step count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Overrides the per-model learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run every cell of a matrix, resuming from the ledger in `--out`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides INRB_WORKERS and the config file.
        #[arg(long)]
        workers: Option<usize>,
        /// Stop after this many pending cells.
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Render absolute and gap heatmaps from a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "psnr")]
        metric: Metric,
        /// Defaults to the baseline recorded with the run.
        #[arg(long)]
        baseline: Option<ModelKind>,
        /// Defaults to `<in>/heatmaps`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn gen(a: &GenArgs) -> Result<()> {
    let b = Bandwidth::new(a.bandwidth)?;
    let signal = generate(a.family, a.dim, a.res, b, a.seed)?;
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    save_signal(&a.out, &signal)?;
    println!("wrote {} ({} values)", a.out.display(), signal.values().len());
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let signal = load_raster(&a.signal).with_context(|| format!("reading {}", a.signal.display()))?;
    let mut args = TaskArgs {
        noise_seed: a.seed,
        ..TaskArgs::default()
    };
    if let Some(e) = a.eps {
        args.eps = e;
    }
    args.factor = a.factor;
    if let Some(n) = a.angles {
        args.angles = n;
    }
    let data = build_dataset(&signal, a.task, &args)?;
    let config = ModelConfig::for_budget(a.model, a.budget, &data.eval_resolution(), data.channels())?;
    let mut model = build(&config, a.seed)?;
    let mut tc = TrainConfig::defaults(a.model, a.task);
    tc.seed = a.seed;
    if let Some(n) = a.iterations {
        tc.iterations = n;
    }
    if let Some(lr) = a.lr {
        tc.lr = lr;
    }
    let outcome = train(model.as_mut(), &data, &tc)?;
    fs::create_dir_all(&a.out)?;
    save_checkpoint(&a.out.join("checkpoint"), model.as_ref())?;
    save_signal(&a.out.join("render.inrb"), &outcome.render)?;
    let mut trace = fs::File::create(a.out.join("trace.csv"))?;
    writeln!(trace, "step,loss")?;
    for (step, loss) in &outcome.trace.losses {
        writeln!(trace, "{step},{}", fmt_float(*loss))?;
    }
    let s = score(&outcome.render, &data.eval_signal, None)?;
    let summary = serde_json::json!({
        "model": a.model.name(),
        "task": a.task.name(),
        "budget": a.budget,
        "param_count": count_params(model.as_ref()),
        "psnr_db": fmt_float(s.psnr_db),
        "ssim": s.ssim,
        "iou": s.iou,
        "train_s": outcome.trace.train_seconds,
        "infer_s": outcome.trace.infer_seconds,
        "clamped": outcome.trace.clamped,
        "seed": a.seed,
    });
    fs::write(a.out.join("metrics.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("{} on {}: PSNR {} dB, {} parameters", a.model, a.task, fmt_float(s.psnr_db), count_params(model.as_ref()));
    Ok(())
}

fn bench_run(config: &Path, out: &Path, workers: Option<usize>, max_cells: Option<usize>) -> Result<()> {
    let matrix = parse_config(config).with_context(|| format!("reading {}", config.display()))?;
    let workers = resolve_workers(workers, matrix.workers)?;
    let report = run_matrix(&matrix, out, &RunOptions { workers, max_cells })?;
    write_tables(out, &report.results)?;
    println!(
        "{} of {} cells complete ({} resumed, {} run this time) in {}",
        report.results.len(),
        report.results.len() + report.pending,
        report.resumed,
        report.attempted,
        out.display()
    );
    Ok(())
}

fn bench_report(input: &Path, metric: Metric, baseline: Option<ModelKind>, out: Option<PathBuf>) -> Result<()> {
    let rows = read_results_csv(&input.join(RESULTS_CSV)).with_context(|| format!("reading results in {}", input.display()))?;
    if rows.is_empty() {
        bail!("{} has no result rows", input.display());
    }
    let baseline = match baseline {
        Some(b) => b,
        None => {
            let text = fs::read_to_string(input.join(MATRIX_FILE)).context("no --baseline given and no recorded matrix")?;
            serde_json::from_str::<ExperimentMatrix>(&text)?.baseline
        }
    };
    let dir = out.unwrap_or_else(|| input.join("heatmaps"));
    let written = emit_heatmaps(&rows, metric, baseline, &dir)?;
    println!("wrote {} heatmaps to {}", written.images.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Fit(a) => fit(a),
        Command::Bench(BenchCommand::Run {
            config,
            out,
            workers,
            max_cells,
        }) => bench_run(config, out, *workers, *max_cells),
        Command::Bench(BenchCommand::Report {
            input,
            metric,
            baseline,
            out,
        }) => bench_report(input, *metric, *baseline, out.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

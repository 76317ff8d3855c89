//! `gsam`: train graph collaborative-filtering models with the baseline,
//! SAM, or gSAM optimizer, evaluate checkpoints, slice loss landscapes,
//! sweep the ball radius, and measure multi-seed stability.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gsam_core::eval::{evaluate_all, sharpness_estimate, EvalReport, SHARPNESS_BATCH_SIZE};
use gsam_core::graph::{
    load_interactions, normalized_adjacency, popularity_groups, split_holdout, SplitRatios,
    TripletSampler,
};
use gsam_core::harness::{
    multirun_stability, rho_sweep, run_training, RunConfig, DEFAULT_RHO_GRID, SHARPNESS_SEED,
};
use gsam_core::landscape::{filter_normalized_directions, loss_surface_grid, GridSpec};
use gsam_core::model::{load_checkpoint, BprTask, ModelConfig, Readout};
use gsam_core::optim::OptimMode;

#[derive(Parser)]
#[command(name = "gsam", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and evaluate the best checkpoint on the test split.
    Train(TrainArgs),
    /// Evaluate an existing checkpoint under the all-ranking protocol.
    Eval(EvalArgs),
    /// Slice the loss surface around a checkpoint along two random
    /// filter-normalized directions.
    Landscape(LandscapeArgs),
    /// Train once per ball radius over a list of values, shared seeds.
    Sweep(SweepArgs),
    /// Train each mode across several seeds and report the spread.
    Multirun(MultirunArgs),
}

/// Flags mirroring the run-config fields; anything set here overrides the
/// config file.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction-list file (one user per line: user id, then item ids).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for manifests, logs, reports, and checkpoints.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    run_seed: Option<u64>,
    /// Optimizer: baseline, sam, or gsam.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Ranking cutoff k.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sharpness_rho: Option<f64>,
    /// Propagation depth L.
    #[arg(long)]
    layers: Option<usize>,
    /// Embedding width d.
    #[arg(long)]
    dim: Option<usize>,
    /// L2 coefficient on batch-touched rows.
    #[arg(long)]
    l2: Option<f64>,
    /// Ball radius ρ.
    #[arg(long)]
    rho: Option<f64>,
    /// Inner ascent step η₁.
    #[arg(long)]
    eta1: Option<f64>,
    /// Outer step η₂.
    #[arg(long)]
    eta2: Option<f64>,
    /// Inner iterations T.
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Neumann truncation J.
    #[arg(long)]
    neumann_terms: Option<usize>,
    /// Neumann scaling α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Warm-start the inner ascent from the previous step's δ.
    #[arg(long)]
    warm_start: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.split_seed {
            cfg.split_seed = v;
        }
        if let Some(v) = self.run_seed {
            cfg.run_seed = v;
        }
        if let Some(v) = &self.mode {
            cfg.mode = v.parse::<OptimMode>()?;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.sharpness_rho {
            cfg.sharpness_rho = v;
        }
        if let Some(v) = self.layers {
            cfg.model.layers = v;
        }
        if let Some(v) = self.dim {
            cfg.model.dim = v;
        }
        if let Some(v) = self.l2 {
            cfg.model.l2_coeff = v;
        }
        if let Some(v) = self.rho {
            cfg.sam.rho = v;
        }
        if let Some(v) = self.eta1 {
            cfg.sam.eta1 = v;
        }
        if let Some(v) = self.eta2 {
            cfg.sam.eta2 = v;
        }
        if let Some(v) = self.inner_steps {
            cfg.sam.inner_steps = v;
        }
        if let Some(v) = self.neumann_terms {
            cfg.sam.neumann_terms = v;
        }
        if let Some(v) = self.alpha {
            cfg.sam.alpha = v;
        }
        if let Some(v) = self.warm_start {
            cfg.sam.warm_start = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    sharpness_rho: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct LandscapeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
    /// Seed for the two random directions.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Symmetric axis extent: the grid covers [-range, range]².
    #[arg(long, default_value_t = 1.0)]
    range: f64,
    /// Grid resolution per axis (odd, >= 3).
    #[arg(long, default_value_t = 25)]
    resolution: usize,
    /// Seed of the fixed probe batch.
    #[arg(long, default_value_t = SHARPNESS_SEED)]
    batch_seed: u64,
    #[arg(long, default_value_t = 8192)]
    batch_size: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated ρ values; the standard grid when omitted.
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
}

#[derive(Args)]
struct MultirunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Seeds per mode.
    #[arg(long, default_value_t = 30)]
    seeds: usize,
    /// Comma-separated modes to compare.
    #[arg(long, value_delimiter = ',', default_values_t = ["baseline".to_string(), "sam".to_string(), "gsam".to_string()])]
    modes: Vec<String>,
}

fn print_report(report: &EvalReport) {
    print!("{}", report.to_kv());
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let artifacts = run_training(&cfg)?;
    println!(
        "run complete: best epoch {} (val recall {:.5}), artifacts in {}",
        artifacts.best_epoch,
        artifacts.best_val_recall,
        artifacts.out_dir.display()
    );
    print_report(&artifacts.test_report);
    Ok(())
}

/// Rebuild task state for a checkpoint: dataset, split, adjacency, groups.
fn checkpoint_context(
    checkpoint: &PathBuf,
    dataset: &PathBuf,
    split_seed: u64,
) -> Result<(gsam_core::model::ParameterSet, ModelConfig, gsam_core::graph::SplitData, BprTask)> {
    let (params, meta) = load_checkpoint(checkpoint)?;
    let (data, _) = load_interactions(dataset)?;
    let split = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, split_seed)?;
    let adj = normalized_adjacency(&split.train)?;
    let cfg = ModelConfig {
        layers: meta.layers as usize,
        dim: params.dim(),
        readout: Readout::Mean,
        l2_coeff: meta.l2_coeff,
    };
    let task = BprTask::new(adj, cfg.clone());
    Ok((params, cfg, split, task))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (params, cfg, split, task) =
        checkpoint_context(&args.checkpoint, &args.dataset, args.split_seed)?;
    let grouping = popularity_groups(&split.train)?;
    let mut report = evaluate_all(&params, &cfg, task.adj(), &split, &grouping, args.k)?;
    let (sharp, degen) = sharpness_estimate(
        &task,
        &params,
        &split.train,
        args.sharpness_rho,
        SHARPNESS_SEED,
        SHARPNESS_BATCH_SIZE,
    )?;
    report.sharpness = Some(sharp);
    report.sharpness_degenerate = degen;

    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("report.txt"), report.to_kv())?;
    std::fs::write(
        args.out_dir.join("report.csv"),
        format!("{}\n{}\n", EvalReport::CSV_HEADER, report.to_csv_row()),
    )?;
    print_report(&report);
    Ok(())
}

fn cmd_landscape(args: &LandscapeArgs) -> Result<()> {
    if args.range <= 0.0 {
        bail!("range must be positive");
    }
    let (params, _, split, task) =
        checkpoint_context(&args.checkpoint, &args.dataset, args.split_seed)?;
    let batch = TripletSampler::new(args.batch_seed).batch(&split.train, args.batch_size)?;
    let (d1, d2) = filter_normalized_directions(&params, args.seed);
    let spec = GridSpec {
        a_range: (-args.range, args.range),
        b_range: (-args.range, args.range),
        resolution: args.resolution,
    };
    let grid = loss_surface_grid(
        &task,
        &params,
        &batch,
        &d1,
        &d2,
        &spec,
        args.seed,
        args.batch_seed,
    )?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("surface.csv"), grid.to_csv())?;
    std::fs::write(args.out_dir.join("surface_manifest.txt"), grid.manifest())?;
    println!(
        "{}x{} grid written to {} (base loss {:.6}, {} flagged cells)",
        args.resolution,
        args.resolution,
        args.out_dir.display(),
        grid.base_loss,
        grid.flagged.len()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let rhos = args.rhos.clone().unwrap_or_else(|| DEFAULT_RHO_GRID.to_vec());
    let rows = rho_sweep(&cfg, &rhos)?;
    let mut failures = 0;
    for row in &rows {
        match &row.outcome {
            Ok(report) => println!(
                "rho {:>6}: recall@{} {:.5}  ndcg@{} {:.5}  sharpness {:+.4e}",
                row.rho,
                cfg.k,
                report.overall.recall,
                cfg.k,
                report.overall.ndcg,
                report.sharpness.unwrap_or(f64::NAN),
            ),
            Err(e) => {
                failures += 1;
                println!("rho {:>6}: failed ({e})", row.rho);
            }
        }
    }
    println!("sweep table: {}", cfg.out_dir.join("sweep.csv").display());
    if failures > 0 {
        bail!("{failures} sweep run(s) failed");
    }
    Ok(())
}

fn cmd_multirun(args: &MultirunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let modes: Vec<OptimMode> =
        args.modes.iter().map(|m| m.parse::<OptimMode>()).collect::<gsam_core::Result<_>>()?;
    let report = multirun_stability(&cfg, args.seeds, &modes)?;
    let mut failures = 0;
    for m in &report.per_mode {
        failures += m.failed_runs;
        println!(
            "{:>8}: recall median {:.5}  iqr {:.5}  min {:.5}  max {:.5}  ({} runs, {} failed)",
            m.mode.name(),
            m.recall_median(),
            m.recall_iqr(),
            gsam_core::util::quantile(&m.recalls, 0.0),
            gsam_core::util::quantile(&m.recalls, 1.0),
            m.recalls.len(),
            m.failed_runs,
        );
    }
    println!("raw runs: {}", cfg.out_dir.join("multirun_raw.csv").display());
    println!("summary:  {}", cfg.out_dir.join("multirun_summary.csv").display());
    if failures > 0 {
        bail!("{failures} run(s) failed");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Landscape(args) => cmd_landscape(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Multirun(args) => cmd_multirun(args),
    }
}

//! The training loop: seeded setup, epochs of sampled batches, periodic
//! validation with early stopping, and artifact emission.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::eval::{evaluate_all, sharpness_estimate, EvalReport, SHARPNESS_BATCH_SIZE};
use crate::graph::{
    load_interactions, normalized_adjacency, popularity_groups, split_holdout, SplitData,
    SplitRatios, TripletSampler,
};
use crate::harness::{RunConfig, SHARPNESS_SEED};
use crate::model::{save_checkpoint, BprTask, CheckpointMeta, ParameterSet};
use crate::optim::{train_step, OptimizerState};
use crate::util::fnv1a64_hex;

#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss_before: f64,
    pub mean_loss_after: f64,
    pub mean_delta_norm: f64,
    pub mean_grad_norm: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
}

impl EpochRow {
    pub const CSV_HEADER: &'static str =
        "epoch,steps,loss_before,loss_after,delta_norm,grad_norm,val_recall,val_ndcg";

    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.8}"));
        format!(
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{},{}",
            self.epoch,
            self.steps,
            self.mean_loss_before,
            self.mean_loss_after,
            self.mean_delta_norm,
            self.mean_grad_norm,
            opt(self.val_recall),
            opt(self.val_ndcg),
        )
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub best_params: ParameterSet,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    pub test_report: EvalReport,
    pub epoch_log: Vec<EpochRow>,
    pub checkpoint_hash: String,
    pub config_hash: String,
    /// Steps skipped by the abort guard across the run.
    pub aborted_steps: usize,
}

/// Validation ranking ranks against validation relevants, masking train
/// items only.
fn validation_view(split: &SplitData) -> SplitData {
    SplitData {
        train: split.train.clone(),
        val: crate::graph::InteractionData::new_shard(
            split.train.num_users(),
            split.train.num_items(),
            vec![],
        ),
        test: split.val.clone(),
        seed: split.seed,
        ratios: split.ratios,
        single_interaction_users: split.single_interaction_users,
    }
}

pub fn run_training(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;

    let (data, load_stats) = load_interactions(&config.dataset)?;
    let split = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, config.split_seed)?;
    let adj = normalized_adjacency(&split.train)?;
    let grouping = popularity_groups(&split.train)?;
    let task = BprTask::new(adj.clone(), config.model.clone());

    let mut params = task.init_params(config.init_seed());
    let mut sampler = TripletSampler::new(config.sampler_seed());
    let mut state = OptimizerState::new(config.mode, params.full_support().clone());

    let steps_per_epoch = split.train.num_pairs().div_ceil(config.batch_size);
    let val_split = validation_view(&split);

    let mut best: Option<(f64, usize, ParameterSet)> = None;
    let mut epoch_log: Vec<EpochRow> = Vec::new();
    let mut evals_without_improvement = 0usize;
    let mut aborted_steps = 0usize;

    'training: for epoch in 1..=config.max_epochs {
        let mut consecutive_aborts = 0usize;
        let mut sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut completed = 0usize;
        for _ in 0..steps_per_epoch {
            let batch = sampler.batch(&split.train, config.batch_size)?;
            match train_step(&mut state, &task, &mut params, &batch, &config.sam) {
                Ok(report) => {
                    consecutive_aborts = 0;
                    completed += 1;
                    sums.0 += report.loss_before;
                    sums.1 += report.loss_after;
                    sums.2 += report.delta_norm;
                    sums.3 += report.grad_norm;
                }
                Err(Error::StepAborted(msg)) => {
                    aborted_steps += 1;
                    consecutive_aborts += 1;
                    if consecutive_aborts >= 3 {
                        return Err(Error::RunFailed(format!(
                            "3 consecutive aborted steps at epoch {epoch}: {msg}"
                        )));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        let denom = completed.max(1) as f64;
        let mut row = EpochRow {
            epoch,
            steps: completed,
            mean_loss_before: sums.0 / denom,
            mean_loss_after: sums.1 / denom,
            mean_delta_norm: sums.2 / denom,
            mean_grad_norm: sums.3 / denom,
            val_recall: None,
            val_ndcg: None,
        };

        if epoch % config.eval_every == 0 || epoch == config.max_epochs {
            let report =
                evaluate_all(&params, &config.model, &adj, &val_split, &grouping, config.k)?;
            row.val_recall = Some(report.overall.recall);
            row.val_ndcg = Some(report.overall.ndcg);
            let improved = best.as_ref().is_none_or(|(r, _, _)| report.overall.recall > *r);
            if improved {
                best = Some((report.overall.recall, epoch, params.clone()));
                evals_without_improvement = 0;
            } else {
                evals_without_improvement += 1;
                if evals_without_improvement >= config.patience {
                    epoch_log.push(row);
                    break 'training;
                }
            }
        }
        epoch_log.push(row);
    }

    // no-training and never-evaluated runs report the only checkpoint there is
    let (best_val_recall, best_epoch, best_params) =
        best.unwrap_or((f64::NAN, 0, params.clone()));

    let mut test_report =
        evaluate_all(&best_params, &config.model, &adj, &split, &grouping, config.k)?;
    let (sharp, degen) = sharpness_estimate(
        &task,
        &best_params,
        &split.train,
        config.sharpness_rho,
        SHARPNESS_SEED,
        SHARPNESS_BATCH_SIZE,
    )?;
    test_report.sharpness = Some(sharp);
    test_report.sharpness_degenerate = degen;

    // ── artifacts ────────────────────────────────────────────────
    let ckpt_path = config.out_dir.join("best.ckpt");
    save_checkpoint(
        &ckpt_path,
        &best_params,
        &CheckpointMeta {
            layers: config.model.layers as u64,
            l2_coeff: config.model.l2_coeff,
            seed: config.run_seed,
        },
    )?;
    let checkpoint_hash = fnv1a64_hex(&fs::read(&ckpt_path)?);
    let config_hash = config.config_hash();

    let mut epochs_csv = String::from(EpochRow::CSV_HEADER);
    epochs_csv.push('\n');
    for row in &epoch_log {
        epochs_csv.push_str(&row.to_csv());
        epochs_csv.push('\n');
    }
    fs::write(config.out_dir.join("epochs.csv"), &epochs_csv)?;
    fs::write(config.out_dir.join("report.txt"), test_report.to_kv())?;
    fs::write(
        config.out_dir.join("report.csv"),
        format!("{}\n{}\n", EvalReport::CSV_HEADER, test_report.to_csv_row()),
    )?;
    fs::write(config.out_dir.join("split_manifest.txt"), split.manifest())?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_hash={config_hash}");
    manifest.push_str(&config.canonical());
    let _ = writeln!(manifest, "sharpness_batch_size={SHARPNESS_BATCH_SIZE}");
    let _ = writeln!(manifest, "split_ratio=0.8:0.1:0.1");
    let _ = writeln!(manifest, "split_scope=per-user");
    let _ = writeln!(manifest, "readout_weights=uniform-mean");
    let _ = writeln!(manifest, "popularity_rule=equal-interaction-mass-thirds");
    let _ = writeln!(manifest, "delta_support=batch-touched-rows");
    let _ = writeln!(manifest, "negative_sampling=with-replacement-per-batch");
    let _ = writeln!(manifest, "test_masking=train+val");
    let _ = writeln!(manifest, "val_masking=train");
    let _ = writeln!(manifest, "adam_beta1=0.9");
    let _ = writeln!(manifest, "adam_beta2=0.999");
    let _ = writeln!(manifest, "adam_eps=1e-8");
    let _ = writeln!(manifest, "embedding_init=normal(0,0.1)");
    let _ = writeln!(manifest, "dataset_users={}", data.num_users());
    let _ = writeln!(manifest, "dataset_items={}", data.num_items());
    let _ = writeln!(manifest, "dataset_pairs={}", data.num_pairs());
    let _ = writeln!(manifest, "dataset_duplicates_dropped={}", load_stats.duplicates_dropped);
    let _ = writeln!(manifest, "steps_per_epoch={steps_per_epoch}");
    let _ = writeln!(manifest, "epochs_run={}", epoch_log.len());
    let _ = writeln!(manifest, "aborted_steps={aborted_steps}");
    let _ = writeln!(manifest, "degenerate_perturbations={}", state.degenerate_perturbations);
    let _ = writeln!(manifest, "best_epoch={best_epoch}");
    let _ = writeln!(manifest, "best_val_recall={best_val_recall:.8}");
    let _ = writeln!(manifest, "checkpoint_hash={checkpoint_hash}");
    fs::write(config.out_dir.join("manifest.txt"), &manifest)?;

    Ok(RunArtifacts {
        out_dir: config.out_dir.clone(),
        best_params,
        best_epoch,
        best_val_recall,
        test_report,
        epoch_log,
        checkpoint_hash,
        config_hash,
        aborted_steps,
    })
}

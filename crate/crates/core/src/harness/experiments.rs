//! Experiment drivers: the ρ sweep and the multi-seed stability study.

use std::fmt::Write as _;
use std::fs;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::harness::{run_training, RunConfig};
use crate::optim::OptimMode;
use crate::util::{iqr, median, quantile};

#[derive(Debug)]
pub struct SweepRow {
    pub rho: f64,
    pub outcome: Result<EvalReport>,
}

/// One run per ρ with shared seeds; failures are recorded and the sweep
/// continues. Emits `sweep.csv` sorted by ρ under the base out_dir.
pub fn rho_sweep(base: &RunConfig, rhos: &[f64]) -> Result<Vec<SweepRow>> {
    if rhos.is_empty() || rhos.iter().any(|r| *r <= 0.0) {
        return Err(Error::Precondition("rho list must be nonempty and positive".into()));
    }
    let mut sorted = rhos.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("rho is not NaN"));

    let mut rows = Vec::with_capacity(sorted.len());
    for &rho in &sorted {
        let mut cfg = base.clone();
        cfg.sam.rho = rho;
        cfg.out_dir = base.out_dir.join(format!("rho_{rho}"));
        rows.push(SweepRow { rho, outcome: run_training(&cfg).map(|a| a.test_report) });
    }

    fs::create_dir_all(&base.out_dir)?;
    let mut csv = format!("rho,{}\n", EvalReport::CSV_HEADER);
    for row in &rows {
        match &row.outcome {
            Ok(report) => {
                let _ = writeln!(csv, "{},{}", row.rho, report.to_csv_row());
            }
            Err(e) => {
                let _ = writeln!(csv, "{},failed: {e}", row.rho);
            }
        }
    }
    fs::write(base.out_dir.join("sweep.csv"), csv)?;
    Ok(rows)
}

/// Spread summary of one mode across seeds.
#[derive(Debug, Clone)]
pub struct ModeSummary {
    pub mode: OptimMode,
    pub recalls: Vec<f64>,
    pub ndcgs: Vec<f64>,
    pub sharpness: Vec<f64>,
    pub failed_runs: usize,
}

impl ModeSummary {
    pub fn recall_median(&self) -> f64 {
        median(&self.recalls)
    }

    pub fn recall_iqr(&self) -> f64 {
        iqr(&self.recalls)
    }

    pub fn ndcg_median(&self) -> f64 {
        median(&self.ndcgs)
    }

    pub fn ndcg_iqr(&self) -> f64 {
        iqr(&self.ndcgs)
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{}",
            self.mode.name(),
            self.recalls.len(),
            self.recall_median(),
            self.recall_iqr(),
            quantile(&self.recalls, 0.0),
            quantile(&self.recalls, 1.0),
            self.ndcg_median(),
            self.ndcg_iqr(),
            quantile(&self.ndcgs, 0.0),
            quantile(&self.ndcgs, 1.0),
            self.failed_runs,
        )
    }
}

#[derive(Debug)]
pub struct StabilityReport {
    pub per_mode: Vec<ModeSummary>,
}

/// Run every mode `n_seeds` times, varying only the run seed (init and
/// sampler streams); the split stays fixed. Emits the raw per-run CSV and
/// a summary CSV under the base out_dir.
pub fn multirun_stability(
    base: &RunConfig,
    n_seeds: usize,
    modes: &[OptimMode],
) -> Result<StabilityReport> {
    if n_seeds < 2 {
        return Err(Error::Precondition("stability study needs n_seeds >= 2".into()));
    }
    if modes.is_empty() {
        return Err(Error::Precondition("stability study needs at least one mode".into()));
    }

    fs::create_dir_all(&base.out_dir)?;
    let mut raw = String::from("mode,seed_index,run_seed,recall,ndcg,sharpness\n");
    let mut per_mode = Vec::with_capacity(modes.len());

    for &mode in modes {
        let mut summary = ModeSummary {
            mode,
            recalls: Vec::with_capacity(n_seeds),
            ndcgs: Vec::with_capacity(n_seeds),
            sharpness: Vec::with_capacity(n_seeds),
            failed_runs: 0,
        };
        for i in 0..n_seeds {
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.run_seed = base.run_seed.wrapping_add(i as u64);
            cfg.out_dir = base.out_dir.join(format!("{}_seed{i}", mode.name()));
            match run_training(&cfg) {
                Ok(artifacts) => {
                    let r = artifacts.test_report.overall.recall;
                    let n = artifacts.test_report.overall.ndcg;
                    let s = artifacts.test_report.sharpness.unwrap_or(f64::NAN);
                    let _ = writeln!(
                        raw,
                        "{},{i},{},{r:.8},{n:.8},{s:.10e}",
                        mode.name(),
                        cfg.run_seed
                    );
                    summary.recalls.push(r);
                    summary.ndcgs.push(n);
                    summary.sharpness.push(s);
                }
                Err(e) => {
                    summary.failed_runs += 1;
                    let _ = writeln!(raw, "{},{i},{},failed: {e}", mode.name(), cfg.run_seed);
                }
            }
        }
        if summary.recalls.is_empty() {
            return Err(Error::RunFailed(format!("every {} run failed", mode.name())));
        }
        per_mode.push(summary);
    }

    fs::write(base.out_dir.join("multirun_raw.csv"), &raw)?;
    let mut csv = String::from(
        "mode,runs,recall_median,recall_iqr,recall_min,recall_max,\
         ndcg_median,ndcg_iqr,ndcg_min,ndcg_max,failed\n",
    );
    for m in &per_mode {
        csv.push_str(&m.csv_line());
        csv.push('\n');
    }
    fs::write(base.out_dir.join("multirun_summary.csv"), csv)?;

    Ok(StabilityReport { per_mode })
}

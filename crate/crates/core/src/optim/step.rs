//! One training step for each optimizer mode.

use crate::error::{Error, Result};
use crate::graph::Triplet;
use crate::model::{BprTask, ParameterSet};
use crate::optim::{
    hypergradient, inner_ascent, sam_perturbation, OptimMode, OptimizerState, SamConfig,
};

#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    /// Batch loss at the step's starting point (for gsam, at θ+δ₀).
    pub loss_before: f64,
    /// Batch loss at the updated parameters.
    pub loss_after: f64,
    /// ‖δ‖ used by the sharpness-aware modes; 0 for the baseline.
    pub delta_norm: f64,
    /// Norm of the first-order direction handed to the adaptive rule
    /// (the hypergradient, for gsam).
    pub grad_norm: f64,
    /// The non-finite-update fallback halved the learning rate.
    pub lr_halved: bool,
}

/// Advance θ by one batch. The mode is fixed in `state`:
///
/// - baseline: adaptive step on ∇L(θ);
/// - sam: gradient taken at θ + ρ·∇L/‖∇L‖, applied at θ;
/// - gsam: projected inner ascent, then the implicit hypergradient.
pub fn train_step(
    state: &mut OptimizerState,
    task: &BprTask,
    params: &mut ParameterSet,
    batch: &[Triplet],
    cfg: &SamConfig,
) -> Result<StepReport> {
    let (loss_before, delta_norm, dir) = match state.mode() {
        OptimMode::Baseline => {
            let (loss, g) = task.loss_and_grad(params, batch, None)?;
            (loss, 0.0, g)
        }
        OptimMode::Sam => {
            let (loss, g) = task.loss_and_grad(params, batch, None)?;
            let (delta, degenerate) = sam_perturbation(&g, cfg.rho);
            if degenerate {
                state.degenerate_perturbations += 1;
            }
            let (_, g_perturbed) = task.loss_and_grad(params, batch, Some(&delta))?;
            (loss, delta.norm2(), g_perturbed)
        }
        OptimMode::Gsam => {
            let warm = state.prev_delta.take();
            let (pert, inner) = inner_ascent(task, params, batch, cfg, warm.as_ref())?;
            let (hg, _) = hypergradient(task, params, &pert, batch, cfg)?;
            let norm = pert.norm();
            state.prev_delta = Some(pert.vec);
            (inner.loss_start, norm, hg)
        }
    };

    if !dir.all_finite() {
        return Err(Error::StepAborted("non-finite update direction".into()));
    }
    let grad_norm = dir.norm2();
    let update = state.adam_direction(&dir);

    let mut lr = cfg.eta2;
    let mut lr_halved = false;
    let mut candidate = params.clone();
    candidate.add_scaled(-lr, &update);
    if !candidate.all_finite() {
        // reject, halve the learning rate once, then give up
        lr_halved = true;
        lr *= 0.5;
        candidate = params.clone();
        candidate.add_scaled(-lr, &update);
        if !candidate.all_finite() {
            state.rollback(&dir);
            return Err(Error::StepAborted("non-finite parameters after halved step".into()));
        }
    }
    *params = candidate;

    let (loss_after, _) = task.loss(params, batch, None)?;
    Ok(StepReport { loss_before, loss_after, delta_norm, grad_norm, lr_halved })
}

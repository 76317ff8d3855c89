//! Projected gradient ascent for the inner problem.
//!
//! The inner objective minimizes L_in = −L_bpr over the ball, i.e. ascends
//! the batch loss: δ ← P_ρ[δ + η₁·∇_δ L_bpr(θ+δ)].

use crate::autodiff::FlatVector;
use crate::error::Result;
use crate::graph::Triplet;
use crate::model::{BprTask, ParameterSet};
use crate::optim::{project_ball, Perturbation, SamConfig};

#[derive(Debug, Clone, Copy)]
pub struct InnerAscentReport {
    /// Batch loss at the starting δ.
    pub loss_start: f64,
    /// Batch loss at the returned δ.
    pub loss_end: f64,
    /// The final iterate dipped below an earlier one, so the best iterate
    /// was returned instead.
    pub fell_back_to_best: bool,
}

/// Generic projected ascent over a loss/gradient closure; each call returns
/// the loss and ∇_δ at the queried δ. Returns the final iterate unless it
/// fails the ascent sanity bound, in which case the best-loss iterate comes
/// back (flagged).
pub fn projected_ascent<F>(
    mut loss_grad: F,
    delta0: FlatVector,
    rho: f64,
    eta1: f64,
    steps: usize,
) -> Result<(FlatVector, InnerAscentReport)>
where
    F: FnMut(&FlatVector) -> Result<(f64, FlatVector)>,
{
    let mut delta = project_ball(&delta0, rho);
    let (loss_start, mut grad) = loss_grad(&delta)?;
    let mut best = (loss_start, delta.clone());

    for k in 0..steps {
        let mut next = delta.clone();
        next.axpy(eta1, &grad);
        delta = project_ball(&next, rho);
        if k + 1 < steps {
            let (loss, g) = loss_grad(&delta)?;
            if loss > best.0 {
                best = (loss, delta.clone());
            }
            grad = g;
        }
    }
    let (loss_end, _) = loss_grad(&delta)?;
    if loss_end >= best.0 - 1e-9 {
        let report = InnerAscentReport { loss_start, loss_end, fell_back_to_best: false };
        Ok((delta, report))
    } else {
        let report =
            InnerAscentReport { loss_start, loss_end: best.0, fell_back_to_best: true };
        Ok((best.1, report))
    }
}

/// Inner ascent on a BPR batch. δ spans the batch-touched rows; cold starts
/// use zero, warm starts remap the previous δ onto the new support.
pub fn inner_ascent(
    task: &BprTask,
    params: &ParameterSet,
    batch: &[Triplet],
    cfg: &SamConfig,
    warm: Option<&FlatVector>,
) -> Result<(Perturbation, InnerAscentReport)> {
    let support = task.batch_support(batch);
    let delta0 = match (cfg.warm_start, warm) {
        (true, Some(prev)) => prev.remap(support),
        _ => FlatVector::zeros(support),
    };
    let (vec, report) = projected_ascent(
        |delta| task.grad_delta(params, batch, delta),
        delta0,
        cfg.rho,
        cfg.eta1,
        cfg.inner_steps,
    )?;
    Ok((Perturbation { vec, rho: cfg.rho }, report))
}

//! Empirical sharpness: the loss rise after one scaled-gradient step of
//! radius ρ, on a fixed seeded probe batch so scores compare across
//! checkpoints. The one-step value is an approximation of the worst-case
//! rise; its sign is reported raw.

use crate::autodiff::FlatVector;
use crate::error::Result;
use crate::graph::{InteractionData, TripletSampler};
use crate::model::{BprTask, ParameterSet};
use crate::optim::sam_perturbation;

/// Probe batch size used by checkpoint sharpness scores.
pub const SHARPNESS_BATCH_SIZE: usize = 8192;

/// Generic one-step sharpness: L(θ + ρ·g/‖g‖) − L(θ) given the base loss,
/// its gradient, and a loss-at-offset evaluator. A zero gradient returns
/// (0, degenerate).
pub fn one_step_sharpness<L>(
    base_loss: f64,
    grad: &FlatVector,
    mut loss_at: L,
    rho: f64,
) -> Result<(f64, bool)>
where
    L: FnMut(&FlatVector) -> Result<f64>,
{
    assert!(rho > 0.0, "sharpness radius must be positive");
    let (delta, degenerate) = sam_perturbation(grad, rho);
    if degenerate {
        return Ok((0.0, true));
    }
    let perturbed = loss_at(&delta)?;
    Ok((perturbed - base_loss, false))
}

/// Sharpness of a checkpoint on a fixed seeded batch of BPR triplets.
pub fn sharpness_estimate(
    task: &BprTask,
    params: &ParameterSet,
    train: &InteractionData,
    rho: f64,
    batch_seed: u64,
    batch_size: usize,
) -> Result<(f64, bool)> {
    let batch = TripletSampler::new(batch_seed).batch(train, batch_size)?;
    let (base, grad) = task.loss_and_grad(params, &batch, None)?;
    one_step_sharpness(base, &grad, |delta| Ok(task.loss(params, &batch, Some(delta))?.0), rho)
}

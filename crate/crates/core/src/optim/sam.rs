//! ℓ₂-ball projection and the one-step perturbation.

use crate::autodiff::FlatVector;

/// Norm slack treated as "already on the ball", which also makes the
/// projection exactly idempotent in floating point.
const BALL_EPS: f64 = 1e-12;

/// P_ρ[x] = ρ·x / max{ρ, ‖x‖₂}.
pub fn project_ball(x: &FlatVector, rho: f64) -> FlatVector {
    assert!(rho > 0.0, "projection radius must be positive");
    let n = x.norm2();
    if n <= rho * (1.0 + BALL_EPS) {
        return x.clone();
    }
    x.scaled(rho / n)
}

/// One-step perturbation ρ·g/‖g‖₂. A gradient with norm below 1e-12 yields
/// the zero vector and sets the degenerate flag.
pub fn sam_perturbation(grad: &FlatVector, rho: f64) -> (FlatVector, bool) {
    assert!(rho > 0.0, "perturbation radius must be positive");
    let n = grad.norm2();
    if n < 1e-12 {
        return (FlatVector::zeros(grad.support().clone()), true);
    }
    (grad.scaled(rho / n), false)
}

//! The three training algorithms: first-order baseline, one-step SAM, and
//! the bi-level scheme (projected inner ascent on δ, truncated-Neumann
//! implicit hypergradient on θ).

mod hypergrad;
mod inner;
mod neumann;
mod sam;
mod step;

pub use hypergrad::{hypergradient, implicit_hypergradient, HypergradReport};
pub use inner::{inner_ascent, projected_ascent, InnerAscentReport};
pub use neumann::neumann_apply;
pub use sam::{project_ball, sam_perturbation};
pub use step::{train_step, StepReport};

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::Arc;

use crate::autodiff::{FlatVector, Support};
use crate::error::{Error, Result};

/// The adversarial weight offset δ, confined to the ℓ₂ ball of radius ρ.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub vec: FlatVector,
    pub rho: f64,
}

impl Perturbation {
    pub fn zero(support: Arc<Support>, rho: f64) -> Self {
        Perturbation { vec: FlatVector::zeros(support), rho }
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm2()
    }
}

/// Hyperparameters shared by the sharpness-aware modes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamConfig {
    /// Ball radius ρ.
    pub rho: f64,
    /// Inner (ascent) step size η₁.
    pub eta1: f64,
    /// Outer step size η₂.
    pub eta2: f64,
    /// Inner iteration count T.
    pub inner_steps: usize,
    /// Neumann truncation J.
    pub neumann_terms: usize,
    /// Neumann scaling α; 1 recovers the untempered truncated series.
    pub alpha: f64,
    /// Start the inner ascent from the previous step's δ instead of zero.
    pub warm_start: bool,
}

impl Default for SamConfig {
    fn default() -> Self {
        SamConfig {
            rho: 0.05,
            eta1: 0.01,
            eta2: 1e-3,
            inner_steps: 3,
            neumann_terms: 5,
            alpha: 0.01,
            warm_start: false,
        }
    }
}

impl SamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig("rho must be positive".into()));
        }
        if !(self.eta1 > 0.0) || !(self.eta2 >= 0.0) {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        if self.inner_steps < 1 {
            return Err(Error::InvalidConfig("inner_steps must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("alpha must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimMode {
    Baseline,
    Sam,
    Gsam,
}

impl OptimMode {
    pub const ALL: [OptimMode; 3] = [OptimMode::Baseline, OptimMode::Sam, OptimMode::Gsam];

    pub fn name(&self) -> &'static str {
        match self {
            OptimMode::Baseline => "baseline",
            OptimMode::Sam => "sam",
            OptimMode::Gsam => "gsam",
        }
    }
}

impl FromStr for OptimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(OptimMode::Baseline),
            "sam" => Ok(OptimMode::Sam),
            "gsam" => Ok(OptimMode::Gsam),
            other => Err(Error::InvalidConfig(format!(
                "unknown optimizer mode {other:?} (expected baseline, sam, or gsam)"
            ))),
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-run optimizer state: mode, adaptive-moment accumulators over the
/// parameter support, step counter, and the warm-start carryover. The same
/// adaptive rule serves all three modes so comparisons isolate the
/// sharpness machinery.
#[derive(Debug)]
pub struct OptimizerState {
    mode: OptimMode,
    m: FlatVector,
    v: FlatVector,
    step: u64,
    /// δ from the previous inner ascent, for warm starts.
    pub prev_delta: Option<FlatVector>,
    /// Times a degenerate (near-zero) gradient made the perturbation zero.
    pub degenerate_perturbations: usize,
}

impl OptimizerState {
    pub fn new(mode: OptimMode, support: Arc<Support>) -> Self {
        OptimizerState {
            mode,
            m: FlatVector::zeros(support.clone()),
            v: FlatVector::zeros(support),
            step: 0,
            prev_delta: None,
            degenerate_perturbations: 0,
        }
    }

    pub fn mode(&self) -> OptimMode {
        self.mode
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One adaptive step: fold `dir` into the moment accumulators and
    /// return the increment u, so that θ ← θ − lr·u.
    pub fn adam_direction(&mut self, dir: &FlatVector) -> FlatVector {
        assert!(
            self.m.support().same_as(dir.support()),
            "accumulator support does not match update support"
        );
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let mut out = FlatVector::zeros(dir.support().clone());
        for k in 0..dir.values().len() {
            let g = dir.values()[k];
            let m = ADAM_BETA1 * self.m.values()[k] + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * self.v.values()[k] + (1.0 - ADAM_BETA2) * g * g;
            self.m.values_mut()[k] = m;
            self.v.values_mut()[k] = v;
            out.values_mut()[k] = (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
        }
        out
    }

    /// Roll the accumulators back one step (used when a step is rejected).
    pub(crate) fn rollback(&mut self, dir: &FlatVector) {
        assert!(self.step > 0);
        for k in 0..dir.values().len() {
            let g = dir.values()[k];
            self.m.values_mut()[k] = (self.m.values()[k] - (1.0 - ADAM_BETA1) * g) / ADAM_BETA1;
            self.v.values_mut()[k] = (self.v.values()[k] - (1.0 - ADAM_BETA2) * g * g) / ADAM_BETA2;
        }
        self.step -= 1;
    }
}

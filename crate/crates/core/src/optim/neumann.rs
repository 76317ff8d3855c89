//! Truncated Neumann series application.

use crate::autodiff::FlatVector;
use crate::error::{Error, Result};

/// Apply the truncated series α·Σ_{j=0}^{J} (I − αH)ʲ v against a
/// matrix-free H·v oracle: p₀ = v, p_{j+1} = p_j − α·H·p_j, result
/// α·Σ p_j. With α = 1 this is the untempered truncated expansion of H⁻¹v.
///
/// H need not make the series converge; growth beyond 1e6× the input norm
/// is reported as divergence with the advice to shrink α.
pub fn neumann_apply<F>(mut hvp: F, v: &FlatVector, terms: usize, alpha: f64) -> Result<FlatVector>
where
    F: FnMut(&FlatVector) -> Result<FlatVector>,
{
    assert!(alpha > 0.0, "alpha must be positive");
    let v_norm = v.norm2();
    let mut p = v.clone();
    let mut acc = v.clone();
    for _ in 0..terms {
        let hp = hvp(&p)?;
        p.axpy(-alpha, &hp);
        let growth = p.norm2() / v_norm.max(f64::MIN_POSITIVE);
        if growth > 1e6 {
            return Err(Error::NeumannDiverged { growth });
        }
        acc.axpy(1.0, &p);
    }
    Ok(acc.scaled(alpha))
}

//! 2-D loss-surface slices.
//!
//! Two random directions are drawn, rescaled per embedding row to match
//! that row's norm in θ (the embedding-table analogue of filter
//! normalization), and the batch loss is evaluated on a grid of offsets
//! a·d₁ + b·d₂. The grid's center is the unperturbed loss, bit-exact.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{evaluate, FlatVector};
use crate::error::{Error, Result};
use crate::graph::Triplet;
use crate::model::{BprTask, ParameterSet};
use crate::util::fnv1a64_hex;

/// Loss values over [a_min, a_max] × [b_min, b_max].
#[derive(Debug, Clone)]
pub struct SurfaceGrid {
    pub a_coords: Vec<f64>,
    pub b_coords: Vec<f64>,
    /// Row-major: `values[bi][ai]`; flagged cells hold NaN.
    pub values: Vec<Vec<f64>>,
    /// Cells whose evaluation overflowed, as (bi, ai).
    pub flagged: Vec<(usize, usize)>,
    pub base_loss: f64,
    pub direction_seed: u64,
    pub batch_seed: u64,
    pub checkpoint_hash: String,
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { a_range: (-1.0, 1.0), b_range: (-1.0, 1.0), resolution: 25 }
    }
}

/// Two filter-normalized random directions over the full parameter table.
/// Rows of θ with norm below 1e-12 get zero direction rows; d₂ is
/// Gram-Schmidt-orthogonalized against d₁ over the whole vector.
pub fn filter_normalized_directions(params: &ParameterSet, seed: u64) -> (FlatVector, FlatVector) {
    let support = params.full_support().clone();
    let d = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |params: &ParameterSet| {
        let mut v = FlatVector::zeros(support.clone());
        for r in 0..params.num_rows() {
            let row_norm: f64 = params.row(r as u32).iter().map(|x| x * x).sum::<f64>().sqrt();
            let raw: Vec<f64> =
                (0..d).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
            if row_norm < 1e-12 {
                continue; // leave the row at zero
            }
            let raw_norm: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if raw_norm > 0.0 { row_norm / raw_norm } else { 0.0 };
            for (k, x) in raw.iter().enumerate() {
                v.values_mut()[r * d + k] = x * scale;
            }
        }
        v
    };
    let d1 = draw(params);
    let mut d2 = draw(params);
    let denom = d1.dot(&d1);
    if denom > 0.0 {
        let coeff = d1.dot(&d2) / denom;
        d2.axpy(-coeff, &d1);
    }
    (d1, d2)
}

/// Evaluate the batch loss over the offset grid. The resolution must be
/// odd and at least 3 so (0, 0) lands on a grid point; a cell whose
/// evaluation overflows is flagged and the grid is still produced.
pub fn loss_surface_grid(
    task: &BprTask,
    params: &ParameterSet,
    batch: &[Triplet],
    d1: &FlatVector,
    d2: &FlatVector,
    spec: &GridSpec,
    direction_seed: u64,
    batch_seed: u64,
) -> Result<SurfaceGrid> {
    if spec.resolution < 3 || spec.resolution % 2 == 0 {
        return Err(Error::Precondition(format!(
            "grid resolution must be odd and >= 3, got {}",
            spec.resolution
        )));
    }
    let coords = |range: (f64, f64)| -> Vec<f64> {
        let n = spec.resolution;
        let step = (range.1 - range.0) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let x = range.0 + i as f64 * step;
                // snap numerical zero so the center stays bit-exact
                if x.abs() < step * 1e-9 {
                    0.0
                } else {
                    x
                }
            })
            .collect()
    };
    let a_coords = coords(spec.a_range);
    let b_coords = coords(spec.b_range);

    let program = task.loss_program(batch, true)?;
    let support = params.full_support().clone();
    let mut values = vec![vec![f64::NAN; a_coords.len()]; b_coords.len()];
    let mut flagged = Vec::new();
    let mut base_loss = f64::NAN;

    for (bi, &b) in b_coords.iter().enumerate() {
        for (ai, &a) in a_coords.iter().enumerate() {
            let mut offset = FlatVector::zeros(support.clone());
            offset.axpy(a, d1);
            offset.axpy(b, d2);
            match evaluate(&program, params.view(), Some(&offset)) {
                Ok((loss, _)) => {
                    values[bi][ai] = loss;
                    if a == 0.0 && b == 0.0 {
                        base_loss = loss;
                    }
                }
                Err(Error::NumericOverflow { .. }) => flagged.push((bi, ai)),
                Err(e) => return Err(e),
            }
        }
    }

    let hash = {
        let mut bytes = Vec::with_capacity(params.data().len() * 8);
        for v in params.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fnv1a64_hex(&bytes)
    };
    Ok(SurfaceGrid {
        a_coords,
        b_coords,
        values,
        flagged,
        base_loss,
        direction_seed,
        batch_seed,
        checkpoint_hash: hash,
    })
}

impl SurfaceGrid {
    /// CSV: header row carries the a-coordinates, first column the
    /// b-coordinates, body the loss values (flagged cells are empty).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("b\\a");
        for a in &self.a_coords {
            let _ = write!(s, ",{a}");
        }
        s.push('\n');
        for (bi, b) in self.b_coords.iter().enumerate() {
            let _ = write!(s, "{b}");
            for ai in 0..self.a_coords.len() {
                let v = self.values[bi][ai];
                if v.is_nan() {
                    s.push(',');
                } else {
                    let _ = write!(s, ",{v:.12e}");
                }
            }
            s.push('\n');
        }
        s
    }

    /// Sidecar manifest for the grid file.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "direction_seed={}", self.direction_seed);
        let _ = writeln!(s, "batch_seed={}", self.batch_seed);
        let _ = writeln!(s, "checkpoint_hash={}", self.checkpoint_hash);
        let _ = writeln!(s, "resolution={}", self.a_coords.len());
        let _ = writeln!(s, "a_min={}", self.a_coords.first().unwrap());
        let _ = writeln!(s, "a_max={}", self.a_coords.last().unwrap());
        let _ = writeln!(s, "b_min={}", self.b_coords.first().unwrap());
        let _ = writeln!(s, "b_max={}", self.b_coords.last().unwrap());
        let _ = writeln!(s, "base_loss={:.17e}", self.base_loss);
        let _ = writeln!(s, "flagged_cells={}", self.flagged.len());
        s
    }
}

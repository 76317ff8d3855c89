//! LightGCN-style model: layered propagation over the normalized
//! adjacency, mean readout, inner-product scoring, and the BPR training
//! loss, all expressed as autodiff programs.

mod checkpoint;
mod lightgcn;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use lightgcn::{final_embeddings, propagate, readout_and_score, BprTask};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::autodiff::{FlatVector, Support, TableView};
use crate::error::{Error, Result};

/// Readout combining the per-layer embeddings into the final one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Uniform mean over layers 0..=L.
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Propagation depth L; 0 degenerates to matrix factorization.
    pub layers: usize,
    /// Embedding width d.
    pub dim: usize,
    pub readout: Readout,
    /// L2 coefficient λ on the batch-touched embedding rows; 0 disables.
    pub l2_coeff: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
        }
        if self.l2_coeff < 0.0 {
            return Err(Error::InvalidConfig("l2_coeff must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { layers: 3, dim: 64, readout: Readout::Mean, l2_coeff: 1e-4 }
    }
}

/// The model weights θ: one embedding table covering all user and item
/// nodes (users first, then items).
#[derive(Debug, Clone)]
pub struct ParameterSet {
    num_rows: usize,
    dim: usize,
    data: Vec<f64>,
    full_support: Arc<Support>,
}

impl PartialEq for ParameterSet {
    fn eq(&self, other: &Self) -> bool {
        self.num_rows == other.num_rows && self.dim == other.dim && self.data == other.data
    }
}

impl ParameterSet {
    pub fn zeros(num_rows: usize, dim: usize) -> Self {
        ParameterSet {
            num_rows,
            dim,
            data: vec![0.0; num_rows * dim],
            full_support: Support::full(num_rows, dim),
        }
    }

    /// Seeded i.i.d. normal init, mean 0, std 0.1.
    pub fn init_normal(num_rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let data = (0..num_rows * dim).map(|_| normal.sample(&mut rng)).collect();
        ParameterSet { num_rows, dim, data, full_support: Support::full(num_rows, dim) }
    }

    pub fn from_data(num_rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), num_rows * dim);
        ParameterSet { num_rows, dim, data, full_support: Support::full(num_rows, dim) }
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn view(&self) -> TableView<'_> {
        TableView::new(self.num_rows, self.dim, &self.data)
    }

    /// Support spanning every row of the table.
    pub fn full_support(&self) -> &Arc<Support> {
        &self.full_support
    }

    pub fn row(&self, r: u32) -> &[f64] {
        &self.data[r as usize * self.dim..(r as usize + 1) * self.dim]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `θ += c · v` over v's support rows.
    pub fn add_scaled(&mut self, c: f64, v: &FlatVector) {
        let d = v.support().dim();
        assert_eq!(d, self.dim, "offset dim mismatch");
        for (k, &row) in v.support().rows().iter().enumerate() {
            let dst = &mut self.data[row as usize * d..(row as usize + 1) * d];
            let src = &v.values()[k * d..(k + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += c * s;
            }
        }
    }
}

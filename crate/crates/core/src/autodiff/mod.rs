//! Reverse-mode automatic differentiation over a restricted op set.
//!
//! Programs are straight-line descriptions built from the ten supported
//! operations (row gather, sparse×dense product, scale, add, multiply,
//! row-wise dot, sigmoid, natural log, negation, sum-reduce). Evaluating a
//! program against bound parameters records a [`Tape`]; the backward pass
//! extends the same tape with adjoint nodes, so differentiating twice
//! (reverse-over-reverse) is ordinary tape evaluation. Two derivative
//! companions, reciprocal (the derivative of log) and scatter (the
//! derivative of gather), appear only in the extension, never in user
//! programs.
//!
//! Everything is 64-bit; second-order quantities are too fragile against
//! finite-difference oracles at single precision.

pub mod dense;
mod program;
mod tape;

pub use program::{Program, ProgramBuilder, VarId};
pub use tape::{
    evaluate, gradient, gradient_delta, hvp, mixed_vhp, HvpOracle, ParamSlot, Tape, TableView,
};

use std::collections::HashMap;
use std::sync::Arc;

/// An ordered set of parameter rows (plus the per-row width) that a
/// [`FlatVector`] spans.
#[derive(Debug)]
pub struct Support {
    rows: Vec<u32>,
    dim: usize,
    index: HashMap<u32, u32>,
}

impl Support {
    pub fn new(rows: Vec<u32>, dim: usize) -> Arc<Self> {
        assert!(dim >= 1, "support dim must be >= 1");
        let index = rows.iter().enumerate().map(|(i, &r)| (r, i as u32)).collect();
        let s = Support { rows, dim, index };
        assert_eq!(s.index.len(), s.rows.len(), "duplicate rows in support");
        Arc::new(s)
    }

    /// Support over the contiguous rows `0..n`.
    pub fn full(n: usize, dim: usize) -> Arc<Self> {
        Self::new((0..n as u32).collect(), dim)
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Total coordinate count.
    pub fn len(&self) -> usize {
        self.rows.len() * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: u32) -> bool {
        self.index.contains_key(&row)
    }

    pub fn position(&self, row: u32) -> Option<usize> {
        self.index.get(&row).map(|&i| i as usize)
    }

    pub fn same_as(&self, other: &Support) -> bool {
        self.dim == other.dim && self.rows == other.rows
    }
}

/// A dense coordinate vector over a declared parameter support. Houses
/// gradients, perturbations, and every vector the implicit-differentiation
/// machinery passes around.
#[derive(Debug, Clone)]
pub struct FlatVector {
    support: Arc<Support>,
    values: Vec<f64>,
}

impl FlatVector {
    pub fn zeros(support: Arc<Support>) -> Self {
        let n = support.len();
        FlatVector { support, values: vec![0.0; n] }
    }

    pub fn from_values(support: Arc<Support>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), support.len(), "value length must match support");
        FlatVector { support, values }
    }

    pub fn support(&self) -> &Arc<Support> {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// The coordinate block of one parameter row, if the row is in support.
    pub fn row_block(&self, row: u32) -> Option<&[f64]> {
        let d = self.support.dim;
        self.support.position(row).map(|i| &self.values[i * d..(i + 1) * d])
    }

    fn check_compatible(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.support, &other.support) || self.support.same_as(&other.support),
            "flat vectors over different supports are not combinable"
        );
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.check_compatible(other);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(c);
        out
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        self.check_compatible(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Copy shared rows into a vector over a new support; rows absent from
    /// `self` become zero. Used when a warm-started perturbation moves to
    /// the next batch's support.
    pub fn remap(&self, support: Arc<Support>) -> Self {
        assert_eq!(self.support.dim, support.dim, "remap dim mismatch");
        let mut out = FlatVector::zeros(support);
        let d = out.support.dim;
        for (i, &row) in out.support.rows.iter().enumerate() {
            if let Some(src) = self.row_block(row) {
                out.values[i * d..(i + 1) * d].copy_from_slice(src);
            }
        }
        out
    }
}

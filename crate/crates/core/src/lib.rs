//! Graph collaborative filtering with sharpness-aware training.
//!
//! The crate trains LightGCN-style recommenders with three interchangeable
//! optimizers (a first-order baseline, one-step SAM, and gSAM: bi-level
//! sharpness-aware minimization with truncated-Neumann implicit
//! hypergradients) and measures the flatness, ranking quality, and
//! run-to-run stability of the minima they reach.
//!
//! Layering, bottom up:
//!
//! - [`autodiff`]: a small reverse-mode tape over a closed, twice
//!   differentiable op set (gradients, Hessian-vector products, mixed
//!   second-order products).
//! - [`graph`]: interaction loading, holdout splits, normalized adjacency,
//!   BPR triplet sampling, item popularity groups.
//! - [`model`]: LightGCN propagation, mean readout, inner-product scoring,
//!   and the BPR loss expressed as autodiff programs.
//! - [`optim`]: the three training algorithms and their shared state.
//! - [`eval`]: all-ranking Recall@k / NDCG@k, popularity breakdowns, and a
//!   one-step sharpness estimate.
//! - [`landscape`]: 2-D loss-surface slices along filter-normalized random
//!   directions.
//! - [`harness`]: run configuration, the training loop with early stopping,
//!   and the sweep / multi-seed experiment drivers.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod graph;
pub mod harness;
pub mod landscape;
pub mod model;
pub mod optim;
pub mod sparse;
pub mod util;

pub use error::{Error, Result};

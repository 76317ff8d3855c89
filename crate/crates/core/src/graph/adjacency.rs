//! Symmetrically normalized bipartite adjacency.
//!
//! Node ids: users occupy `0..num_users`, items `num_users..num_users+num_items`.
//! Each train edge (u, i) contributes the two entries
//! `Â[u, i'] = Â[i', u] = 1/√(d_u·d_i)` where the degrees are train degrees.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::InteractionData;
use crate::sparse::Csr;

#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    matrix: Arc<Csr>,
    num_users: usize,
    num_items: usize,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<Csr> {
        &self.matrix
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Total node count (users + items).
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Global node id of an item.
    pub fn item_node(&self, item: u32) -> u32 {
        self.num_users as u32 + item
    }
}

pub fn normalized_adjacency(train: &InteractionData) -> Result<NormalizedAdjacency> {
    if train.num_pairs() == 0 {
        return Err(Error::EmptyDataset("train shard has no pairs".into()));
    }
    let nu = train.num_users();
    let ni = train.num_items();
    let item_deg = train.item_degrees();
    // computed as D^{-1/2}·A·D^{-1/2}: per-node inverse square roots, then
    // products, matching the dense formulation bit for bit
    let inv_user: Vec<f64> =
        (0..nu as u32).map(|u| 1.0 / (train.user_degree(u) as f64).sqrt()).collect();
    let inv_item: Vec<f64> = item_deg.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    let mut entries = Vec::with_capacity(train.num_pairs() * 2);
    for &(u, i) in train.pairs() {
        let w = inv_user[u as usize] * inv_item[i as usize];
        let item_node = (nu as u32) + i;
        entries.push((u, item_node, w));
        entries.push((item_node, u, w));
    }
    let matrix = Csr::from_coo(nu + ni, nu + ni, entries);
    Ok(NormalizedAdjacency { matrix: Arc::new(matrix), num_users: nu, num_items: ni })
}

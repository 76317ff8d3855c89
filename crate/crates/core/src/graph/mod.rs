//! Interaction data: loading, splitting, adjacency, sampling, popularity.

mod adjacency;
mod load;
mod popularity;
mod sample;
mod split;

pub use adjacency::{normalized_adjacency, NormalizedAdjacency};
pub use load::{load_interactions, parse_interactions, LoadStats};
pub use popularity::{popularity_groups, PopularityGroup, PopularityGrouping};
pub use sample::{sample_triplets, Triplet, TripletSampler};
pub use split::{split_holdout, SplitData, SplitRatios};

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Observed user-item interactions over dense id spaces, with per-user
/// adjacency lists.
#[derive(Debug, Clone)]
pub struct InteractionData {
    num_users: usize,
    num_items: usize,
    /// (user, item) pairs, deduplicated, sorted by (user, item).
    pairs: Vec<(u32, u32)>,
    /// Per-user sorted item lists over the same id space as `pairs`.
    user_items: Vec<Vec<u32>>,
}

impl InteractionData {
    /// Build from pairs over already-dense id spaces. Duplicates are
    /// rejected; every user and item must appear at least once.
    pub fn new(num_users: usize, num_items: usize, mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset("no interaction pairs".into()));
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Precondition("duplicate interaction pair".into()));
        }
        let mut user_items = vec![Vec::new(); num_users];
        let mut item_seen = vec![false; num_items];
        for &(u, i) in &pairs {
            if (u as usize) >= num_users || (i as usize) >= num_items {
                return Err(Error::Precondition(format!("pair ({u}, {i}) out of id range")));
            }
            user_items[u as usize].push(i);
            item_seen[i as usize] = true;
        }
        if user_items.iter().any(|v| v.is_empty()) {
            return Err(Error::Precondition("user with no interactions".into()));
        }
        if item_seen.iter().any(|s| !s) {
            return Err(Error::Precondition("item with no interactions".into()));
        }
        Ok(InteractionData { num_users, num_items, pairs, user_items })
    }

    /// As [`new`](Self::new) but allowing users or items with no pairs;
    /// split shards share the source id spaces and are individually sparse.
    pub(crate) fn new_shard(num_users: usize, num_items: usize, mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        let mut user_items = vec![Vec::new(); num_users];
        for &(u, i) in &pairs {
            user_items[u as usize].push(i);
        }
        InteractionData { num_users, num_items, pairs, user_items }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Items of one user, ascending.
    pub fn items_of(&self, user: u32) -> &[u32] {
        &self.user_items[user as usize]
    }

    pub fn user_degree(&self, user: u32) -> usize {
        self.user_items[user as usize].len()
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.user_items[user as usize].binary_search(&item).is_ok()
    }

    /// Degree of every item under these pairs.
    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_items];
        for &(_, i) in &self.pairs {
            deg[i as usize] += 1;
        }
        deg
    }

    /// Users with at least one pair, ascending.
    pub fn active_users(&self) -> Vec<u32> {
        (0..self.num_users as u32).filter(|&u| !self.items_of(u).is_empty()).collect()
    }

    pub fn item_set_of(&self, user: u32) -> BTreeSet<u32> {
        self.items_of(user).iter().copied().collect()
    }
}

//! Seeded synthetic datasets for tests and trend experiments.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::InteractionData;

/// Power-law interaction generator: item popularity follows a Zipf-like
/// curve, user activity a milder power curve, and each user prefers the
/// items of one latent cluster. Items that end up with no interactions are
/// compacted away, so counts are approximate.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawSpec {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub target_pairs: usize,
    /// Zipf exponent on item popularity.
    pub zipf_exponent: f64,
    /// Multiplier on in-cluster item weight.
    pub affinity: f64,
    pub min_per_user: usize,
    pub seed: u64,
}

impl Default for PowerLawSpec {
    fn default() -> Self {
        PowerLawSpec {
            users: 1000,
            items: 2000,
            clusters: 20,
            target_pairs: 50_000,
            zipf_exponent: 1.0,
            affinity: 8.0,
            min_per_user: 5,
            seed: 7,
        }
    }
}

pub fn powerlaw_dataset(spec: &PowerLawSpec) -> InteractionData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.clusters.max(1);

    // per-cluster cumulative item weights: zipf base times in-cluster boost
    let mut cum: Vec<Vec<f64>> = Vec::with_capacity(c);
    for cluster in 0..c {
        let mut acc = 0.0;
        let mut v = Vec::with_capacity(spec.items);
        for i in 0..spec.items {
            let base = 1.0 / ((i + 1) as f64).powf(spec.zipf_exponent);
            let boost = if i % c == cluster { spec.affinity } else { 1.0 };
            acc += base * boost;
            v.push(acc);
        }
        cum.push(v);
    }

    // user activity ∝ (u+1)^{-0.3}, scaled to the pair budget
    let raw: Vec<f64> = (0..spec.users).map(|u| 1.0 / ((u + 1) as f64).powf(0.3)).collect();
    let raw_sum: f64 = raw.iter().sum();
    let cap = spec.items / 4;

    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(spec.target_pairs + spec.users);
    for u in 0..spec.users {
        let cluster = u % c;
        let want = ((raw[u] / raw_sum) * spec.target_pairs as f64).round() as usize;
        let want = want.clamp(spec.min_per_user, cap.max(spec.min_per_user));
        let table = &cum[cluster];
        let total = *table.last().unwrap();
        let mut chosen: BTreeSet<u32> = BTreeSet::new();
        let mut attempts = 0usize;
        while chosen.len() < want && attempts < want * 60 {
            attempts += 1;
            let x: f64 = rng.random_range(0.0..total);
            let idx = table.partition_point(|&t| t <= x);
            chosen.insert(idx.min(spec.items - 1) as u32);
        }
        for i in chosen {
            pairs.push((u as u32, i));
        }
    }

    compact(spec.users, pairs)
}

/// Block dataset: `clusters` disjoint item blocks; every user interacts
/// with every item of their own block and nothing else. A model only has
/// to recover the block structure, so ranking quality saturates quickly.
pub fn separable_dataset(clusters: usize, users_per_cluster: usize, items_per_cluster: usize) -> InteractionData {
    let users = clusters * users_per_cluster;
    let mut pairs = Vec::with_capacity(users * items_per_cluster);
    for u in 0..users {
        let cluster = u / users_per_cluster;
        for j in 0..items_per_cluster {
            pairs.push((u as u32, (cluster * items_per_cluster + j) as u32));
        }
    }
    compact(users, pairs)
}

/// Drop empty items, remap densely, and build the dataset.
fn compact(num_users: usize, pairs: Vec<(u32, u32)>) -> InteractionData {
    let mut max_item = 0u32;
    for &(_, i) in &pairs {
        max_item = max_item.max(i);
    }
    let mut seen = vec![false; max_item as usize + 1];
    for &(_, i) in &pairs {
        seen[i as usize] = true;
    }
    let mut remap = vec![u32::MAX; max_item as usize + 1];
    let mut next = 0u32;
    for (i, &s) in seen.iter().enumerate() {
        if s {
            remap[i] = next;
            next += 1;
        }
    }
    let remapped: Vec<(u32, u32)> =
        pairs.into_iter().map(|(u, i)| (u, remap[i as usize])).collect();
    InteractionData::new(num_users, next as usize, remapped)
        .expect("synthetic generator covers every user and item")
}

/// Write in the interaction-list format: one user per line, dense ids.
pub fn write_interactions_file(data: &InteractionData, path: &Path) -> Result<()> {
    let mut out = String::new();
    for u in 0..data.num_users() as u32 {
        let items = data.items_of(u);
        if items.is_empty() {
            continue;
        }
        let _ = write!(out, "{u}");
        for &i in items {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

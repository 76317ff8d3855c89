//! BPR triplet sampling.
//!
//! A triplet draws (u, i) uniformly over train pairs and j uniformly over
//! the items the user has not interacted with, by rejection. Sampling is
//! with replacement and resampled every batch.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::InteractionData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

/// Owns its RNG; one sampler per training run.
#[derive(Debug)]
pub struct TripletSampler {
    rng: ChaCha8Rng,
    /// Pairs skipped because the user interacts with every item.
    pub saturated_user_skips: usize,
}

impl TripletSampler {
    pub fn new(seed: u64) -> Self {
        TripletSampler { rng: ChaCha8Rng::seed_from_u64(seed), saturated_user_skips: 0 }
    }

    pub fn batch(&mut self, train: &InteractionData, batch_size: usize) -> Result<Vec<Triplet>> {
        if batch_size == 0 {
            return Err(Error::Precondition("batch_size must be >= 1".into()));
        }
        if train.num_pairs() == 0 {
            return Err(Error::EmptyDataset("cannot sample from empty train shard".into()));
        }
        let n_items = train.num_items() as u32;
        let mut out = Vec::with_capacity(batch_size);
        let mut guard = 0usize;
        while out.len() < batch_size {
            let (u, i) = train.pairs()[self.rng.random_range(0..train.num_pairs())];
            if train.user_degree(u) >= n_items as usize {
                // no negative exists for this user
                self.saturated_user_skips += 1;
                guard += 1;
                if guard > batch_size.saturating_mul(100) {
                    return Err(Error::Precondition(
                        "every sampled user interacts with all items".into(),
                    ));
                }
                continue;
            }
            let j = loop {
                let cand = self.rng.random_range(0..n_items);
                if !train.contains(u, cand) {
                    break cand;
                }
            };
            out.push(Triplet { user: u, pos: i, neg: j });
        }
        Ok(out)
    }
}

/// One-shot convenience over a fresh sampler.
pub fn sample_triplets(train: &InteractionData, batch_size: usize, seed: u64) -> Result<Vec<Triplet>> {
    TripletSampler::new(seed).batch(train, batch_size)
}

//! Per-user holdout splitting.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::InteractionData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const EIGHT_ONE_ONE: SplitRatios = SplitRatios { train: 0.8, val: 0.1, test: 0.1 };

    fn validate(&self) -> Result<()> {
        let sum = self.train + self.val + self.test;
        if self.train <= 0.0 || self.val <= 0.0 || self.test <= 0.0 {
            return Err(Error::Precondition("split ratios must be positive".into()));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Train/validation/test shards over shared id spaces.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: InteractionData,
    pub val: InteractionData,
    pub test: InteractionData,
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Users whose single interaction forced an all-train assignment.
    pub single_interaction_users: usize,
}

impl SplitData {
    /// Split manifest: seed, ratios, and per-shard counts, one `key=value`
    /// per line.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split_seed={}", self.seed);
        let _ = writeln!(
            s,
            "split_ratios={}:{}:{}",
            self.ratios.train, self.ratios.val, self.ratios.test
        );
        let _ = writeln!(s, "num_users={}", self.train.num_users());
        let _ = writeln!(s, "num_items={}", self.train.num_items());
        let _ = writeln!(s, "train_pairs={}", self.train.num_pairs());
        let _ = writeln!(s, "val_pairs={}", self.val.num_pairs());
        let _ = writeln!(s, "test_pairs={}", self.test.num_pairs());
        let _ = writeln!(s, "single_interaction_users={}", self.single_interaction_users);
        s
    }
}

/// Shuffle each user's interactions with a seeded RNG and partition them
/// train/val/test by rounding the ratio counts, train taking remainders.
/// A user with one interaction sends it to train.
pub fn split_holdout(data: &InteractionData, ratios: SplitRatios, seed: u64) -> Result<SplitData> {
    ratios.validate()?;
    let mut train = Vec::with_capacity(data.num_pairs());
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut singles = 0usize;

    for u in 0..data.num_users() as u32 {
        let items = data.items_of(u);
        if items.is_empty() {
            continue;
        }
        if items.len() == 1 {
            singles += 1;
            train.push((u, items[0]));
            continue;
        }
        let mut shuffled = items.to_vec();
        // independent per-user stream so the assignment of one user never
        // depends on how many draws earlier users consumed
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        shuffled.shuffle(&mut rng);

        let n = shuffled.len();
        let mut n_val = ((n as f64) * ratios.val).round() as usize;
        let mut n_test = ((n as f64) * ratios.test).round() as usize;
        // train keeps the remainder and never drops to zero for n >= 2
        while n_val + n_test >= n {
            if n_val >= n_test && n_val > 0 {
                n_val -= 1;
            } else if n_test > 0 {
                n_test -= 1;
            } else {
                break;
            }
        }
        let n_train = n - n_val - n_test;
        for (k, &item) in shuffled.iter().enumerate() {
            if k < n_train {
                train.push((u, item));
            } else if k < n_train + n_val {
                val.push((u, item));
            } else {
                test.push((u, item));
            }
        }
    }

    Ok(SplitData {
        train: InteractionData::new_shard(data.num_users(), data.num_items(), train),
        val: InteractionData::new_shard(data.num_users(), data.num_items(), val),
        test: InteractionData::new_shard(data.num_users(), data.num_items(), test),
        seed,
        ratios,
        single_interaction_users: singles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ladder(num_users: usize, per_user: usize) -> InteractionData {
        let mut pairs = Vec::new();
        for u in 0..num_users as u32 {
            for i in 0..per_user as u32 {
                pairs.push((u, i));
            }
        }
        InteractionData::new(num_users, per_user, pairs).unwrap()
    }

    #[test]
    fn ten_interactions_split_8_1_1() {
        let data = ladder(4, 10);
        let s = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, 7).unwrap();
        for u in 0..4u32 {
            assert_eq!(s.train.user_degree(u), 8);
            assert_eq!(s.val.user_degree(u), 1);
            assert_eq!(s.test.user_degree(u), 1);
        }
    }

    #[test]
    fn single_interaction_goes_to_train() {
        let data = InteractionData::new(2, 2, vec![(0, 0), (1, 0), (1, 1)]).unwrap();
        let s = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, 1).unwrap();
        assert_eq!(s.train.user_degree(0), 1);
        assert_eq!(s.val.user_degree(0) + s.test.user_degree(0), 0);
        assert_eq!(s.single_interaction_users, 1);
    }

    #[test]
    fn train_nonempty_whenever_user_has_two() {
        // adversarial ratios that round val and test up
        let data = ladder(3, 2);
        let r = SplitRatios { train: 0.34, val: 0.33, test: 0.33 };
        let s = split_holdout(&data, r, 3).unwrap();
        for u in 0..3u32 {
            assert!(s.train.user_degree(u) >= 1);
        }
    }

    #[test]
    fn disjoint_and_union_identity_for_every_seed() {
        let data = ladder(6, 9);
        for seed in 0..20u64 {
            let s = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, seed).unwrap();
            let mut all: BTreeSet<(u32, u32)> = BTreeSet::new();
            let total = s.train.num_pairs() + s.val.num_pairs() + s.test.num_pairs();
            for shard in [&s.train, &s.val, &s.test] {
                for &p in shard.pairs() {
                    assert!(all.insert(p), "pair {p:?} in two shards (seed {seed})");
                }
            }
            assert_eq!(total, data.num_pairs());
            assert_eq!(all.len(), data.num_pairs());
        }
    }

    #[test]
    fn deterministic_per_seed_and_sensitive_to_seed() {
        let data = ladder(5, 100);
        let a = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, 42).unwrap();
        let b = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, 42).unwrap();
        assert_eq!(a.train.pairs(), b.train.pairs());
        assert_eq!(a.val.pairs(), b.val.pairs());
        assert_eq!(a.test.pairs(), b.test.pairs());

        let c = split_holdout(&data, SplitRatios::EIGHT_ONE_ONE, 43).unwrap();
        assert_ne!(a.val.pairs(), c.val.pairs(), "different seeds gave identical val sets");
    }

    #[test]
    fn bad_ratios_rejected() {
        let data = ladder(1, 3);
        let r = SplitRatios { train: 0.9, val: 0.2, test: 0.1 };
        assert!(split_holdout(&data, r, 0).is_err());
        let r2 = SplitRatios { train: 1.0, val: 0.0, test: 0.0 };
        assert!(split_holdout(&data, r2, 0).is_err());
    }
}

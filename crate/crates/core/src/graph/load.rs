//! Interaction-list file loading.
//!
//! The input format is the one used by the public LightGCN benchmark
//! dumps: UTF-8 text, one user per line, whitespace-separated integers,
//! first token the raw user id and the rest that user's raw item ids.
//! Raw ids are remapped to dense internal ids (first-appearance order);
//! the mapping is kept so reports can name raw ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::InteractionData;

/// Bookkeeping from one load.
#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    /// Duplicate (user, item) pairs dropped, within or across lines.
    pub duplicates_dropped: usize,
    /// Lines holding a user id but no items.
    pub empty_user_lines: usize,
    /// Raw user id per dense user id.
    pub raw_user_ids: Vec<u64>,
    /// Raw item id per dense item id.
    pub raw_item_ids: Vec<u64>,
}

pub fn load_interactions(path: &Path) -> Result<(InteractionData, LoadStats)> {
    let text = fs::read_to_string(path)?;
    parse_interactions(&text)
}

pub fn parse_interactions(text: &str) -> Result<(InteractionData, LoadStats)> {
    let mut user_map: HashMap<u64, u32> = HashMap::new();
    let mut item_map: HashMap<u64, u32> = HashMap::new();
    let mut stats = LoadStats::default();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut seen: HashMap<(u32, u32), ()> = HashMap::new();

    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let user_tok = tokens.next().expect("non-empty line has a token");
        let raw_user: u64 = user_tok.parse().map_err(|_| Error::Format {
            line: line_no + 1,
            msg: format!("unparsable user id {user_tok:?}"),
        })?;
        let mut any_item = false;
        // assign the dense user id lazily so item-less lines do not claim one
        let mut dense_user: Option<u32> = user_map.get(&raw_user).copied();
        for tok in tokens {
            let raw_item: u64 = tok.parse().map_err(|_| Error::Format {
                line: line_no + 1,
                msg: format!("unparsable item id {tok:?}"),
            })?;
            any_item = true;
            let u = *dense_user.get_or_insert_with(|| {
                let next = user_map.len() as u32;
                *user_map.entry(raw_user).or_insert_with(|| {
                    stats.raw_user_ids.push(raw_user);
                    next
                })
            });
            let next_item = item_map.len() as u32;
            let i = *item_map.entry(raw_item).or_insert_with(|| {
                stats.raw_item_ids.push(raw_item);
                next_item
            });
            if seen.insert((u, i), ()).is_some() {
                stats.duplicates_dropped += 1;
            } else {
                pairs.push((u, i));
            }
        }
        if !any_item {
            stats.empty_user_lines += 1;
        }
    }

    if pairs.is_empty() {
        return Err(Error::EmptyDataset("file holds no interaction pairs".into()));
    }
    let data = InteractionData::new(user_map.len(), item_map.len(), pairs)?;
    Ok((data, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remaps_ids_densely() {
        // raw item ids 1 and 2 become dense 0 and 1
        let (data, stats) = parse_interactions("0 1 2\n1 2\n").unwrap();
        assert_eq!(data.num_users(), 2);
        assert_eq!(data.num_items(), 2);
        assert_eq!(data.num_pairs(), 3);
        assert_eq!(stats.raw_item_ids, vec![1, 2]);
        assert_eq!(stats.duplicates_dropped, 0);
        assert!(data.contains(0, 0) && data.contains(0, 1) && data.contains(1, 1));
    }

    #[test]
    fn duplicate_pairs_are_dropped_and_counted() {
        let (data, stats) = parse_interactions("0 1 1\n").unwrap();
        assert_eq!(data.num_pairs(), 1);
        assert_eq!(stats.duplicates_dropped, 1);

        // across lines too
        let (data2, stats2) = parse_interactions("0 1\n0 1 2\n").unwrap();
        assert_eq!(data2.num_pairs(), 2);
        assert_eq!(stats2.duplicates_dropped, 1);
    }

    #[test]
    fn bad_token_names_the_line() {
        let err = parse_interactions("0 1\n1 x\n").unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_interactions(""), Err(Error::EmptyDataset(_))));
        assert!(matches!(parse_interactions("3\n7\n"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn item_less_lines_counted_but_claim_no_user_id() {
        let (data, stats) = parse_interactions("9\n0 1\n").unwrap();
        assert_eq!(stats.empty_user_lines, 1);
        assert_eq!(data.num_users(), 1);
        assert_eq!(stats.raw_user_ids, vec![0]);
    }
}

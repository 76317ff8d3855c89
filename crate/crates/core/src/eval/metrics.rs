//! Recall@k and NDCG@k for one ranked list.

use std::collections::BTreeSet;

/// Metrics for a single user's top-k list against their relevant set.
/// Binary gain, log₂ discount: a hit at rank r contributes 1/log₂(r+1),
/// and the ideal DCG places min(k, |relevant|) hits at the top ranks.
/// Returns None for an empty relevant set (excluded, not an error).
pub fn ranking_metrics(topk: &[u32], relevant: &BTreeSet<u32>, k: usize) -> Option<(f64, f64)> {
    if relevant.is_empty() {
        return None;
    }
    debug_assert!(topk.len() <= k, "top-k list longer than k");
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (idx, item) in topk.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            dcg += 1.0 / ((idx + 2) as f64).log2();
        }
    }
    let ideal = relevant.len().min(k);
    let idcg: f64 = (0..ideal).map(|idx| 1.0 / ((idx + 2) as f64).log2()).sum();
    let recall = hits as f64 / relevant.len() as f64;
    Some((recall, dcg / idcg))
}

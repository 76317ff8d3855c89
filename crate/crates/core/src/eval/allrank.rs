//! All-ranking protocol: every test user is scored against every item they
//! have not trained on (validation items are masked out too), the top-k is
//! taken, and metrics average over users. Group metrics restrict each
//! user's relevant set to the group's items; users without relevant items
//! in a group are excluded from that group's average.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::eval::{ranking_metrics, EvalReport, GroupMetrics};
use crate::graph::{NormalizedAdjacency, PopularityGroup, PopularityGrouping, SplitData};
use crate::model::{final_embeddings, ModelConfig, ParameterSet};

#[derive(Default)]
struct Accum {
    recall: f64,
    ndcg: f64,
    users: usize,
}

impl Accum {
    fn push(&mut self, m: Option<(f64, f64)>) {
        if let Some((r, n)) = m {
            self.recall += r;
            self.ndcg += n;
            self.users += 1;
        }
    }

    fn mean(&self) -> GroupMetrics {
        if self.users == 0 {
            return GroupMetrics::default();
        }
        GroupMetrics {
            recall: self.recall / self.users as f64,
            ndcg: self.ndcg / self.users as f64,
            users: self.users,
        }
    }
}

pub fn evaluate_all(
    params: &ParameterSet,
    cfg: &ModelConfig,
    adj: &NormalizedAdjacency,
    split: &SplitData,
    grouping: &PopularityGrouping,
    k: usize,
) -> Result<EvalReport> {
    let nu = adj.num_users();
    let ni = adj.num_items();
    if params.num_rows() != nu + ni || params.dim() != cfg.dim {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint is {}x{}, graph wants {}x{}",
            params.num_rows(),
            params.dim(),
            nu + ni,
            cfg.dim
        )));
    }
    if split.test.num_users() != nu || split.test.num_items() != ni {
        return Err(Error::ShapeMismatch("split id spaces do not match the graph".into()));
    }
    if grouping.num_items() != ni {
        return Err(Error::ShapeMismatch("grouping does not cover the item space".into()));
    }

    let emb = final_embeddings(params, adj, cfg);

    let mut overall = Accum::default();
    let mut per_group = [Accum::default(), Accum::default(), Accum::default()];

    let mut scores: Vec<(f64, u32)> = Vec::with_capacity(ni);
    for u in 0..nu as u32 {
        let relevant_all = split.test.items_of(u);
        if relevant_all.is_empty() {
            continue;
        }
        let eu = emb.row(u as usize);
        scores.clear();
        for item in 0..ni as u32 {
            let ei = emb.row(nu + item as usize);
            let s: f64 = eu.iter().zip(ei).map(|(a, b)| a * b).sum();
            scores.push((s, item));
        }
        for &it in split.train.items_of(u) {
            scores[it as usize].0 = f64::NEG_INFINITY;
        }
        for &it in split.val.items_of(u) {
            scores[it as usize].0 = f64::NEG_INFINITY;
        }
        // descending score, item id breaking ties for determinism
        scores.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0).expect("scores are not NaN").then(a.1.cmp(&b.1))
        });
        let topk: Vec<u32> =
            scores.iter().take(k).filter(|(s, _)| *s > f64::NEG_INFINITY).map(|&(_, i)| i).collect();

        let relevant: BTreeSet<u32> = relevant_all.iter().copied().collect();
        overall.push(ranking_metrics(&topk, &relevant, k));
        for (gi, group) in PopularityGroup::ALL.iter().enumerate() {
            let restricted: BTreeSet<u32> =
                relevant.iter().copied().filter(|&i| grouping.group_of(i) == *group).collect();
            per_group[gi].push(ranking_metrics(&topk, &restricted, k));
        }
    }

    let [popular, normal, unpopular] = per_group;
    Ok(EvalReport {
        k,
        overall: overall.mean(),
        popular: popular.mean(),
        normal: normal.mean(),
        unpopular: unpopular.mean(),
        sharpness: None,
        sharpness_degenerate: false,
        config_echo: format!("layers={} dim={} l2={:.3e} k={k}", cfg.layers, cfg.dim, cfg.l2_coeff),
    })
}

//! Item popularity groups.
//!
//! Items are sorted by descending train degree and cut into three groups
//! (Popular, Normal, Unpopular) whose interaction masses come as close to
//! one third each as the data allows. A boundary falling inside a run of
//! equal-degree items snaps to whichever end of the run keeps the mass
//! closer to its target, except when snapping would empty a group (then the
//! run is split positionally, which covers the all-degrees-equal case).

use crate::error::{Error, Result};
use crate::graph::InteractionData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PopularityGroup {
    Unpopular,
    Normal,
    Popular,
}

impl PopularityGroup {
    pub const ALL: [PopularityGroup; 3] =
        [PopularityGroup::Popular, PopularityGroup::Normal, PopularityGroup::Unpopular];

    pub fn name(&self) -> &'static str {
        match self {
            PopularityGroup::Unpopular => "unpopular",
            PopularityGroup::Normal => "normal",
            PopularityGroup::Popular => "popular",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PopularityGrouping {
    labels: Vec<PopularityGroup>,
    /// Minimum train degree seen in (Popular, Normal).
    pub boundaries: (usize, usize),
}

impl PopularityGrouping {
    pub fn group_of(&self, item: u32) -> PopularityGroup {
        self.labels[item as usize]
    }

    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    /// Interaction-mass share of each group under `degrees`, for diagnostics.
    pub fn mass_shares(&self, degrees: &[usize]) -> [f64; 3] {
        let total: usize = degrees.iter().sum();
        let mut mass = [0usize; 3];
        for (item, &d) in degrees.iter().enumerate() {
            let k = match self.labels[item] {
                PopularityGroup::Popular => 0,
                PopularityGroup::Normal => 1,
                PopularityGroup::Unpopular => 2,
            };
            mass[k] += d;
        }
        [
            mass[0] as f64 / total as f64,
            mass[1] as f64 / total as f64,
            mass[2] as f64 / total as f64,
        ]
    }
}

pub fn popularity_groups(train: &InteractionData) -> Result<PopularityGrouping> {
    if train.num_pairs() == 0 {
        return Err(Error::EmptyDataset("cannot group items of an empty train shard".into()));
    }
    let degrees = train.item_degrees();
    let mut order: Vec<u32> = (0..train.num_items() as u32).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(degrees[i as usize]), i));

    let n = order.len();
    let total: usize = degrees.iter().sum();
    // prefix[k] = mass of the first k items in sorted order
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &i in &order {
        prefix.push(prefix.last().unwrap() + degrees[i as usize]);
    }

    let nearest_cut = |target: f64, lo: usize, hi: usize| -> usize {
        let mut best = lo;
        let mut best_dev = f64::INFINITY;
        for k in lo..=hi {
            let dev = (prefix[k] as f64 - target).abs();
            if dev < best_dev {
                best_dev = dev;
                best = k;
            }
        }
        best
    };

    // snap a cut out of an equal-degree run when possible
    let snap = |cut: usize, target: f64, lo: usize, hi: usize| -> usize {
        if cut == 0 || cut >= n {
            return cut;
        }
        let deg_at = |k: usize| degrees[order[k] as usize];
        if deg_at(cut - 1) != deg_at(cut) {
            return cut; // not inside a run
        }
        let mut start = cut;
        while start > 0 && deg_at(start - 1) == deg_at(cut) {
            start -= 1;
        }
        let mut end = cut;
        while end < n && deg_at(end) == deg_at(cut) {
            end += 1;
        }
        let candidates = [start, end].into_iter().filter(|&k| k >= lo && k <= hi);
        let mut best = cut;
        let mut best_dev = f64::INFINITY;
        for k in candidates {
            let dev = (prefix[k] as f64 - target).abs();
            if dev < best_dev {
                best_dev = dev;
                best = k;
            }
        }
        best
    };

    let t1 = total as f64 / 3.0;
    let t2 = 2.0 * total as f64 / 3.0;
    // every group keeps at least one item when there are three or more
    let (mut b1, mut b2);
    if n >= 3 {
        b1 = nearest_cut(t1, 1, n - 2);
        b1 = snap(b1, t1, 1, n - 2);
        b2 = nearest_cut(t2, b1 + 1, n - 1);
        b2 = snap(b2, t2, b1 + 1, n - 1);
    } else {
        b1 = 1.min(n);
        b2 = 2.min(n);
    }

    let mut labels = vec![PopularityGroup::Unpopular; n];
    for (k, &item) in order.iter().enumerate() {
        labels[item as usize] = if k < b1 {
            PopularityGroup::Popular
        } else if k < b2 {
            PopularityGroup::Normal
        } else {
            PopularityGroup::Unpopular
        };
    }
    let boundaries = (
        degrees[order[b1.saturating_sub(1)] as usize],
        degrees[order[b2.saturating_sub(1)] as usize],
    );
    Ok(PopularityGrouping { labels, boundaries })
}

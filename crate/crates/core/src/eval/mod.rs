//! All-ranking Top-k evaluation, popularity breakdowns, and the one-step
//! sharpness estimate.

mod allrank;
mod metrics;
mod sharpness;

pub use allrank::evaluate_all;
pub use metrics::ranking_metrics;
pub use sharpness::{one_step_sharpness, sharpness_estimate, SHARPNESS_BATCH_SIZE};

use std::fmt::Write as _;

/// Mean metrics over the users that had at least one relevant item.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
}

/// Evaluation summary for one checkpoint.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub k: usize,
    pub overall: GroupMetrics,
    pub popular: GroupMetrics,
    pub normal: GroupMetrics,
    pub unpopular: GroupMetrics,
    /// One-step loss rise on the fixed probe batch; None when not measured.
    pub sharpness: Option<f64>,
    /// The sharpness probe hit a zero gradient.
    pub sharpness_degenerate: bool,
    /// Compact echo of the evaluated configuration.
    pub config_echo: String,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "k,users,recall,ndcg,recall_popular,ndcg_popular,\
users_popular,recall_normal,ndcg_normal,users_normal,recall_unpopular,ndcg_unpopular,\
users_unpopular,sharpness";

    pub fn to_csv_row(&self) -> String {
        let sharp = self.sharpness.map_or(String::new(), |s| format!("{s:.10e}"));
        format!(
            "{},{},{:.8},{:.8},{:.8},{:.8},{},{:.8},{:.8},{},{:.8},{:.8},{},{}",
            self.k,
            self.overall.users,
            self.overall.recall,
            self.overall.ndcg,
            self.popular.recall,
            self.popular.ndcg,
            self.popular.users,
            self.normal.recall,
            self.normal.ndcg,
            self.normal.users,
            self.unpopular.recall,
            self.unpopular.ndcg,
            self.unpopular.users,
            sharp,
        )
    }

    /// Flat `key=value` rendering, one line per field.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "users={}", self.overall.users);
        let _ = writeln!(s, "recall={:.8}", self.overall.recall);
        let _ = writeln!(s, "ndcg={:.8}", self.overall.ndcg);
        for (name, m) in
            [("popular", &self.popular), ("normal", &self.normal), ("unpopular", &self.unpopular)]
        {
            let _ = writeln!(s, "recall_{name}={:.8}", m.recall);
            let _ = writeln!(s, "ndcg_{name}={:.8}", m.ndcg);
            let _ = writeln!(s, "users_{name}={}", m.users);
        }
        match self.sharpness {
            Some(v) => {
                let _ = writeln!(s, "sharpness={v:.10e}");
                let _ = writeln!(s, "sharpness_degenerate={}", self.sharpness_degenerate);
            }
            None => {
                let _ = writeln!(s, "sharpness=");
            }
        }
        let _ = writeln!(s, "config={}", self.config_echo);
        s
    }
}

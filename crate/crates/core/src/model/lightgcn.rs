//! Propagation, scoring, and the BPR loss program.

use std::sync::Arc;

use crate::autodiff::dense::DenseMat;
use crate::autodiff::{
    evaluate, gradient, gradient_delta, FlatVector, HvpOracle, Program, ProgramBuilder, Support,
    Tape,
};
use crate::error::{Error, Result};
use crate::graph::{NormalizedAdjacency, Triplet};
use crate::model::{ModelConfig, ParameterSet, Readout};

/// Layered propagation E⁽l+1⁾ = Â·E⁽l⁾, returning E⁽0⁾..E⁽L⁾.
///
/// This is the tape-free forward used by evaluation and oracles; training
/// records the same computation through [`BprTask`] programs.
pub fn propagate(params: &ParameterSet, adj: &NormalizedAdjacency, layers: usize) -> Vec<DenseMat> {
    let e0 = DenseMat::from_vec(params.num_rows(), params.dim(), params.data().to_vec());
    let mut out = Vec::with_capacity(layers + 1);
    out.push(e0);
    for _ in 0..layers {
        let next = adj.matrix().matmul(out.last().unwrap(), false);
        out.push(next);
    }
    out
}

/// Mean readout over layers followed by the inner-product score ŷ_ui.
/// `item_node` is the item's global node id.
pub fn readout_and_score(layers: &[DenseMat], user: u32, item_node: u32) -> f64 {
    let d = layers[0].cols();
    let inv = 1.0 / layers.len() as f64;
    let mut score = 0.0;
    for k in 0..d {
        let mut eu = 0.0;
        let mut ei = 0.0;
        for layer in layers {
            eu += layer.get(user as usize, k);
            ei += layer.get(item_node as usize, k);
        }
        score += (eu * inv) * (ei * inv);
    }
    score
}

/// Final embeddings under the mean readout, one row per node.
pub fn final_embeddings(params: &ParameterSet, adj: &NormalizedAdjacency, cfg: &ModelConfig) -> DenseMat {
    let layers = propagate(params, adj, cfg.layers);
    let mut acc = layers[0].clone();
    for layer in &layers[1..] {
        acc = acc.add(layer);
    }
    acc.scale(1.0 / layers.len() as f64)
}

/// A dataset-bound loss: the normalized adjacency, the model shape, and the
/// program assembly for BPR batches. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct BprTask {
    adj: NormalizedAdjacency,
    cfg: ModelConfig,
    all_rows: Arc<Vec<u32>>,
}

impl BprTask {
    pub fn new(adj: NormalizedAdjacency, cfg: ModelConfig) -> Self {
        let n = adj.num_nodes();
        BprTask { adj, cfg, all_rows: Arc::new((0..n as u32).collect()) }
    }

    pub fn adj(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_rows(&self) -> usize {
        self.adj.num_nodes()
    }

    pub fn init_params(&self, seed: u64) -> ParameterSet {
        ParameterSet::init_normal(self.num_rows(), self.cfg.dim, seed)
    }

    /// Global node rows touched by a batch (users and both items),
    /// deduplicated and sorted.
    pub fn batch_rows(&self, batch: &[Triplet]) -> Vec<u32> {
        let nu = self.adj.num_users() as u32;
        let mut rows: Vec<u32> = Vec::with_capacity(batch.len() * 3);
        for t in batch {
            rows.push(t.user);
            rows.push(nu + t.pos);
            rows.push(nu + t.neg);
        }
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// Support over the batch-touched rows.
    pub fn batch_support(&self, batch: &[Triplet]) -> Arc<Support> {
        Support::new(self.batch_rows(batch), self.cfg.dim)
    }

    /// Mean BPR loss over the batch plus the row regularizer, as a program:
    ///
    ///   Σ −ln σ(ŷ_ui − ŷ_uj)/|batch| + λ‖E⁽⁰⁾ touched rows‖²/|batch|
    ///
    /// evaluated at θ+δ when `with_offset` (the δ gather covers the whole
    /// table; its support at evaluation time decides which rows move).
    pub fn loss_program(&self, batch: &[Triplet], with_offset: bool) -> Result<Program> {
        if batch.is_empty() {
            return Err(Error::Precondition("batch must be nonempty".into()));
        }
        let nu = self.adj.num_users() as u32;
        let mut b = ProgramBuilder::new();

        let theta = b.gather_theta(self.all_rows.clone());
        let e0 = if with_offset {
            let delta = b.gather_delta(self.all_rows.clone());
            b.add(theta, delta)
        } else {
            theta
        };

        let mut acc = e0;
        let mut cur = e0;
        for _ in 0..self.cfg.layers {
            cur = b.spmm(self.adj.matrix().clone(), cur);
            acc = b.add(acc, cur);
        }
        let Readout::Mean = self.cfg.readout;
        let emean = b.scale(acc, 1.0 / (self.cfg.layers + 1) as f64);

        let users: Vec<u32> = batch.iter().map(|t| t.user).collect();
        let pos: Vec<u32> = batch.iter().map(|t| nu + t.pos).collect();
        let neg: Vec<u32> = batch.iter().map(|t| nu + t.neg).collect();
        let eu = b.gather(emean, Arc::new(users));
        let ei = b.gather(emean, Arc::new(pos));
        let ej = b.gather(emean, Arc::new(neg));

        let s_ui = b.row_dot(eu, ei);
        let s_uj = b.row_dot(eu, ej);
        let neg_suj = b.neg(s_uj);
        let margin = b.add(s_ui, neg_suj);
        let sig = b.sigmoid(margin);
        let ln = b.ln(sig);
        let nll = b.neg(ln);
        let total = b.sum(nll);
        let mut loss = b.scale(total, 1.0 / batch.len() as f64);

        if self.cfg.l2_coeff > 0.0 {
            let touched = b.gather(e0, Arc::new(self.batch_rows(batch)));
            let sq = b.mul(touched, touched);
            let ssq = b.sum(sq);
            let reg = b.scale(ssq, self.cfg.l2_coeff / batch.len() as f64);
            loss = b.add(loss, reg);
        }
        Ok(b.finish(loss))
    }

    /// Evaluate the batch loss at θ+δ (δ = None is zero offset).
    pub fn loss(
        &self,
        params: &ParameterSet,
        batch: &[Triplet],
        offset: Option<&FlatVector>,
    ) -> Result<(f64, Tape)> {
        let program = self.loss_program(batch, offset.is_some())?;
        evaluate(&program, params.view(), offset)
    }

    /// Loss and full-table gradient ∇_θ.
    pub fn loss_and_grad(
        &self,
        params: &ParameterSet,
        batch: &[Triplet],
        offset: Option<&FlatVector>,
    ) -> Result<(f64, FlatVector)> {
        let (loss, mut tape) = self.loss(params, batch, offset)?;
        let g = gradient(&mut tape, params.full_support())?;
        Ok((loss, g))
    }

    /// Gradient with respect to the offset, over `support`.
    pub fn grad_delta(
        &self,
        params: &ParameterSet,
        batch: &[Triplet],
        offset: &FlatVector,
    ) -> Result<(f64, FlatVector)> {
        let (loss, mut tape) = self.loss(params, batch, Some(offset))?;
        let g = gradient_delta(&mut tape, offset.support())?;
        Ok((loss, g))
    }

    /// Second-order oracle at (θ, δ) for repeated HVP / mixed products.
    pub fn oracle(
        &self,
        params: &ParameterSet,
        batch: &[Triplet],
        offset: &FlatVector,
    ) -> Result<HvpOracle> {
        let program = self.loss_program(batch, true)?;
        let (_, tape) = evaluate(&program, params.view(), Some(offset))?;
        HvpOracle::new(tape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_adjacency, InteractionData};

    fn tiny_task(layers: usize, l2: f64) -> BprTask {
        // 2 users, 2 items, 3 edges
        let data = InteractionData::new(2, 2, vec![(0, 0), (0, 1), (1, 1)]).unwrap();
        let adj = normalized_adjacency(&data).unwrap();
        let cfg = ModelConfig { layers, dim: 2, readout: Readout::Mean, l2_coeff: l2 };
        BprTask::new(adj, cfg)
    }

    #[test]
    fn propagate_single_edge_swaps_embeddings() {
        let data = InteractionData::new(1, 1, vec![(0, 0)]).unwrap();
        let adj = normalized_adjacency(&data).unwrap();
        let params = ParameterSet::from_data(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let layers = propagate(&params, &adj, 1);
        // degrees are 1, so e_u⁽¹⁾ = e_i⁽⁰⁾ and e_i⁽¹⁾ = e_u⁽⁰⁾
        assert_eq!(layers[1].row(0), &[3.0, 4.0]);
        assert_eq!(layers[1].row(1), &[1.0, 2.0]);
    }

    #[test]
    fn propagate_zero_layers_is_identity() {
        let data = InteractionData::new(1, 1, vec![(0, 0)]).unwrap();
        let adj = normalized_adjacency(&data).unwrap();
        let params = ParameterSet::from_data(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let layers = propagate(&params, &adj, 0);
        assert_eq!(layers.len(), 1);
        assert_eq!(layers[0].data(), params.data());
    }

    #[test]
    fn score_is_plain_dot_at_zero_layers() {
        let data = InteractionData::new(1, 1, vec![(0, 0)]).unwrap();
        let adj = normalized_adjacency(&data).unwrap();
        let params = ParameterSet::from_data(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let layers = propagate(&params, &adj, 0);
        assert_eq!(readout_and_score(&layers, 0, 1), 11.0);

        // zero item embedding scores zero against anyone
        let params0 = ParameterSet::from_data(2, 2, vec![1.0, 2.0, 0.0, 0.0]);
        let layers0 = propagate(&params0, &adj, 0);
        assert_eq!(readout_and_score(&layers0, 0, 1), 0.0);
    }

    #[test]
    fn zero_embeddings_loss_is_ln2() {
        let task = tiny_task(2, 0.0);
        let params = ParameterSet::zeros(4, 2);
        let batch = [Triplet { user: 0, pos: 0, neg: 1 }, Triplet { user: 1, pos: 1, neg: 0 }];
        let (loss, _) = task.loss(&params, &batch, None).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unit_margin_triplet_loss() {
        // L=0, embeddings arranged so ŷ_ui − ŷ_uj = 1
        let task = tiny_task(0, 0.0);
        let params = ParameterSet::from_data(4, 2, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let batch = [Triplet { user: 0, pos: 0, neg: 1 }];
        // ŷ_u,i0 = e_u·e_i0 = 1, ŷ_u,i1 = e_u·e_i1 = 0
        let (loss, _) = task.loss(&params, &batch, None).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expect).abs() < 1e-15, "{loss} vs {expect}");
    }

    #[test]
    fn loss_permutation_invariant_over_batch() {
        let task = tiny_task(2, 1e-3);
        let params = task.init_params(5);
        let batch = vec![
            Triplet { user: 0, pos: 0, neg: 1 },
            Triplet { user: 1, pos: 1, neg: 0 },
            Triplet { user: 0, pos: 1, neg: 0 },
        ];
        let mut rev = batch.clone();
        rev.reverse();
        let (a, _) = task.loss(&params, &batch, None).unwrap();
        let (b, _) = task.loss(&params, &rev, None).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn widening_margin_strictly_decreases_loss() {
        let task = tiny_task(0, 0.0);
        let batch = [Triplet { user: 0, pos: 0, neg: 1 }];
        let mut last = f64::INFINITY;
        for m in [0.0, 0.5, 1.0, 2.0] {
            let params = ParameterSet::from_data(4, 2, vec![1.0, 0.0, 0.0, 0.0, m, 0.0, 0.0, 1.0]);
            let (loss, _) = task.loss(&params, &batch, None).unwrap();
            assert!(loss < last, "margin {m}: {loss} not < {last}");
            last = loss;
        }
    }

    #[test]
    fn offset_moves_only_supported_rows() {
        let task = tiny_task(1, 0.0);
        let params = task.init_params(9);
        let batch = [Triplet { user: 0, pos: 0, neg: 1 }];
        let sup = Support::new(vec![0], 2);
        let delta = FlatVector::from_values(sup, vec![0.05, -0.03]);

        let (base, _) = task.loss(&params, &batch, None).unwrap();
        let (moved, _) = task.loss(&params, &batch, Some(&delta)).unwrap();
        assert!((base - moved).abs() > 1e-9, "offset had no effect");

        // materializing θ+δ must agree with the offset path
        let mut shifted = params.clone();
        shifted.add_scaled(1.0, &delta);
        let (manual, _) = task.loss(&shifted, &batch, None).unwrap();
        assert!((moved - manual).abs() < 1e-12);
    }
}

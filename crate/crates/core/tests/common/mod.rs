//! Shared oracles for the integration and acceptance suites: random
//! program instances, finite-difference derivative oracles, a dense
//! matrix inverse, and tolerance helpers. Everything here is independent
//! of the differentiation path it checks.

#![allow(dead_code)]

use std::sync::Arc;

use std::collections::BTreeSet;

use gsam_core::graph::PopularityGroup;
use gsam_core::model::final_embeddings;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gsam_core::autodiff::dense::DenseMat;
use gsam_core::autodiff::{evaluate, gradient_delta, FlatVector, Program, Support};
use gsam_core::graph::{normalized_adjacency, InteractionData, Triplet};
use gsam_core::model::{BprTask, ModelConfig, ParameterSet, Readout};

/// One random small differentiable instance: a BPR loss on a random
/// bipartite graph with a random offset support.
pub struct RandomInstance {
    pub task: BprTask,
    pub params: ParameterSet,
    pub batch: Vec<Triplet>,
    pub delta: FlatVector,
    pub program: Program,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> RandomInstance {
    let nu = rng.random_range(2..=5usize);
    let ni = rng.random_range(2..=5usize);
    let mut pairs = Vec::new();
    for u in 0..nu as u32 {
        for i in 0..ni as u32 {
            if rng.random_bool(0.55) {
                pairs.push((u, i));
            }
        }
    }
    // guarantee coverage of every user and item
    for u in 0..nu as u32 {
        pairs.push((u, u % ni as u32));
    }
    for i in 0..ni as u32 {
        pairs.push((i % nu as u32, i));
    }
    // keep (0, 1) vacant so at least one user always has a negative item
    // (its coverage pairs above are (0, 0) and (1, 1) for nu, ni >= 2)
    pairs.retain(|&(u, i)| !(u == 0 && i == 1));
    pairs.sort_unstable();
    pairs.dedup();
    let data = InteractionData::new(nu, ni, pairs).unwrap();
    let adj = normalized_adjacency(&data).unwrap();

    let cfg = ModelConfig {
        layers: rng.random_range(0..=3usize),
        dim: rng.random_range(1..=3usize),
        readout: Readout::Mean,
        l2_coeff: if rng.random_bool(0.5) { 0.0 } else { 0.05 },
    };
    let task = BprTask::new(adj, cfg.clone());

    // healthy embedding scale keeps gradients and curvatures well away
    // from finite-difference noise
    let num_rows = nu + ni;
    let data_vals: Vec<f64> =
        (0..num_rows * cfg.dim).map(|_| rng.random_range(-0.8..0.8)).collect();
    let params = ParameterSet::from_data(num_rows, cfg.dim, data_vals);

    let batch_size = rng.random_range(1..=4usize);
    let mut batch = Vec::with_capacity(batch_size);
    while batch.len() < batch_size {
        let u = rng.random_range(0..nu as u32);
        let owned = data.items_of(u);
        if owned.len() == ni {
            continue;
        }
        let pos = owned[rng.random_range(0..owned.len())];
        let neg = loop {
            let c = rng.random_range(0..ni as u32);
            if !data.contains(u, c) {
                break c;
            }
        };
        batch.push(Triplet { user: u, pos, neg });
    }

    let support = task.batch_support(&batch);
    let delta_vals: Vec<f64> = (0..support.len()).map(|_| rng.random_range(-0.1..0.1)).collect();
    let delta = FlatVector::from_values(support, delta_vals);
    let program = task.loss_program(&batch, true).unwrap();

    RandomInstance { task, params, batch, delta, program }
}

/// Loss at θ (with the instance's offset) as plain evaluation.
pub fn loss_of(inst: &RandomInstance, params: &ParameterSet, delta: &FlatVector) -> f64 {
    evaluate(&inst.program, params.view(), Some(delta)).unwrap().0
}

/// Central finite differences of the loss over θ coordinates.
pub fn fd_grad_theta(inst: &RandomInstance, h: f64) -> FlatVector {
    let support = inst.params.full_support().clone();
    let mut out = FlatVector::zeros(support);
    let d = inst.params.dim();
    for k in 0..inst.params.data().len() {
        let mut plus = inst.params.data().to_vec();
        plus[k] += h;
        let mut minus = inst.params.data().to_vec();
        minus[k] -= h;
        let pp = ParameterSet::from_data(inst.params.num_rows(), d, plus);
        let pm = ParameterSet::from_data(inst.params.num_rows(), d, minus);
        out.values_mut()[k] = (loss_of(inst, &pp, &inst.delta) - loss_of(inst, &pm, &inst.delta))
            / (2.0 * h);
    }
    out
}

/// Central finite differences of the loss over δ coordinates.
pub fn fd_grad_delta(inst: &RandomInstance, h: f64) -> FlatVector {
    let mut out = FlatVector::zeros(inst.delta.support().clone());
    for k in 0..inst.delta.values().len() {
        let mut plus = inst.delta.clone();
        plus.values_mut()[k] += h;
        let mut minus = inst.delta.clone();
        minus.values_mut()[k] -= h;
        out.values_mut()[k] = (loss_of(inst, &inst.params, &plus)
            - loss_of(inst, &inst.params, &minus))
            / (2.0 * h);
    }
    out
}

/// AD gradient with respect to δ at an arbitrary offset.
pub fn ad_grad_delta_at(inst: &RandomInstance, delta: &FlatVector) -> FlatVector {
    let (_, mut tape) = evaluate(&inst.program, inst.params.view(), Some(delta)).unwrap();
    gradient_delta(&mut tape, delta.support()).unwrap()
}

/// FD-of-gradients Hessian-vector oracle: (∇_δL(δ+hv) − ∇_δL(δ−hv)) / 2h.
pub fn fd_hvp(inst: &RandomInstance, v: &FlatVector, h: f64) -> FlatVector {
    let mut plus = inst.delta.clone();
    plus.axpy(h, v);
    let mut minus = inst.delta.clone();
    minus.axpy(-h, v);
    let gp = ad_grad_delta_at(inst, &plus);
    let gm = ad_grad_delta_at(inst, &minus);
    let mut out = gp;
    out.axpy(-1.0, &gm);
    out.scale_in_place(1.0 / (2.0 * h));
    out
}

/// FD mixed-product oracle: for each θ coordinate k, the change of
/// ⟨∇_δ L, v⟩ across θ ± h·e_k.
pub fn fd_mixed(inst: &RandomInstance, v: &FlatVector, h: f64) -> FlatVector {
    let support = inst.params.full_support().clone();
    let mut out = FlatVector::zeros(support);
    let d = inst.params.dim();
    for k in 0..inst.params.data().len() {
        let mut plus = inst.params.data().to_vec();
        plus[k] += h;
        let mut minus = inst.params.data().to_vec();
        minus[k] -= h;
        let pp = ParameterSet::from_data(inst.params.num_rows(), d, plus);
        let pm = ParameterSet::from_data(inst.params.num_rows(), d, minus);
        let gp = {
            let (_, mut tape) = evaluate(&inst.program, pp.view(), Some(&inst.delta)).unwrap();
            gradient_delta(&mut tape, inst.delta.support()).unwrap()
        };
        let gm = {
            let (_, mut tape) = evaluate(&inst.program, pm.view(), Some(&inst.delta)).unwrap();
            gradient_delta(&mut tape, inst.delta.support()).unwrap()
        };
        out.values_mut()[k] = (gp.dot(v) - gm.dot(v)) / (2.0 * h);
    }
    out
}

/// Largest guarded per-coordinate relative error: |a−b| / max(|b|, floor).
/// The floor absorbs finite-difference noise on near-zero coordinates.
pub fn max_rel_err(got: &[f64], want: &[f64], floor_scale: f64) -> f64 {
    assert_eq!(got.len(), want.len());
    let max_mag = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = floor_scale * max_mag.max(1.0);
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs() / b.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse for small dense symmetric matrices (test oracle).
pub fn dense_inverse(a: &DenseMat) -> DenseMat {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut work: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut row: Vec<f64> = a.row(r).to_vec();
            row.extend((0..n).map(|c| if c == r { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[i][col].abs().partial_cmp(&work[j][col].abs()).unwrap())
            .unwrap();
        work.swap(col, pivot);
        let p = work[col][col];
        assert!(p.abs() > 1e-12, "singular matrix in test oracle");
        for v in &mut work[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = work[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        work[r][c] -= f * work[col][c];
                    }
                }
            }
        }
    }
    let mut out = DenseMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, work[r][n + c]);
        }
    }
    out
}

/// Random symmetric positive definite matrix with spectrum inside (0, 1).
pub fn random_spd_in_unit_interval(n: usize, rng: &mut ChaCha8Rng) -> DenseMat {
    let mut b = DenseMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            b.set(r, c, rng.random_range(-1.0..1.0));
        }
    }
    // S = BᵀB is PSD; scale under a Gershgorin bound and lift off zero
    let mut s = DenseMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += b.get(k, r) * b.get(k, c);
            }
            s.set(r, c, acc);
        }
    }
    let bound = (0..n)
        .map(|r| (0..n).map(|c| s.get(r, c).abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let scale = 0.9 / bound.max(1e-9);
    let mut out = DenseMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let v = s.get(r, c) * scale + if r == c { 0.05 } else { 0.0 };
            out.set(r, c, v);
        }
    }
    out
}

pub fn matvec(m: &DenseMat, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn flat(support: &Arc<Support>, vals: Vec<f64>) -> FlatVector {
    FlatVector::from_values(support.clone(), vals)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Quadratic bilevel toy with an analytic inner solution.
///
///   L_in(θ, δ)  = ½ δᵀAδ + (Cθ + c)ᵀδ          (A SPD ⇒ δ*(θ) = −A⁻¹(Cθ+c))
///   L_out(θ, δ) = ½ δᵀBδ + θᵀFδ + ½ θᵀGθ
pub struct BilevelToy {
    pub a: DenseMat,
    pub a_inv: DenseMat,
    pub b: DenseMat,
    pub c_mat: DenseMat,
    pub c_vec: Vec<f64>,
    pub f: DenseMat,
    pub g: DenseMat,
}

impl BilevelToy {
    pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut sym = |scale: f64| {
            let mut m = DenseMat::zeros(n, n);
            for r in 0..n {
                for c in 0..=r {
                    let v = rng.random_range(-scale..scale);
                    m.set(r, c, v);
                    m.set(c, r, v);
                }
            }
            m
        };
        // A = I + small symmetric: spectrum near 1 so α = 1 converges fast
        let mut a = sym(0.25);
        for i in 0..n {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        let a_inv = dense_inverse(&a);
        let b = sym(0.5);
        let g = sym(0.5);
        let mut c_mat = DenseMat::zeros(n, n);
        let mut f = DenseMat::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                c_mat.set(r, c, rng.random_range(-0.5..0.5));
                f.set(r, c, rng.random_range(-0.5..0.5));
            }
        }
        let c_vec = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        BilevelToy { a, a_inv, b, c_mat, c_vec, f, g }
    }

    pub fn inner_solution(&self, theta: &[f64]) -> Vec<f64> {
        let mut rhs = matvec(&self.c_mat, theta);
        for (r, c) in rhs.iter_mut().zip(&self.c_vec) {
            *r += c;
        }
        matvec(&self.a_inv, &rhs).iter().map(|x| -x).collect()
    }

    pub fn outer_value(&self, theta: &[f64], delta: &[f64]) -> f64 {
        let bd = matvec(&self.b, delta);
        let fd = matvec(&self.f, delta);
        let gt = matvec(&self.g, theta);
        0.5 * delta.iter().zip(&bd).map(|(a, b)| a * b).sum::<f64>()
            + theta.iter().zip(&fd).map(|(a, b)| a * b).sum::<f64>()
            + 0.5 * theta.iter().zip(&gt).map(|(a, b)| a * b).sum::<f64>()
    }

    /// ∂L_out/∂θ = Fδ + Gθ
    pub fn douter_dtheta(&self, theta: &[f64], delta: &[f64]) -> Vec<f64> {
        let fd = matvec(&self.f, delta);
        let gt = matvec(&self.g, theta);
        fd.iter().zip(&gt).map(|(a, b)| a + b).collect()
    }

    /// ∂L_out/∂δ = Bδ + Fᵀθ
    pub fn douter_ddelta(&self, theta: &[f64], delta: &[f64]) -> Vec<f64> {
        let bd = matvec(&self.b, delta);
        let mut ft = vec![0.0; theta.len()];
        for r in 0..theta.len() {
            for c in 0..theta.len() {
                ft[c] += self.f.get(r, c) * theta[r];
            }
        }
        bd.iter().zip(&ft).map(|(a, b)| a + b).collect()
    }
}


pub fn dense_normalized(data: &InteractionData) -> DenseMat {
    let nu = data.num_users();
    let n = nu + data.num_items();
    let mut a = DenseMat::zeros(n, n);
    for &(u, i) in data.pairs() {
        a.set(u as usize, nu + i as usize, 1.0);
        a.set(nu + i as usize, u as usize, 1.0);
    }
    let mut dinv = vec![0.0f64; n];
    for r in 0..n {
        let deg: f64 = (0..n).map(|c| a.get(r, c)).sum();
        if deg > 0.0 {
            dinv[r] = 1.0 / deg.sqrt();
        }
    }
    let mut out = DenseMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, dinv[r] * a.get(r, c) * dinv[c]);
        }
    }
    out
}


/// Brute-force all-ranking evaluation: dense propagation, full sort per
/// user, direct metric loops, plain accumulation.
pub fn brute_force_eval(
    params: &ParameterSet,
    cfg: &ModelConfig,
    train: &InteractionData,
    val: &InteractionData,
    test: &InteractionData,
    group_of: impl Fn(u32) -> PopularityGroup,
    k: usize,
) -> [(f64, f64, usize); 4] {
    let nu = train.num_users();
    let ni = train.num_items();
    let adj = normalized_adjacency(train).unwrap();
    let emb = final_embeddings(params, &adj, cfg);

    let metric = |topk: &[u32], relevant: &BTreeSet<u32>| -> Option<(f64, f64)> {
        if relevant.is_empty() {
            return None;
        }
        let mut dcg = 0.0;
        let mut hits = 0;
        for (pos, item) in topk.iter().enumerate() {
            if relevant.contains(item) {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let mut idcg = 0.0;
        for pos in 0..relevant.len().min(k) {
            idcg += 1.0 / ((pos + 2) as f64).log2();
        }
        Some((hits as f64 / relevant.len() as f64, dcg / idcg))
    };

    // accumulators: overall, popular, normal, unpopular
    let mut acc = [(0.0f64, 0.0f64, 0usize); 4];
    for u in 0..nu as u32 {
        let relevant: BTreeSet<u32> = test.items_of(u).iter().copied().collect();
        if relevant.is_empty() {
            continue;
        }
        let mut scored: Vec<(f64, u32)> = (0..ni as u32)
            .map(|i| {
                let s: f64 = emb
                    .row(u as usize)
                    .iter()
                    .zip(emb.row(nu + i as usize))
                    .map(|(a, b)| a * b)
                    .sum();
                (s, i)
            })
            .collect();
        for &it in train.items_of(u).iter().chain(val.items_of(u)) {
            scored[it as usize].0 = f64::NEG_INFINITY;
        }
        scored.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let topk: Vec<u32> =
            scored.iter().take(k).filter(|(s, _)| *s > f64::NEG_INFINITY).map(|&(_, i)| i).collect();

        if let Some((r, n)) = metric(&topk, &relevant) {
            acc[0].0 += r;
            acc[0].1 += n;
            acc[0].2 += 1;
        }
        for (slot, group) in PopularityGroup::ALL.iter().enumerate() {
            let restricted: BTreeSet<u32> =
                relevant.iter().copied().filter(|&i| group_of(i) == *group).collect();
            if let Some((r, n)) = metric(&topk, &restricted) {
                acc[slot + 1].0 += r;
                acc[slot + 1].1 += n;
                acc[slot + 1].2 += 1;
            }
        }
    }
    acc.map(|(r, n, c)| if c == 0 { (0.0, 0.0, 0) } else { (r / c as f64, n / c as f64, c) })
}


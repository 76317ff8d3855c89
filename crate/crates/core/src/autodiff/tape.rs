//! Tape recording, replay, and derivative extraction.
//!
//! Evaluating a [`Program`](super::Program) lowers it one-to-one onto a
//! tape whose nodes cache their primal values. The backward pass appends
//! adjoint nodes to the same tape (values computed eagerly as nodes are
//! appended), so a gradient is itself a tape region that can be swept
//! again: Hessian-vector products are the gradient, with respect to the
//! perturbation, of an inner product between a recorded gradient and a
//! constant vector.

use std::sync::Arc;

use crate::autodiff::dense::{sigmoid, DenseMat};
use crate::autodiff::program::{Instr, Program};
use crate::autodiff::{FlatVector, Support};
use crate::error::{Error, Result};
use crate::sparse::Csr;

/// Which bound parameter table a gather reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    Theta,
    Delta,
}

/// Borrowed view of a parameter table: `rows` embedding rows of width `dim`.
#[derive(Debug, Clone, Copy)]
pub struct TableView<'a> {
    rows: usize,
    dim: usize,
    data: &'a [f64],
}

impl<'a> TableView<'a> {
    pub fn new(rows: usize, dim: usize, data: &'a [f64]) -> Self {
        assert_eq!(data.len(), rows * dim, "table data length mismatch");
        TableView { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

type NodeId = usize;

/// Tape ops. The ten program ops plus the two derivative companions that
/// backward emission introduces: `Recip` (derivative of `Ln`) and `Scatter`
/// (derivative of `Gather`). Both expose their own derivatives, so the set
/// stays closed under repeated differentiation.
#[derive(Debug, Clone)]
enum Node {
    Const,
    GatherParam { slot: ParamSlot, rows: Arc<Vec<u32>> },
    Gather { x: NodeId, rows: Arc<Vec<u32>> },
    Scatter { x: NodeId, rows: Arc<Vec<u32>>, out_rows: usize },
    SpMM { m: Arc<Csr>, x: NodeId, transposed: bool },
    Scale { x: NodeId, c: f64 },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    RowDot { a: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Ln { x: NodeId },
    Recip { x: NodeId },
    Neg { x: NodeId },
    Sum { x: NodeId },
}

impl Node {
    fn op_name(&self) -> &'static str {
        match self {
            Node::Const => "const",
            Node::GatherParam { slot: ParamSlot::Theta, .. } => "gather_theta",
            Node::GatherParam { slot: ParamSlot::Delta, .. } => "gather_delta",
            Node::Gather { .. } => "gather",
            Node::Scatter { .. } => "scatter",
            Node::SpMM { .. } => "spmm",
            Node::Scale { .. } => "scale",
            Node::Add { .. } => "add",
            Node::Mul { .. } => "mul",
            Node::RowDot { .. } => "row_dot",
            Node::Sigmoid { .. } => "sigmoid",
            Node::Ln { .. } => "ln",
            Node::Recip { .. } => "recip",
            Node::Neg { .. } => "neg",
            Node::Sum { .. } => "sum",
        }
    }
}

/// Adjoint handles produced by one backward sweep: for every parameter
/// gather reached by the sweep, the tape node holding its adjoint.
#[derive(Debug, Clone, Default)]
struct BackwardInfo {
    theta: Vec<(Arc<Vec<u32>>, NodeId)>,
    delta: Vec<(Arc<Vec<u32>>, NodeId)>,
}

impl BackwardInfo {
    fn contribs(&self, slot: ParamSlot) -> &[(Arc<Vec<u32>>, NodeId)] {
        match slot {
            ParamSlot::Theta => &self.theta,
            ParamSlot::Delta => &self.delta,
        }
    }
}

/// A recorded computation trace: a DAG of operation nodes with cached
/// primal values and a scalar output.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<DenseMat>,
    output: NodeId,
    theta_rows: usize,
    theta_dim: usize,
    first_backward: Option<BackwardInfo>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn output_value(&self) -> f64 {
        self.vals[self.output].as_scalar()
    }

    /// Recompute every non-leaf node from the stored leaf values and return
    /// the output. Bit-identical to the original evaluation.
    pub fn replay(&self) -> Result<f64> {
        let mut vals: Vec<DenseMat> = Vec::with_capacity(self.output + 1);
        for (id, node) in self.nodes.iter().enumerate().take(self.output + 1) {
            let v = match node {
                // leaves keep their recorded inputs
                Node::Const | Node::GatherParam { .. } => self.vals[id].clone(),
                _ => compute_value(node, &vals, id)?,
            };
            vals.push(v);
        }
        Ok(vals[self.output].as_scalar())
    }

    fn val(&self, id: NodeId) -> &DenseMat {
        &self.vals[id]
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.vals[id].shape()
    }

    fn push_value(&mut self, node: Node, value: DenseMat) -> Result<NodeId> {
        let id = self.nodes.len();
        if !value.all_finite() {
            return Err(Error::NumericOverflow { node: id, op: node.op_name() });
        }
        self.nodes.push(node);
        self.vals.push(value);
        Ok(id)
    }

    fn push(&mut self, node: Node) -> Result<NodeId> {
        let id = self.nodes.len();
        let value = compute_value(&node, &self.vals, id)?;
        self.push_value(node, value)
    }

    fn push_const(&mut self, m: DenseMat) -> Result<NodeId> {
        self.push_value(Node::Const, m)
    }

    /// Elementwise product with the canonical operand order (broadcasting
    /// operand second).
    fn push_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ea = self.shape(a).0 * self.shape(a).1;
        let eb = self.shape(b).0 * self.shape(b).1;
        let (a, b) = if eb > ea { (b, a) } else { (a, b) };
        self.push(Node::Mul { a, b })
    }

    fn mark(&self) -> usize {
        self.nodes.len()
    }

    fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
        self.vals.truncate(mark);
    }

    /// Append the adjoint computation of node `from` (must be scalar) and
    /// collect parameter-gather adjoints. Every emitted node is an ordinary
    /// tape node, so the result of this sweep can itself be swept.
    fn emit_backward(&mut self, from: NodeId) -> Result<BackwardInfo> {
        if !self.vals[from].is_scalar() {
            return Err(Error::MalformedProgram(format!(
                "backward source node {from} is not scalar"
            )));
        }
        let mut adj: Vec<Option<NodeId>> = vec![None; from + 1];
        adj[from] = Some(self.push_const(DenseMat::scalar(1.0))?);
        let mut info = BackwardInfo::default();

        for i in (0..=from).rev() {
            let Some(g) = adj[i] else { continue };
            let node = self.nodes[i].clone();
            match node {
                Node::Const => {}
                Node::GatherParam { slot, rows } => match slot {
                    ParamSlot::Theta => info.theta.push((rows, g)),
                    ParamSlot::Delta => info.delta.push((rows, g)),
                },
                Node::Gather { x, rows } => {
                    let out_rows = self.shape(x).0;
                    let d = self.push(Node::Scatter { x: g, rows, out_rows })?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Scatter { x, rows, .. } => {
                    let d = self.push(Node::Gather { x: g, rows })?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::SpMM { m, x, transposed } => {
                    let d = self.push(Node::SpMM { m, x: g, transposed: !transposed })?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Scale { x, c } => {
                    let d = self.push(Node::Scale { x: g, c })?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Add { a, b } => {
                    accumulate(self, &mut adj, a, g)?;
                    accumulate(self, &mut adj, b, g)?;
                }
                Node::Mul { a, b } => {
                    let (ra, ca) = self.shape(a);
                    let (rb, cb) = self.shape(b);
                    if (ra, ca) == (rb, cb) {
                        let da = self.push_mul(g, b)?;
                        accumulate(self, &mut adj, a, da)?;
                        let db = self.push_mul(g, a)?;
                        accumulate(self, &mut adj, b, db)?;
                    } else if (rb, cb) == (1, 1) {
                        let da = self.push_mul(g, b)?;
                        accumulate(self, &mut adj, a, da)?;
                        let prod = self.push_mul(g, a)?;
                        let db = self.push(Node::Sum { x: prod })?;
                        accumulate(self, &mut adj, b, db)?;
                    } else {
                        // column broadcast: b is (n, 1)
                        let da = self.push_mul(g, b)?;
                        accumulate(self, &mut adj, a, da)?;
                        let db = self.push(Node::RowDot { a: g, b: a })?;
                        accumulate(self, &mut adj, b, db)?;
                    }
                }
                Node::RowDot { a, b } => {
                    let da = self.push_mul(b, g)?;
                    accumulate(self, &mut adj, a, da)?;
                    let db = self.push_mul(a, g)?;
                    accumulate(self, &mut adj, b, db)?;
                }
                Node::Sigmoid { x } => {
                    // d/dx σ(x) = σ(x)·(1 − σ(x)), built from the node's own
                    // output so the rule is differentiable again
                    let (r, c) = self.shape(i);
                    let ones = self.push_const(DenseMat::filled(r, c, 1.0))?;
                    let neg_s = self.push(Node::Neg { x: i })?;
                    let one_minus = self.push(Node::Add { a: ones, b: neg_s })?;
                    let sp = self.push_mul(i, one_minus)?;
                    let d = self.push_mul(g, sp)?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Ln { x } => {
                    let r = self.push(Node::Recip { x })?;
                    let d = self.push_mul(g, r)?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Recip { x } => {
                    // d/dx x⁻¹ = −x⁻², reusing this node's output
                    let sq = self.push_mul(i, i)?;
                    let gsq = self.push_mul(g, sq)?;
                    let d = self.push(Node::Neg { x: gsq })?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Neg { x } => {
                    let d = self.push(Node::Neg { x: g })?;
                    accumulate(self, &mut adj, x, d)?;
                }
                Node::Sum { x } => {
                    let (r, c) = self.shape(x);
                    let ones = self.push_const(DenseMat::filled(r, c, 1.0))?;
                    let d = self.push_mul(ones, g)?;
                    accumulate(self, &mut adj, x, d)?;
                }
            }
        }
        Ok(info)
    }

    fn ensure_first_backward(&mut self) -> Result<()> {
        if self.first_backward.is_none() {
            let info = self.emit_backward(self.output)?;
            self.first_backward = Some(info);
        }
        Ok(())
    }

    fn check_wrt(&self, wrt: &Support) -> Result<()> {
        if wrt.dim() != self.theta_dim {
            return Err(Error::SupportMismatch(format!(
                "wrt dim {} does not match parameter dim {}",
                wrt.dim(),
                self.theta_dim
            )));
        }
        if let Some(&r) = wrt.rows().iter().find(|&&r| (r as usize) >= self.theta_rows) {
            return Err(Error::SupportMismatch(format!(
                "wrt row {r} outside the tape's parameter rows (0..{})",
                self.theta_rows
            )));
        }
        Ok(())
    }

    /// Scatter the recorded gather adjoints of `slot` into a vector over
    /// `wrt`. Rows the loss never touched stay exactly zero.
    fn extract(&self, info: &BackwardInfo, slot: ParamSlot, wrt: &Arc<Support>) -> FlatVector {
        let mut out = FlatVector::zeros(wrt.clone());
        let d = wrt.dim();
        for (rows, adj) in info.contribs(slot) {
            let m = self.val(*adj);
            debug_assert_eq!(m.cols(), d);
            for (t, &row) in rows.iter().enumerate() {
                if let Some(pos) = wrt.position(row) {
                    let dst = &mut out.values_mut()[pos * d..(pos + 1) * d];
                    for (o, v) in dst.iter_mut().zip(m.row(t)) {
                        *o += v;
                    }
                }
            }
        }
        out
    }

    /// Append the scalar ⟨∇_slot loss, v⟩ for an already-emitted backward
    /// sweep; `v` enters as constants, so the scalar is differentiable with
    /// respect to both parameter slots.
    fn push_grad_dot(&mut self, info: &BackwardInfo, slot: ParamSlot, v: &FlatVector) -> Result<NodeId> {
        let d = v.support().dim();
        let mut total: Option<NodeId> = None;
        for (rows, adj) in info.contribs(slot).to_vec() {
            let mut aligned = DenseMat::zeros(rows.len(), d);
            for (t, &row) in rows.iter().enumerate() {
                if let Some(block) = v.row_block(row) {
                    aligned.row_mut(t).copy_from_slice(block);
                }
            }
            let c = self.push_const(aligned)?;
            let prod = self.push_mul(adj, c)?;
            let term = self.push(Node::Sum { x: prod })?;
            total = Some(match total {
                None => term,
                Some(t) => self.push(Node::Add { a: t, b: term })?,
            });
        }
        match total {
            Some(t) => Ok(t),
            None => self.push_const(DenseMat::scalar(0.0)),
        }
    }
}

fn accumulate(tape: &mut Tape, adj: &mut [Option<NodeId>], target: NodeId, d: NodeId) -> Result<()> {
    adj[target] = Some(match adj[target] {
        None => d,
        Some(prev) => tape.push(Node::Add { a: prev, b: d })?,
    });
    Ok(())
}

/// Evaluate one node from the values of its inputs. Shape errors are
/// reported as malformed programs naming the node.
fn compute_value(node: &Node, vals: &[DenseMat], id: NodeId) -> Result<DenseMat> {
    let shape_err = |msg: String| Error::MalformedProgram(format!("node {id}: {msg}"));
    Ok(match node {
        Node::Const | Node::GatherParam { .. } => {
            unreachable!("leaf values are recorded, not computed")
        }
        Node::Gather { x, rows } => {
            let m = &vals[*x];
            if let Some(&r) = rows.iter().find(|&&r| (r as usize) >= m.rows()) {
                return Err(shape_err(format!("gather row {r} out of range 0..{}", m.rows())));
            }
            m.gather(rows)
        }
        Node::Scatter { x, rows, out_rows } => vals[*x].scatter(rows, *out_rows),
        Node::SpMM { m, x, transposed } => {
            let xm = &vals[*x];
            let expect = if *transposed { m.n_rows() } else { m.n_cols() };
            if xm.rows() != expect {
                return Err(shape_err(format!(
                    "spmm expects {expect} dense rows, got {}",
                    xm.rows()
                )));
            }
            m.matmul(xm, *transposed)
        }
        Node::Scale { x, c } => vals[*x].scale(*c),
        Node::Add { a, b } => {
            if vals[*a].shape() != vals[*b].shape() {
                return Err(shape_err(format!(
                    "add shape mismatch {:?} vs {:?}",
                    vals[*a].shape(),
                    vals[*b].shape()
                )));
            }
            vals[*a].add(&vals[*b])
        }
        Node::Mul { a, b } => {
            let (sa, sb) = (vals[*a].shape(), vals[*b].shape());
            let ok = sa == sb || sb == (1, 1) || (sb.1 == 1 && sb.0 == sa.0);
            if !ok {
                return Err(shape_err(format!("mul shape mismatch {sa:?} vs {sb:?}")));
            }
            vals[*a].mul_broadcast(&vals[*b])
        }
        Node::RowDot { a, b } => {
            if vals[*a].shape() != vals[*b].shape() {
                return Err(shape_err(format!(
                    "row_dot shape mismatch {:?} vs {:?}",
                    vals[*a].shape(),
                    vals[*b].shape()
                )));
            }
            vals[*a].row_dot(&vals[*b])
        }
        Node::Sigmoid { x } => vals[*x].map(sigmoid),
        Node::Ln { x } => vals[*x].map(f64::ln),
        Node::Recip { x } => vals[*x].map(f64::recip),
        Node::Neg { x } => vals[*x].neg(),
        Node::Sum { x } => DenseMat::scalar(vals[*x].sum()),
    })
}

/// Evaluate `program` at `theta` (plus the optional row-sparse offset) and
/// record the trace. The offset's support must lie inside the table's rows;
/// a missing offset behaves as zero.
pub fn evaluate(program: &Program, theta: TableView, delta: Option<&FlatVector>) -> Result<(f64, Tape)> {
    if let Some(d) = delta {
        if d.support().dim() != theta.dim() {
            return Err(Error::SupportMismatch(format!(
                "offset dim {} vs parameter dim {}",
                d.support().dim(),
                theta.dim()
            )));
        }
        if let Some(&r) = d.support().rows().iter().find(|&&r| (r as usize) >= theta.rows()) {
            return Err(Error::SupportMismatch(format!(
                "offset row {r} outside parameter rows 0..{}",
                theta.rows()
            )));
        }
    }

    let mut tape = Tape {
        nodes: Vec::with_capacity(program.len()),
        vals: Vec::with_capacity(program.len()),
        output: 0,
        theta_rows: theta.rows(),
        theta_dim: theta.dim(),
        first_backward: None,
    };

    for instr in &program.instrs {
        match instr {
            Instr::Const(m) => {
                tape.push_const(m.clone())?;
            }
            Instr::GatherTheta(rows) => {
                let mut m = DenseMat::zeros(rows.len(), theta.dim());
                for (t, &r) in rows.iter().enumerate() {
                    if (r as usize) >= theta.rows() {
                        return Err(Error::MalformedProgram(format!(
                            "unknown row id {r} (parameter table has {} rows)",
                            theta.rows()
                        )));
                    }
                    m.row_mut(t).copy_from_slice(theta.row(r as usize));
                }
                tape.push_value(Node::GatherParam { slot: ParamSlot::Theta, rows: rows.clone() }, m)?;
            }
            Instr::GatherDelta(rows) => {
                let mut m = DenseMat::zeros(rows.len(), theta.dim());
                if let Some(dv) = delta {
                    for (t, &r) in rows.iter().enumerate() {
                        if (r as usize) >= theta.rows() {
                            return Err(Error::MalformedProgram(format!(
                                "unknown row id {r} (parameter table has {} rows)",
                                theta.rows()
                            )));
                        }
                        if let Some(block) = dv.row_block(r) {
                            m.row_mut(t).copy_from_slice(block);
                        }
                    }
                }
                tape.push_value(Node::GatherParam { slot: ParamSlot::Delta, rows: rows.clone() }, m)?;
            }
            Instr::Gather(x, rows) => {
                tape.push(Node::Gather { x: x.0, rows: rows.clone() })?;
            }
            Instr::SpMM(m, x) => {
                tape.push(Node::SpMM { m: m.clone(), x: x.0, transposed: false })?;
            }
            Instr::Scale(x, c) => {
                tape.push(Node::Scale { x: x.0, c: *c })?;
            }
            Instr::Add(a, b) => {
                tape.push(Node::Add { a: a.0, b: b.0 })?;
            }
            Instr::Mul(a, b) => {
                tape.push_mul(a.0, b.0)?;
            }
            Instr::RowDot(a, b) => {
                tape.push(Node::RowDot { a: a.0, b: b.0 })?;
            }
            Instr::Sigmoid(x) => {
                tape.push(Node::Sigmoid { x: x.0 })?;
            }
            Instr::Ln(x) => {
                tape.push(Node::Ln { x: x.0 })?;
            }
            Instr::Neg(x) => {
                tape.push(Node::Neg { x: x.0 })?;
            }
            Instr::Sum(x) => {
                tape.push(Node::Sum { x: x.0 })?;
            }
        }
    }

    tape.output = program.output.0;
    if !tape.vals[tape.output].is_scalar() {
        return Err(Error::MalformedProgram(format!(
            "program output has shape {:?}, expected scalar",
            tape.vals[tape.output].shape()
        )));
    }
    let loss = tape.output_value();
    Ok((loss, tape))
}

/// ∂loss/∂θ over `wrt`; untouched rows are exactly zero.
pub fn gradient(tape: &mut Tape, wrt: &Arc<Support>) -> Result<FlatVector> {
    gradient_slot(tape, ParamSlot::Theta, wrt)
}

/// ∂loss/∂δ over `wrt`.
pub fn gradient_delta(tape: &mut Tape, wrt: &Arc<Support>) -> Result<FlatVector> {
    gradient_slot(tape, ParamSlot::Delta, wrt)
}

fn gradient_slot(tape: &mut Tape, slot: ParamSlot, wrt: &Arc<Support>) -> Result<FlatVector> {
    tape.check_wrt(wrt)?;
    tape.ensure_first_backward()?;
    let info = tape.first_backward.clone().expect("backward just ensured");
    Ok(tape.extract(&info, slot, wrt))
}

/// Hessian-vector product (∂²loss/∂δ∂δᵀ)·v, computed as the gradient with
/// respect to δ of ⟨∇_δ loss, v⟩ with v held constant.
pub fn hvp(program: &Program, theta: TableView, delta: Option<&FlatVector>, v: &FlatVector) -> Result<FlatVector> {
    let (_, tape) = evaluate(program, theta, delta)?;
    let mut oracle = HvpOracle::new(tape)?;
    oracle.apply(v)
}

/// Mixed second-order product: the gradient with respect to θ of
/// ⟨∇_δ loss, v⟩. The result spans the whole parameter table.
pub fn mixed_vhp(program: &Program, theta: TableView, delta: Option<&FlatVector>, v: &FlatVector) -> Result<FlatVector> {
    let full = Support::full(theta.rows(), theta.dim());
    let (_, tape) = evaluate(program, theta, delta)?;
    let mut oracle = HvpOracle::new(tape)?;
    oracle.apply_mixed(v, &full)
}

/// Repeated second-order products against one recorded trace.
///
/// The forward tape and the first backward sweep are shared across calls;
/// each product appends the ⟨∇_δ loss, v⟩ scalar and its backward sweep,
/// extracts the result, and truncates the tape back to the shared prefix.
pub struct HvpOracle {
    tape: Tape,
    info: BackwardInfo,
    base: usize,
}

impl HvpOracle {
    pub fn new(mut tape: Tape) -> Result<Self> {
        tape.ensure_first_backward()?;
        let info = tape.first_backward.clone().expect("backward just ensured");
        let base = tape.mark();
        Ok(HvpOracle { tape, info, base })
    }

    /// Loss value of the underlying trace.
    pub fn loss(&self) -> f64 {
        self.tape.output_value()
    }

    /// First-order gradient over `wrt` for either slot, from the shared sweep.
    pub fn grad(&self, slot: ParamSlot, wrt: &Arc<Support>) -> Result<FlatVector> {
        self.tape.check_wrt(wrt)?;
        Ok(self.tape.extract(&self.info, slot, wrt))
    }

    /// (∂²loss/∂δ∂δᵀ)·v over v's support.
    pub fn apply(&mut self, v: &FlatVector) -> Result<FlatVector> {
        self.second_order(v, ParamSlot::Delta, &v.support().clone())
    }

    /// vᵀ(∂²loss/∂δ∂θᵀ) over `wrt` rows of θ.
    pub fn apply_mixed(&mut self, v: &FlatVector, wrt: &Arc<Support>) -> Result<FlatVector> {
        self.second_order(v, ParamSlot::Theta, wrt)
    }

    fn second_order(&mut self, v: &FlatVector, out_slot: ParamSlot, wrt: &Arc<Support>) -> Result<FlatVector> {
        self.tape.check_wrt(v.support())?;
        self.tape.check_wrt(wrt)?;
        let result = (|| {
            let s = self.tape.push_grad_dot(&self.info, ParamSlot::Delta, v)?;
            let second = self.tape.emit_backward(s)?;
            Ok(self.tape.extract(&second, out_slot, wrt))
        })();
        self.tape.truncate(self.base);
        result
    }
}

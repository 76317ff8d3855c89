//! Differentiable program descriptions.
//!
//! A program is a straight-line instruction list over the supported op set,
//! independent of any particular parameter binding: the same program can be
//! evaluated against many parameter tables and offsets (grid slices, finite
//! differences, perturbed replays). Row ids and shapes are validated when
//! the program is lowered onto a tape.

use std::sync::Arc;

use crate::autodiff::dense::DenseMat;
use crate::sparse::Csr;

/// Handle to an instruction's output within one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Instr {
    /// Constant operand embedded in the program.
    Const(DenseMat),
    /// Gather rows of the bound parameter table θ.
    GatherTheta(Arc<Vec<u32>>),
    /// Gather rows of the bound offset δ; rows outside the offset's support
    /// evaluate to zero (and the whole node is zero when no offset is bound).
    GatherDelta(Arc<Vec<u32>>),
    /// Gather rows of an intermediate value.
    Gather(VarId, Arc<Vec<u32>>),
    /// Constant sparse matrix times a dense intermediate.
    SpMM(Arc<Csr>, VarId),
    Scale(VarId, f64),
    Add(VarId, VarId),
    /// Elementwise product; the second operand may broadcast (column vector
    /// across columns, or scalar).
    Mul(VarId, VarId),
    RowDot(VarId, VarId),
    Sigmoid(VarId),
    Ln(VarId),
    Neg(VarId),
    Sum(VarId),
}

#[derive(Debug, Clone)]
pub struct Program {
    pub(crate) instrs: Vec<Instr>,
    pub(crate) output: VarId,
}

impl Program {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }
}

/// Builds programs instruction by instruction.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    instrs: Vec<Instr>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, i: Instr) -> VarId {
        self.instrs.push(i);
        VarId(self.instrs.len() - 1)
    }

    pub fn constant(&mut self, m: DenseMat) -> VarId {
        self.push(Instr::Const(m))
    }

    pub fn scalar(&mut self, v: f64) -> VarId {
        self.constant(DenseMat::scalar(v))
    }

    pub fn gather_theta(&mut self, rows: Arc<Vec<u32>>) -> VarId {
        self.push(Instr::GatherTheta(rows))
    }

    pub fn gather_delta(&mut self, rows: Arc<Vec<u32>>) -> VarId {
        self.push(Instr::GatherDelta(rows))
    }

    pub fn gather(&mut self, x: VarId, rows: Arc<Vec<u32>>) -> VarId {
        self.push(Instr::Gather(x, rows))
    }

    pub fn spmm(&mut self, m: Arc<Csr>, x: VarId) -> VarId {
        self.push(Instr::SpMM(m, x))
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> VarId {
        self.push(Instr::Scale(x, c))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        self.push(Instr::Add(a, b))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        self.push(Instr::Mul(a, b))
    }

    pub fn row_dot(&mut self, a: VarId, b: VarId) -> VarId {
        self.push(Instr::RowDot(a, b))
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        self.push(Instr::Sigmoid(x))
    }

    pub fn ln(&mut self, x: VarId) -> VarId {
        self.push(Instr::Ln(x))
    }

    pub fn neg(&mut self, x: VarId) -> VarId {
        self.push(Instr::Neg(x))
    }

    pub fn sum(&mut self, x: VarId) -> VarId {
        self.push(Instr::Sum(x))
    }

    pub fn finish(self, output: VarId) -> Program {
        assert!(output.0 < self.instrs.len(), "program output out of range");
        Program { instrs: self.instrs, output }
    }
}

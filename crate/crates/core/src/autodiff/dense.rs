//! Row-major dense f64 matrices backing tape node values.
//!
//! Vectors are (n, 1) matrices and scalars are (1, 1); the tape decides
//! broadcast behaviour from these shapes.

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        DenseMat { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        DenseMat { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "dense shape/data mismatch");
        DenseMat { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMat { rows: r, cols: c, data }
    }

    /// Column vector, shape (n, 1).
    pub fn col_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        DenseMat { rows: n, cols: 1, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn as_scalar(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        DenseMat { rows: self.rows, cols: self.cols, data }
    }

    /// Elementwise product. `other` may be the same shape, an (n, 1) column
    /// broadcast across this matrix's columns, or a (1, 1) scalar.
    pub fn mul_broadcast(&self, other: &Self) -> Self {
        if self.shape() == other.shape() {
            let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
            return DenseMat { rows: self.rows, cols: self.cols, data };
        }
        if other.is_scalar() {
            return self.scale(other.data[0]);
        }
        assert!(
            other.cols == 1 && other.rows == self.rows,
            "mul broadcast shape mismatch: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = self.clone();
        for r in 0..self.rows {
            let s = other.data[r];
            for v in out.row_mut(r) {
                *v *= s;
            }
        }
        out
    }

    /// Row-wise dot product of two (n, d) matrices, yielding (n, 1).
    pub fn row_dot(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "row_dot shape mismatch");
        let mut data = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut acc = 0.0;
            for (a, b) in self.row(r).iter().zip(other.row(r)) {
                acc += a * b;
            }
            data.push(acc);
        }
        DenseMat { rows: self.rows, cols: 1, data }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn gather(&self, rows: &[u32]) -> Self {
        let mut out = DenseMat::zeros(rows.len(), self.cols);
        for (t, &r) in rows.iter().enumerate() {
            out.row_mut(t).copy_from_slice(self.row(r as usize));
        }
        out
    }

    /// Scatter-add rows of `self` into a zero matrix with `out_rows` rows;
    /// repeated row ids accumulate.
    pub fn scatter(&self, rows: &[u32], out_rows: usize) -> Self {
        assert_eq!(rows.len(), self.rows, "scatter row count mismatch");
        let mut out = DenseMat::zeros(out_rows, self.cols);
        for (t, &r) in rows.iter().enumerate() {
            let dst = out.row_mut(r as usize);
            for (d, s) in dst.iter_mut().zip(self.row(t)) {
                *d += s;
            }
        }
        out
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

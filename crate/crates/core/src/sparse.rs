//! Compressed sparse row matrices.
//!
//! The only consumer is the graph propagation step, where the matrix is the
//! symmetrically normalized adjacency: a constant operand that is never
//! differentiated. Values are f64 and multiplication is deterministic
//! (fixed accumulation order).

use crate::autodiff::dense::DenseMat;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    /// Build from COO triplets. Entries are sorted by (row, col); duplicate
    /// coordinates are summed.
    pub fn from_coo(n_rows: usize, n_cols: usize, mut entries: Vec<(u32, u32, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        for &(r, c, v) in &entries {
            assert!((r as usize) < n_rows && (c as usize) < n_cols, "entry out of bounds");
            if let (Some(&last_c), true) = (col_idx.last(), row_ptr[r as usize + 1] > 0) {
                // same row as previous entry and same column: coalesce
                if last_c == c && row_ptr[r as usize + 1] == col_idx.len() {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r as usize + 1] = col_idx.len();
        }
        // forward-fill empty rows
        for i in 1..=n_rows {
            if row_ptr[i] < row_ptr[i - 1] {
                row_ptr[i] = row_ptr[i - 1];
            }
        }
        Csr { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Value at (r, c), zero when the coordinate holds no entry.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&(c as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn iter_row(&self, r: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// Sparse-matrix × dense-matrix product, `self · x` (or `selfᵀ · x`).
    pub fn matmul(&self, x: &DenseMat, transpose: bool) -> DenseMat {
        let d = x.cols();
        if transpose {
            assert_eq!(x.rows(), self.n_rows, "spmm^T shape mismatch");
            let mut out = DenseMat::zeros(self.n_cols, d);
            for r in 0..self.n_rows {
                let xr = x.row(r);
                for (c, v) in self.iter_row(r) {
                    let or = out.row_mut(c as usize);
                    for k in 0..d {
                        or[k] += v * xr[k];
                    }
                }
            }
            out
        } else {
            assert_eq!(x.rows(), self.n_cols, "spmm shape mismatch");
            let mut out = DenseMat::zeros(self.n_rows, d);
            for r in 0..self.n_rows {
                let lo = self.row_ptr[r];
                let hi = self.row_ptr[r + 1];
                let or = out.row_mut(r);
                for e in lo..hi {
                    let v = self.values[e];
                    let xr = x.row(self.col_idx[e] as usize);
                    for k in 0..d {
                        or[k] += v * xr[k];
                    }
                }
            }
            out
        }
    }

    /// Dense copy, for small-scale oracles in tests.
    pub fn to_dense(&self) -> DenseMat {
        let mut m = DenseMat::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.iter_row(r) {
                m.row_mut(r)[c as usize] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coo_roundtrip_and_lookup() {
        let m = Csr::from_coo(3, 3, vec![(0, 1, 2.0), (2, 0, 5.0), (0, 1, 1.0), (1, 1, 4.0)]);
        assert_eq!(m.nnz(), 3); // duplicate (0,1) coalesced
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 1), 4.0);
        assert_eq!(m.get(2, 0), 5.0);
        assert_eq!(m.get(2, 2), 0.0);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = Csr::from_coo(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let x = DenseMat::from_rows(&[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 30.0]]);
        let y = m.matmul(&x, false);
        assert_eq!(y.row(0), &[7.0, 70.0]);
        assert_eq!(y.row(1), &[-2.0, -20.0]);

        let xt = DenseMat::from_rows(&[&[1.0], &[2.0]]);
        let yt = m.matmul(&xt, true);
        assert_eq!(yt.row(0), &[1.0]);
        assert_eq!(yt.row(1), &[-2.0]);
        assert_eq!(yt.row(2), &[2.0]);
    }
}

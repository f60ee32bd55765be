//! Compressed sparse rows for bag-of-words style input features.

use super::tensor::{axpy, dot, Tensor2};

/// Row-compressed copy of a dense matrix; zero entries are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(t: &Tensor2) -> Self {
        let mut indptr = Vec::with_capacity(t.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in t.rows_iter() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { rows: t.rows(), cols: t.cols(), indptr, indices, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn to_dense(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            let row = out.row_mut(r);
            for (&j, &v) in idx.iter().zip(val) {
                row[j] = v;
            }
        }
        out
    }

    /// `self · W[:, start..start+cols]ᵀ`, i.e. every row pushed through the
    /// column block of `w` that lines up with this matrix.
    pub fn mul_block_t(&self, w: &Tensor2, start: usize) -> Tensor2 {
        assert!(start + self.cols <= w.cols());
        // transposed block so each nonzero touches one contiguous row
        let wt = block_transpose(w, start, self.cols);
        let out_dim = w.rows();
        let mut out = Tensor2::zeros(self.rows, out_dim);
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            let o = out.row_mut(r);
            for (&j, &v) in idx.iter().zip(val) {
                axpy(v, wt.row(j), o);
            }
        }
        out
    }

    /// `grad[:, start..start+cols] += dyᵀ · self`
    pub fn accumulate_block_grad(&self, dy: &Tensor2, grad: &mut Tensor2, start: usize) {
        assert_eq!(dy.rows(), self.rows);
        assert_eq!(dy.cols(), grad.rows());
        assert!(start + self.cols <= grad.cols());
        let mut gt = Tensor2::zeros(self.cols, grad.rows());
        for r in 0..self.rows {
            let (idx, val) = self.row(r);
            let d = dy.row(r);
            for (&j, &v) in idx.iter().zip(val) {
                axpy(v, d, gt.row_mut(j));
            }
        }
        for o in 0..grad.rows() {
            let g = grad.row_mut(o);
            for j in 0..self.cols {
                g[start + j] += gt.get(j, o);
            }
        }
    }
}

fn block_transpose(w: &Tensor2, start: usize, width: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(width, w.rows());
    for o in 0..w.rows() {
        let row = &w.row(o)[start..start + width];
        for (j, &v) in row.iter().enumerate() {
            out.set(j, o, v);
        }
    }
    out
}

/// Feature rows that can be mixed into a dense accumulator.
///
/// Attentive aggregation consumes raw (often sparse) features on the first
/// layer and dense hidden activations on later ones.
pub trait RowSource {
    fn row_count(&self) -> usize;
    fn dim(&self) -> usize;
    /// `out += alpha * row(r)`
    fn axpy_row(&self, r: usize, alpha: f64, out: &mut [f64]);
    /// `row(r) · g`
    fn dot_row(&self, r: usize, g: &[f64]) -> f64;
}

impl RowSource for Tensor2 {
    fn row_count(&self) -> usize {
        self.rows()
    }

    fn dim(&self) -> usize {
        self.cols()
    }

    #[inline]
    fn axpy_row(&self, r: usize, alpha: f64, out: &mut [f64]) {
        axpy(alpha, self.row(r), out);
    }

    #[inline]
    fn dot_row(&self, r: usize, g: &[f64]) -> f64 {
        dot(self.row(r), g)
    }
}

impl RowSource for SparseRows {
    fn row_count(&self) -> usize {
        self.rows
    }

    fn dim(&self) -> usize {
        self.cols
    }

    #[inline]
    fn axpy_row(&self, r: usize, alpha: f64, out: &mut [f64]) {
        let (idx, val) = self.row(r);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] += alpha * v;
        }
    }

    #[inline]
    fn dot_row(&self, r: usize, g: &[f64]) -> f64 {
        let (idx, val) = self.row(r);
        idx.iter().zip(val).map(|(&j, &v)| v * g[j]).sum()
    }
}

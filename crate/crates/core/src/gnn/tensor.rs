use std::ops::{Index, IndexMut};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length must equal rows * cols");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (oj, bj) in o.iter_mut().zip(other.row(k)) {
                    *oj += a * bj;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "t_matmul row mismatch");
        let mut out = Tensor::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (oj, bj) in o.iter_mut().zip(b_row) {
                    *oj += a * bj;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.cols, "matmul_t column mismatch");
        Tensor::from_fn(self.rows, other.rows, |i, j| {
            self.row(i).iter().zip(other.row(j)).map(|(a, b)| a * b).sum()
        })
    }
}

impl Index<(usize, usize)> for Tensor {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Tensor {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_start: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_start = vec![0; n + 1];
        let mut col = Vec::with_capacity(sorted.len());
        let mut val: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n && c < n, "triplet out of range");
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
                continue;
            }
            col.push(c);
            val.push(v);
            row_start[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n {
            row_start[r + 1] += row_start[r];
        }
        Self { n, row_start, col, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for k in self.row_start[r]..self.row_start[r + 1] {
                out.push((r, self.col[k], self.val[k]));
            }
        }
        out
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_start[r]..self.row_start[r + 1];
        match self.col[range.clone()].binary_search(&c) {
            Ok(k) => self.val[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            t[(r, c)] = v;
        }
        t
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &Tensor) -> Tensor {
        assert_eq!(self.n, dense.rows(), "sparse matmul dimension mismatch");
        let w = dense.cols();
        let mut out = Tensor::zeros(self.n, w);
        for r in 0..self.n {
            let o = &mut out.data_mut()[r * w..(r + 1) * w];
            for k in self.row_start[r]..self.row_start[r + 1] {
                let a = self.val[k];
                for (oj, bj) in o.iter_mut().zip(dense.row(self.col[k])) {
                    *oj += a * bj;
                }
            }
        }
        out
    }

    /// `selfᵀ · dense`.
    pub fn t_matmul(&self, dense: &Tensor) -> Tensor {
        assert_eq!(self.n, dense.rows(), "sparse matmul dimension mismatch");
        let w = dense.cols();
        let mut out = Tensor::zeros(self.n, w);
        for r in 0..self.n {
            let src = dense.row(r).to_vec();
            for k in self.row_start[r]..self.row_start[r + 1] {
                let a = self.val[k];
                let c = self.col[k];
                let o = &mut out.data_mut()[c * w..(c + 1) * w];
                for (oj, bj) in o.iter_mut().zip(&src) {
                    *oj += a * bj;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 2.0);
        let b = Tensor::from_fn(4, 2, |i, j| (i as f64) - (j as f64) * 1.5);
        let ab = a.matmul(&b);
        assert_eq!(ab[(1, 1)], (0..4).map(|k| a[(1, k)] * b[(k, 1)]).sum::<f64>());
        let at = Tensor::from_fn(4, 3, |i, j| a[(j, i)]);
        assert_eq!(at.t_matmul(&b), ab);
        let bt = Tensor::from_fn(2, 4, |i, j| b[(j, i)]);
        assert_eq!(a.matmul_t(&bt), ab);
    }

    #[test]
    fn sparse_matches_dense() {
        let s = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (0, 2, 2.0), (2, 1, -1.0), (0, 2, 0.5), (1, 1, 3.0)]);
        assert_eq!(s.get(0, 2), 2.5);
        assert_eq!(s.nnz(), 4);
        let d = Tensor::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(s.matmul(&d), s.to_dense().matmul(&d));
        assert_eq!(s.t_matmul(&d), s.to_dense().t_matmul(&d));
    }
}

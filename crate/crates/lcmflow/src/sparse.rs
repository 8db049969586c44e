//! Minimal CSR sparse matrix support for the linearized flow systems.

/// Compressed sparse row matrix with f64 values. Column indices are sorted
/// within each row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Build from per-row (col, value) lists. Each row must be sorted by
    /// column and free of duplicates.
    pub fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), nrows);
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(c, v) in row {
                debug_assert!(c < ncols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, values }
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols];
        for &c in &self.indices {
            counts[c] += 1;
        }
        let mut indptr = vec![0usize; self.ncols + 1];
        for c in 0..self.ncols {
            indptr[c + 1] = indptr[c] + counts[c];
        }
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut next = indptr.clone();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let dst = next[*c];
                indices[dst] = i;
                values[dst] = *v;
                next[*c] += 1;
            }
        }
        Csr { nrows: self.ncols, ncols: self.nrows, indptr, indices, values }
    }

    /// C = alpha*A + beta*B (same shape).
    pub fn add_scaled(a: &Csr, alpha: f64, b: &Csr, beta: f64) -> Csr {
        assert_eq!(a.nrows, b.nrows);
        assert_eq!(a.ncols, b.ncols);
        let n = a.nrows;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(a.nnz() + b.nnz());
        let mut values = Vec::with_capacity(a.nnz() + b.nnz());
        indptr.push(0);
        for i in 0..n {
            let (ca, va) = a.row(i);
            let (cb, vb) = b.row(i);
            let (mut p, mut q) = (0usize, 0usize);
            while p < ca.len() || q < cb.len() {
                if q >= cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    indices.push(ca[p]);
                    values.push(alpha * va[p]);
                    p += 1;
                } else if p >= ca.len() || cb[q] < ca[p] {
                    indices.push(cb[q]);
                    values.push(beta * vb[q]);
                    q += 1;
                } else {
                    indices.push(ca[p]);
                    values.push(alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            indptr.push(indices.len());
        }
        Csr { nrows: n, ncols: a.ncols, indptr, indices, values }
    }

    /// Sparse product A*B via row-wise accumulation with a dense workspace.
    pub fn multiply(a: &Csr, b: &Csr) -> Csr {
        assert_eq!(a.ncols, b.nrows);
        let n = a.nrows;
        let m = b.ncols;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut acc = vec![0.0f64; m];
        let mut marked: Vec<usize> = Vec::new();
        for i in 0..n {
            let (ca, va) = a.row(i);
            for (k, av) in ca.iter().zip(va) {
                let (cb, vb) = b.row(*k);
                for (j, bv) in cb.iter().zip(vb) {
                    if acc[*j] == 0.0 && !marked.contains(j) {
                        marked.push(*j);
                    }
                    acc[*j] += av * bv;
                }
            }
            marked.sort_unstable();
            for &j in &marked {
                indices.push(j);
                values.push(acc[j]);
                acc[j] = 0.0;
            }
            marked.clear();
            indptr.push(indices.len());
        }
        Csr { nrows: n, ncols: m, indptr, indices, values }
    }

    /// (A + A^T)/2; A must be square.
    pub fn symmetrize(&self) -> Csr {
        assert_eq!(self.nrows, self.ncols);
        let t = self.transpose();
        Csr::add_scaled(self, 0.5, &t, 0.5)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                out[i][*c] = *v;
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for i in 0..self.nrows.min(self.ncols) {
            let (cols, vals) = self.row(i);
            if let Ok(p) = cols.binary_search(&i) {
                d[i] = vals[p];
            }
        }
        d
    }
}

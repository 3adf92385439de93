//! Compressed sparse row storage for adjacency and feature matrices.
//!
//! Only the handful of kernels the pipeline needs are provided: row access,
//! sparse × dense products, transposition and the sparse Gram product.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate coordinates
    /// are summed; explicit zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= nrows || c >= ncols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *data.last_mut().expect("previous entry") += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            data.push(v);
            last = Some((r, c));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        };
        m.prune_zeros();
        Ok(m)
    }

    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let (nrows, ncols) = dense.dim();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in dense.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    fn prune_zeros(&mut self) {
        if !self.data.contains(&0.0) {
            return;
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        indptr.push(0);
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.data[k] != 0.0 {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr.push(indices.len());
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` over stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (i, j, v) in self.iter() {
            out[[i, j]] = v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for (i, j, v) in self.iter() {
            let slot = next[j];
            indices[slot] = i;
            data[slot] = v;
            next[j] += 1;
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            data,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self · x` for a dense vector.
    pub fn mul_vec(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.ncols, "vector length must match column count");
        Array1::from_shape_fn(self.nrows, |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
        })
    }

    /// `self · b` for a dense right-hand side.
    pub fn mul_dense(&self, b: &Array2<f64>) -> Array2<f64> {
        assert_eq!(b.nrows(), self.ncols, "inner dimensions must agree");
        let mut out = Array2::zeros((self.nrows, b.ncols()));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut out_row = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &b.row(j));
            }
        }
        out
    }

    /// Sparse Gram product `selfᵀ · self` (Gustavson accumulation by rows of
    /// the transpose).
    pub fn gram(&self) -> Self {
        let t = self.transpose();
        let m = self.ncols;
        let mut acc = vec![0.0f64; m];
        let mut touched = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(m + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for a in 0..m {
            let (rows, avals) = t.row(a);
            for (&i, &ya) in rows.iter().zip(avals) {
                let (cols, vals) = self.row(i);
                for (&b, &yb) in cols.iter().zip(vals) {
                    if !touched[b] {
                        touched[b] = true;
                        pattern.push(b);
                    }
                    acc[b] += ya * yb;
                }
            }
            pattern.sort_unstable();
            for &b in &pattern {
                if acc[b] != 0.0 {
                    indices.push(b);
                    data.push(acc[b]);
                }
                acc[b] = 0.0;
                touched[b] = false;
            }
            pattern.clear();
            indptr.push(indices.len());
        }
        Self {
            nrows: m,
            ncols: m,
            indptr,
            indices,
            data,
        }
    }

    /// Dense `n × cols.len()` copy of the selected columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Array2<f64> {
        let mut position = vec![usize::MAX; self.ncols];
        for (p, &c) in cols.iter().enumerate() {
            position[c] = p;
        }
        let mut out = Array2::zeros((self.nrows, cols.len()));
        for (i, j, v) in self.iter() {
            let p = position[j];
            if p != usize::MAX {
                out[[i, p]] = v;
            }
        }
        out
    }

    /// Keeps only the rows and columns listed in `keep` (in that order).
    pub fn submatrix(&self, keep_rows: &[usize], keep_cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (p, &c) in keep_cols.iter().enumerate() {
            col_map[c] = p;
        }
        let mut indptr = Vec::with_capacity(keep_rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for &i in keep_rows {
            let (cols, vals) = self.row(i);
            let mut row: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| col_map[j] != usize::MAX)
                .map(|(&j, &v)| (col_map[j], v))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                indices.push(j);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: keep_rows.len(),
            ncols: keep_cols.len(),
            indptr,
            indices,
            data,
        }
    }
}

//! Compressed-sparse-row matrices, dense vectors, the diagonal preconditioner,
//! and the reproducible test problems every solver runs on.

pub mod io;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major compressed sparse matrix. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking the structural invariants.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::MalformedMatrix(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::MalformedMatrix("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[n_rows] != values.len() {
            return Err(Error::MalformedMatrix(format!(
                "row_offsets ends at {} but there are {} column indices and {} values",
                row_offsets[n_rows],
                col_indices.len(),
                values.len()
            )));
        }
        for row in 0..n_rows {
            let (start, end) = (row_offsets[row], row_offsets[row + 1]);
            if start > end {
                return Err(Error::MalformedMatrix(format!(
                    "row_offsets decreases at row {row}"
                )));
            }
            let cols = &col_indices[start..end];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::MalformedMatrix(format!(
                    "row {row} has a column index >= {n_cols}"
                )));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::MalformedMatrix(format!(
                    "column indices of row {row} are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::MalformedMatrix(format!(
                    "entry ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// A diagonal matrix with the given entries on the diagonal.
    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// A matrix with no stored entries.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
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

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry `(row, col)`, zero when not stored.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        match self.col_indices[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    /// The stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t).expect("transpose of a valid matrix is valid")
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0f64; self.n_cols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// `y = A x`, accumulated sequentially in row order so results are bitwise reproducible.
    pub fn spmv(&self, x: &[f64]) -> Result<DenseVector> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(DenseVector(y))
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                what: "spmv input length vs matrix columns",
                expected: self.n_cols,
                actual: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                what: "spmv output length vs matrix rows",
                expected: self.n_rows,
                actual: y.len(),
            });
        }
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[row]..self.row_offsets[row + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *out = acc;
        }
        Ok(())
    }

    /// `r = b - A x`.
    pub fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) -> Result<()> {
        if b.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                what: "right-hand side length vs matrix rows",
                expected: self.n_rows,
                actual: b.len(),
            });
        }
        self.spmv_into(x, r)?;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        Ok(())
    }
}

/// Dense vector of doubles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Wraps `values`, rejecting NaN and infinite entries.
    pub fn try_from_vec(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("vector entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.0)
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Jacobi (diagonal) preconditioner, stored as the reciprocal diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalPreconditioner {
    inverse_diagonal: Vec<f64>,
}

impl DiagonalPreconditioner {
    pub fn from_inverse_diagonal(inverse_diagonal: Vec<f64>) -> Result<Self> {
        if let Some(row) = inverse_diagonal
            .iter()
            .position(|v| !v.is_finite() || *v == 0.0)
        {
            return Err(Error::SingularPreconditioner { row });
        }
        Ok(Self { inverse_diagonal })
    }

    /// `M = I`.
    pub fn identity(n: usize) -> Self {
        Self {
            inverse_diagonal: vec![1.0; n],
        }
    }

    pub fn inverse_diagonal(&self) -> &[f64] {
        &self.inverse_diagonal
    }

    pub fn len(&self) -> usize {
        self.inverse_diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inverse_diagonal.is_empty()
    }

    /// `z = M⁻¹ r`.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inverse_diagonal) {
            *zi = ri * di;
        }
    }
}

/// Builds the Jacobi preconditioner `M = diag(A)`.
pub fn jacobi_preconditioner(a: &CsrMatrix) -> Result<DiagonalPreconditioner> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimensionMismatch {
            what: "preconditioner requires a square matrix",
            expected: a.n_rows,
            actual: a.n_cols,
        });
    }
    let inv = (0..a.n_rows)
        .map(|i| {
            let d = a.get(i, i);
            if d == 0.0 || !d.is_finite() {
                Err(Error::SingularPreconditioner { row: i })
            } else {
                Ok(1.0 / d)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalPreconditioner {
        inverse_diagonal: inv,
    })
}

/// Tridiagonal `(-1, 2, -1)` of order `n`.
pub fn poisson1d(n: usize) -> Result<CsrMatrix> {
    if n < 1 {
        return Err(invalid("poisson1d needs n >= 1"));
    }
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, -1.0));
        }
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Five-point Laplacian on an `m x m` grid with Dirichlet boundary, and `b = 1`.
pub fn generate_poisson2d(m: usize) -> Result<(CsrMatrix, DenseVector)> {
    if m < 2 {
        return Err(invalid(format!("poisson2d grid side must be >= 2, got {m}")));
    }
    let n = m * m;
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_offsets.push(0);
    for gy in 0..m {
        for gx in 0..m {
            let idx = gy * m + gx;
            // columns pushed in increasing order
            if gy > 0 {
                col_indices.push(idx - m);
                values.push(-1.0);
            }
            if gx > 0 {
                col_indices.push(idx - 1);
                values.push(-1.0);
            }
            col_indices.push(idx);
            values.push(4.0);
            if gx + 1 < m {
                col_indices.push(idx + 1);
                values.push(-1.0);
            }
            if gy + 1 < m {
                col_indices.push(idx + m);
                values.push(-1.0);
            }
            row_offsets.push(values.len());
        }
    }
    let a = CsrMatrix::new(n, n, row_offsets, col_indices, values)?;
    Ok((a, DenseVector::ones(n)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

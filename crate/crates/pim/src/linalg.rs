//! Sparse CSR storage and an envelope (skyline) Cholesky solver.
//!
//! Desk-scale pencils are banded-ish under the samplers' natural orderings,
//! so an envelope factorization covers every sparse solve in the pipeline
//! (Poisson, Lanczos) without a fill-reducing ordering.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row (col, value) lists; each list must be sorted by
    /// column and free of duplicates.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert_eq!(rows.len(), n);
        let nnz: usize = rows.iter().map(|r| r.len()).sum();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Array1<f64> {
        Array1::from_iter((0..self.n).map(|i| self.get(i, i)))
    }

    pub fn matvec(&self, x: &Array1<f64>) -> Array1<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = Array1::zeros(self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn quadratic_form(&self, x: &Array1<f64>) -> f64 {
        x.dot(&self.matvec(x))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Entrywise `self + alpha * other`; both matrices must share the exact
    /// sparsity pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.indptr, other.indptr, "pattern mismatch");
        assert_eq!(self.indices, other.indices, "pattern mismatch");
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a + alpha * b)
            .collect();
        CsrMatrix {
            n: self.n,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values,
        }
    }

    /// Copy with row and column `idx` removed (indices above shift down).
    pub fn drop_row_col(&self, idx: usize) -> CsrMatrix {
        let mut rows = Vec::with_capacity(self.n - 1);
        for i in 0..self.n {
            if i == idx {
                continue;
            }
            let row = self
                .row(i)
                .filter(|(j, _)| *j != idx)
                .map(|(j, v)| (if j > idx { j - 1 } else { j }, v))
                .collect();
            rows.push(row);
        }
        CsrMatrix::from_rows(self.n - 1, rows)
    }

    /// Triplets in row-major order (deterministic).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "triplet index ({i},{j}) out of range for n={n}"
                )));
            }
            rows[i].push((j, v));
        }
        for row in &mut rows {
            row.sort_by_key(|(j, _)| *j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter("duplicate triplet entry".into()));
            }
        }
        Ok(CsrMatrix::from_rows(n, rows))
    }
}

/// Envelope Cholesky factorization of a sparse SPD matrix.
///
/// Stores each row of L from its first nonzero column through the diagonal;
/// fill stays inside the envelope, so the factorization is exact.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let mut first = vec![0usize; n];
        for i in 0..n {
            first[i] = a.row(i).next().map(|(j, _)| j.min(i)).unwrap_or(i);
        }
        // the envelope must be monotone for the skyline algorithm: row i's
        // span starts no later than needed by any dependent row
        let mut row_start = vec![0usize; n + 1];
        for i in 0..n {
            row_start[i + 1] = row_start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; row_start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[row_start[i] + (j - first[i])] = v;
                }
            }
        }
        // in-place skyline factorization
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut sum = data[row_start[i] + (j - fi)];
                for k in lo..j {
                    sum -= data[row_start[i] + (k - fi)] * data[row_start[j] + (k - fj)];
                }
                if j < i {
                    let djj = data[row_start[j] + (j - fj)];
                    data[row_start[i] + (j - fi)] = sum / djj;
                } else {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::SingularStiffness { row: i, pivot: sum });
                    }
                    data[row_start[i] + (j - fi)] = sum.sqrt();
                }
            }
        }
        Ok(EnvelopeCholesky {
            n,
            first,
            row_start,
            data,
        })
    }

    /// Solve `L Lᵀ x = b`.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = b.clone();
        // forward: L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let base = self.row_start[i];
            let mut sum = x[i];
            for k in fi..i {
                sum -= self.data[base + (k - fi)] * x[k];
            }
            x[i] = sum / self.data[base + (i - fi)];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let base = self.row_start[i];
            let xi = x[i] / self.data[base + (i - fi)];
            x[i] = xi;
            for k in fi..i {
                x[k] -= self.data[base + (k - fi)] * xi;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense_to_csr(m: &Array2<f64>) -> CsrMatrix {
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| m[[i, j]] != 0.0)
                    .map(|j| (j, m[[i, j]]))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    }

    #[test]
    fn csr_matvec_matches_dense() {
        let m = array![[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        let a = dense_to_csr(&m);
        let x = array![1.0, 2.0, 3.0];
        let y = a.matvec(&x);
        assert_eq!(y, m.dot(&x));
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.nnz(), 7);
    }

    #[test]
    fn drop_row_col_shifts_indices() {
        let m = array![[4.0, 1.0, 2.0], [1.0, 5.0, 0.0], [2.0, 0.0, 6.0]];
        let a = dense_to_csr(&m).drop_row_col(1);
        assert_eq!(a.to_dense(), array![[4.0, 2.0], [2.0, 6.0]]);
    }

    #[test]
    fn envelope_cholesky_solves_spd_system() {
        // tridiagonal SPD with a known solution
        let n = 40;
        let mut rows = Vec::new();
        for i in 0..n {
            let mut row = Vec::new();
            if i > 0 {
                row.push((i - 1, -1.0));
            }
            row.push((i, 2.5));
            if i + 1 < n {
                row.push((i + 1, -1.0));
            }
            rows.push(row);
        }
        let a = CsrMatrix::from_rows(n, rows);
        let x_true = Array1::from_iter((0..n).map(|i| (i as f64 * 0.37).sin()));
        let b = a.matvec(&x_true);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let x = chol.solve(&b);
        let err = (&x - &x_true).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn envelope_cholesky_rejects_indefinite() {
        let m = array![[1.0, 2.0], [2.0, 1.0]]; // eigenvalues 3, -1
        assert!(EnvelopeCholesky::factor(&dense_to_csr(&m)).is_err());
    }

    #[test]
    fn add_scaled_same_pattern() {
        let m = array![[2.0, -1.0], [-1.0, 2.0]];
        let a = dense_to_csr(&m);
        let k = a.add_scaled(0.5, &a);
        assert_eq!(k.to_dense(), &m * 1.5);
    }
}

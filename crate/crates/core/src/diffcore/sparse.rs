//! Compressed sparse row matrices.
//!
//! Interpolation weights, hash-table lookups and ray integrals are all fixed
//! linear maps once the query coordinates are known, so they are stored as
//! sparse matrices and applied to parameter tables on the tape. The transpose
//! is kept alongside so both products stay row-parallel and deterministic.

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Clone, Debug)]
struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Csr {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    fn transpose(&self) -> Csr {
        let mut entries = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                entries.push((self.indices[k], r, self.values[k]));
            }
        }
        Csr::from_triplets(self.cols, self.rows, entries)
    }

    fn apply(&self, x: &[f64], ch: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * ch];
        for r in 0..self.rows {
            let dst = &mut out[r * ch..(r + 1) * ch];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let w = self.values[k];
                let src = &x[self.indices[k] * ch..(self.indices[k] + 1) * ch];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

/// A fixed sparse linear operator `A` with its transpose.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    fwd: Csr,
    adj: Csr,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::build(format!(
                "sparse entry ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        let fwd = Csr::from_triplets(rows, cols, entries);
        let adj = fwd.transpose();
        Ok(SparseMatrix { fwd, adj })
    }

    pub fn rows(&self) -> usize {
        self.fwd.rows
    }

    pub fn cols(&self) -> usize {
        self.fwd.cols
    }

    pub fn nnz(&self) -> usize {
        self.fwd.values.len()
    }

    /// Column indices and weights stored in one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.fwd.indptr[r]..self.fwd.indptr[r + 1];
        self.fwd.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.fwd.values[span].iter().copied())
    }

    fn check(&self, x: &Tensor, expected_rows: usize) -> Result<usize> {
        let (r, ch) = match x.shape() {
            [r] => (*r, 1),
            [r, c] => (*r, *c),
            s => return Err(Error::build(format!("sparse operand must be rank 1 or 2, got {s:?}"))),
        };
        if r != expected_rows {
            return Err(Error::build(format!(
                "sparse operand has {r} rows, operator expects {expected_rows}"
            )));
        }
        Ok(ch)
    }

    /// `A x` for `x` of shape `[cols]` or `[cols, ch]`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let ch = self.check(x, self.cols())?;
        let shape = if x.shape().len() == 1 {
            vec![self.rows()]
        } else {
            vec![self.rows(), ch]
        };
        Tensor::new(shape, self.fwd.apply(x.data(), ch))
    }

    /// `Aᵀ y` for `y` of shape `[rows]` or `[rows, ch]`.
    pub fn apply_transpose(&self, y: &Tensor) -> Result<Tensor> {
        let ch = self.check(y, self.rows())?;
        let shape = if y.shape().len() == 1 {
            vec![self.cols()]
        } else {
            vec![self.cols(), ch]
        };
        Tensor::new(shape, self.adj.apply(y.data(), ch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &SparseMatrix) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; a.cols()]; a.rows()];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in a.row(r) {
                row[c] += v;
            }
        }
        d
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(2, 3, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 2, 4.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(dense(&a), vec![vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 4.0]]);
    }

    #[test]
    fn transpose_is_adjoint() {
        let a = SparseMatrix::from_triplets(
            3,
            2,
            vec![(0, 0, 1.5), (1, 1, -2.0), (2, 0, 0.5), (2, 1, 3.0)],
        )
        .unwrap();
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 1.0, 1.0, 0.0]).unwrap();
        let ax = a.apply(&x).unwrap();
        let aty = a.apply_transpose(&y).unwrap();
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }
}

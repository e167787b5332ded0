use nalgebra::DMatrix;

use crate::error::{Result, SpcaError};
use crate::linalg::norm;

/// An `n x p` sample stored row-major; every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl DataSet {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(SpcaError::EmptyData);
        }
        if values.len() != n * p {
            return Err(SpcaError::DimensionMismatch {
                expected: n * p,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(SpcaError::NonFiniteEntry {
                row: pos / p,
                col: pos % p,
            });
        }
        Ok(Self { n, p, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(SpcaError::EmptyData)?;
        let p = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * p);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != p {
                return Err(SpcaError::RaggedRows {
                    row: i,
                    expected: p,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), p, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.p)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.rows().map(norm).collect()
    }

    pub fn scaled(&self, b: f64) -> DataSet {
        DataSet {
            n: self.n,
            p: self.p,
            values: self.values.iter().map(|x| x * b).collect(),
        }
    }

    /// Rows mapped through `x -> m x` for a square `m`.
    pub fn transformed(&self, m: &DMatrix<f64>) -> Result<DataSet> {
        if m.nrows() != self.p || m.ncols() != self.p {
            return Err(SpcaError::DimensionMismatch {
                expected: self.p,
                got: m.nrows(),
            });
        }
        let mut values = Vec::with_capacity(self.values.len());
        for r in self.rows() {
            for i in 0..self.p {
                values.push((0..self.p).map(|j| m[(i, j)] * r[j]).sum());
            }
        }
        Ok(DataSet {
            n: self.n,
            p: self.p,
            values,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.p {
            return Err(SpcaError::DimensionMismatch {
                expected: self.p,
                got: v.len(),
            });
        }
        Ok(())
    }
}

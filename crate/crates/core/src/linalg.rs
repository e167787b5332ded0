//! Small dense helpers: compensated sums, vector arithmetic on slices and a
//! cyclic Jacobi eigensolver for the p x p symmetric matrices used throughout.

use nalgebra::{DMatrix, DVector};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated accumulator for vectors of fixed length.
#[derive(Debug, Clone)]
pub struct CompensatedVec {
    parts: Vec<CompensatedSum>,
}

impl CompensatedVec {
    pub fn zeros(p: usize) -> Self {
        Self {
            parts: vec![CompensatedSum::new(); p],
        }
    }

    #[inline]
    pub fn add_scaled(&mut self, scale: f64, x: &[f64]) {
        for (acc, &xi) in self.parts.iter_mut().zip(x) {
            acc.add(scale * xi);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.parts.iter().map(CompensatedSum::value).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `(‖a - b‖, ‖a + b‖)` in one pass.
#[inline]
pub fn minus_plus_norms(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut m = 0.0;
    let mut p = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        let s = x + y;
        m += d * d;
        p += s * s;
    }
    (m.sqrt(), p.sqrt())
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Flip `v` in place so that its largest-magnitude coordinate (first one on
/// ties) is nonnegative.
pub fn sign_normalize(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j).iter().copied().collect()
    }
}

/// Cyclic Jacobi rotations until the off-diagonal mass is below `1e-30` of the
/// total (or 100 sweeps). Only the upper triangle of `a` is read.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> SymmetricEigen {
    let p = a.nrows();
    assert_eq!(p, a.ncols(), "jacobi_eigen needs a square matrix");
    let mut m = DMatrix::from_fn(p, p, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let mut v = DMatrix::<f64>::identity(p, p);
    let total: f64 = m.iter().map(|x| x * x).sum();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                off += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = m[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let theta = (m[(j, j)] - m[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mki = m[(k, i)];
                    let mkj = m[(k, j)];
                    m[(k, i)] = c * mki - s * mkj;
                    m[(k, j)] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[(i, k)];
                    let mjk = m[(j, k)];
                    m[(i, k)] = c * mik - s * mjk;
                    m[(j, k)] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let vki = v[(k, i)];
                    let vkj = v[(k, j)];
                    v[(k, i)] = c * vki - s * vkj;
                    v[(k, j)] = s * vki + c * vkj;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let vectors = DMatrix::from_fn(p, p, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    jacobi_eigen(a)
        .values
        .iter()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn outer(a: &[f64], b: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

pub fn to_dvector(a: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(a)
}

//! The sample objective `f_n(v) = mean(‖X_i - v‖ ‖X_i + v‖ - ‖X_i‖²)` and its
//! derivatives, plus the spatial sign covariance matrix.
//!
//! The objective is non-differentiable exactly at `v = ±X_i`. A point counts
//! as sitting on `±X_i` when `‖v ∓ X_i‖ <= eta * (1 + ‖X_i‖)`, with
//! [`SAMPLE_POINT_TOL`] as the default `eta`.

use nalgebra::DMatrix;

use crate::data::DataSet;
use crate::error::{Result, Sign, SpcaError};
use crate::linalg::{dot, jacobi_eigen, minus_plus_norms, norm, norm_sq, CompensatedSum, CompensatedVec};

pub const SAMPLE_POINT_TOL: f64 = 1e-9;

/// First observation that `v` coincides with (up to sign), if any.
pub fn locate_sample_point(v: &[f64], data: &DataSet, eta: f64) -> Option<(usize, Sign)> {
    for (i, x) in data.rows().enumerate() {
        let (dm, dp) = minus_plus_norms(v, x);
        let tol = eta * (1.0 + norm(x));
        if dm <= tol {
            return Some((i, Sign::Plus));
        }
        if dp <= tol {
            return Some((i, Sign::Minus));
        }
    }
    None
}

fn require_off_sample(v: &[f64], data: &DataSet, eta: f64) -> Result<()> {
    match locate_sample_point(v, data, eta) {
        Some((index, sign)) => Err(SpcaError::SamplePointHit { index, sign }),
        None => Ok(()),
    }
}

/// One summand `‖x - v‖‖x + v‖ - ‖x‖²`, rearranged as
/// `(‖v‖²(2‖x‖² + ‖v‖²) - 4(x'v)²) / (‖x - v‖‖x + v‖ + ‖x‖²)` so that small `v`
/// against large `x` does not cancel.
#[inline]
fn objective_term(v: &[f64], vv: f64, x: &[f64]) -> f64 {
    let xx = norm_sq(x);
    let xv = dot(x, v);
    let (dm, dp) = minus_plus_norms(x, v);
    let denom = dm * dp + xx;
    if denom == 0.0 {
        return 0.0;
    }
    (vv * (2.0 * xx + vv) - 4.0 * xv * xv) / denom
}

pub fn objective_value(v: &[f64], data: &DataSet) -> Result<f64> {
    data.check_dim(v)?;
    let vv = norm_sq(v);
    let total: CompensatedSum = data.rows().map(|x| objective_term(v, vv, x)).collect();
    Ok(total.value() / data.n() as f64)
}

/// Nuclear norm of `aa' - bb'` from its two nonzero eigenvalues
/// `phi± = (‖a‖² - ‖b‖² ± sqrt((‖a‖² - ‖b‖²)² - 4(a'b)² + 4‖a‖²‖b‖²)) / 2`.
pub fn rank_two_nuclear_norm(a: &[f64], b: &[f64]) -> f64 {
    let aa = norm_sq(a);
    let bb = norm_sq(b);
    let ab = dot(a, b);
    let diff = aa - bb;
    let disc = (diff * diff - 4.0 * ab * ab + 4.0 * aa * bb).max(0.0).sqrt();
    let phi_plus = 0.5 * (diff + disc);
    let phi_minus = 0.5 * (diff - disc);
    phi_plus.abs() + phi_minus.abs()
}

/// The objective through `mean(‖vv' - X_iX_i'‖_* - ‖X_i‖²)`.
pub fn objective_nuclear(v: &[f64], data: &DataSet) -> Result<f64> {
    data.check_dim(v)?;
    let total: CompensatedSum = data
        .rows()
        .map(|x| rank_two_nuclear_norm(v, x) - norm_sq(x))
        .collect();
    Ok(total.value() / data.n() as f64)
}

pub fn gradient(v: &[f64], data: &DataSet) -> Result<Vec<f64>> {
    gradient_with_tol(v, data, SAMPLE_POINT_TOL)
}

pub fn gradient_with_tol(v: &[f64], data: &DataSet, eta: f64) -> Result<Vec<f64>> {
    data.check_dim(v)?;
    require_off_sample(v, data, eta)?;
    let p = data.p();
    let mut acc = CompensatedVec::zeros(p);
    let mut term = vec![0.0; p];
    for x in data.rows() {
        let (a, b) = minus_plus_norms(v, x);
        let ba = b / a;
        let ab = a / b;
        for j in 0..p {
            term[j] = ba * (v[j] - x[j]) + ab * (v[j] + x[j]);
        }
        acc.add_scaled(1.0, &term);
    }
    let n = data.n() as f64;
    Ok(acc.values().into_iter().map(|g| g / n).collect())
}

/// Observations that coincide with `X_k` up to sign (always contains `k`).
pub fn coinciding_indices(k: usize, data: &DataSet, eta: f64) -> Vec<usize> {
    let xk = data.row(k);
    let tol = eta * (1.0 + norm(xk));
    data.rows()
        .enumerate()
        .filter(|(i, x)| {
            if *i == k {
                return true;
            }
            let (dm, dp) = minus_plus_norms(x, xk);
            dm <= tol || dp <= tol
        })
        .map(|(i, _)| i)
        .collect()
}

/// Ingredients of the directional derivative at a sample point `sign * X_k`:
/// for a unit `u`, `(f(q - t u) - f(q)) / t -> (kink + <grad, u>) / n`.
#[derive(Debug, Clone)]
pub struct RestGradient {
    /// `∇f_k` (or `∇f_{-k}`): the sum over the doubled sample
    /// `{X_1..X_n, -X_1..-X_n}` with the copies of `±X_k` left out.
    pub grad: Vec<f64>,
    /// `2 m ‖X_k‖`, where `m` counts observations equal to `±X_k`.
    pub kink: f64,
    pub coinciding: Vec<usize>,
}

pub fn rest_gradient(k: usize, sign: Sign, data: &DataSet, eta: f64) -> Result<RestGradient> {
    if k >= data.n() {
        return Err(SpcaError::IndexOutOfRange { index: k, n: data.n() });
    }
    let p = data.p();
    let xk = data.row(k);
    let coinciding = coinciding_indices(k, data, eta);
    let mut acc = CompensatedVec::zeros(p);
    let mut term = vec![0.0; p];
    let mut skip = coinciding.iter().peekable();
    for (i, xi) in data.rows().enumerate() {
        if skip.peek() == Some(&&i) {
            skip.next();
            continue;
        }
        let (dm, dp) = minus_plus_norms(xi, xk);
        // index i contributes (‖X_i+X_k‖/‖X_i-X_k‖)(X_i-X_k);
        // index -i contributes (‖X_i-X_k‖/‖X_i+X_k‖)(-X_i-X_k)
        let r = dp / dm;
        for j in 0..p {
            term[j] = r * (xi[j] - xk[j]) - (xi[j] + xk[j]) / r;
        }
        acc.add_scaled(1.0, &term);
    }
    let mut grad = acc.values();
    if sign == Sign::Minus {
        grad.iter_mut().for_each(|g| *g = -*g);
    }
    Ok(RestGradient {
        grad,
        kink: 2.0 * coinciding.len() as f64 * norm(xk),
        coinciding,
    })
}

/// Modified gradient at `sign * X_k`:
/// `max(‖∇f_k‖ - 2‖X_k‖, 0) ∇f_k / ‖∇f_k‖`, zero when `∇f_k = 0`.
///
/// Note the orientation: `∇f_k` points along the steepest descent direction
/// from the sample point, so a nonzero result is where the escape step moves.
pub fn modified_gradient(k: usize, sign: Sign, data: &DataSet) -> Result<Vec<f64>> {
    let rest = rest_gradient(k, sign, data, SAMPLE_POINT_TOL)?;
    let g = norm(&rest.grad);
    if g == 0.0 {
        return Ok(vec![0.0; data.p()]);
    }
    let scale = (g - rest.kink).max(0.0) / g;
    Ok(rest.grad.iter().map(|x| x * scale).collect())
}

pub fn hessian(v: &[f64], data: &DataSet) -> Result<DMatrix<f64>> {
    data.check_dim(v)?;
    require_off_sample(v, data, SAMPLE_POINT_TOL)?;
    let p = data.p();
    let mut acc = CompensatedVec::zeros(p * p);
    let mut term = vec![0.0; p * p];
    let mut dm_vec = vec![0.0; p];
    let mut dp_vec = vec![0.0; p];
    for x in data.rows() {
        for j in 0..p {
            dm_vec[j] = v[j] - x[j];
            dp_vec[j] = v[j] + x[j];
        }
        let a = norm(&dm_vec);
        let b = norm(&dp_vec);
        let ba = b / a;
        let ab = a / b;
        let ba3 = b / (a * a * a);
        let ab3 = a / (b * b * b);
        let inv = 1.0 / (a * b);
        for r in 0..p {
            for c in 0..p {
                let id = if r == c { ba + ab } else { 0.0 };
                term[r * p + c] = id - ba3 * dm_vec[r] * dm_vec[c] - ab3 * dp_vec[r] * dp_vec[c]
                    + inv * (dm_vec[r] * dp_vec[c] + dp_vec[r] * dm_vec[c]);
            }
        }
        acc.add_scaled(1.0, &term);
    }
    let n = data.n() as f64;
    let vals = acc.values();
    let mut h = DMatrix::from_fn(p, p, |r, c| vals[r * p + c] / n);
    // average the two triangles so the result is symmetric to the last bit
    for r in 0..p {
        for c in (r + 1)..p {
            let s = 0.5 * (h[(r, c)] + h[(c, r)]);
            h[(r, c)] = s;
            h[(c, r)] = s;
        }
    }
    Ok(h)
}

/// Spatial sign covariance `mean(X X' / ‖X‖²)` over the nonzero rows.
#[derive(Debug, Clone)]
pub struct SignCovariance {
    pub matrix: DMatrix<f64>,
    pub leading_eig: f64,
    pub leading_vector: Vec<f64>,
    /// Number of nonzero rows used.
    pub rows_used: usize,
}

pub fn sign_covariance(data: &DataSet) -> Result<SignCovariance> {
    let p = data.p();
    let mut acc = CompensatedVec::zeros(p * p);
    let mut term = vec![0.0; p * p];
    let mut m = 0usize;
    for x in data.rows() {
        let xx = norm_sq(x);
        if xx == 0.0 {
            continue;
        }
        m += 1;
        for r in 0..p {
            for c in 0..p {
                term[r * p + c] = x[r] * x[c] / xx;
            }
        }
        acc.add_scaled(1.0, &term);
    }
    if m == 0 {
        return Err(SpcaError::AllZeroData);
    }
    let vals = acc.values();
    let matrix = DMatrix::from_fn(p, p, |r, c| {
        let (i, j) = if r <= c { (r, c) } else { (c, r) };
        vals[i * p + j] / m as f64
    });
    let eig = jacobi_eigen(&matrix);
    Ok(SignCovariance {
        leading_eig: eig.values[0],
        leading_vector: eig.vector(0),
        matrix,
        rows_used: m,
    })
}

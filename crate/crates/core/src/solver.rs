//! Weiszfeld-type descent for the sample objective, with escape moves at
//! sample points, a PCA start, the a-priori radius bound and a length polish
//! along the final ray.

use nalgebra::DMatrix;

use crate::data::DataSet;
use crate::error::{Result, Sign, SpcaError};
use crate::linalg::{dot, jacobi_eigen, minus_plus_norms, norm, norm_sq, sign_normalize, CompensatedSum, CompensatedVec};
use crate::objective::{locate_sample_point, objective_value, rest_gradient, SAMPLE_POINT_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once one iteration decreases the objective by at most this much.
    /// `None` uses `1e-12 * max(|f(init)|, R0²)`, which scales with the data.
    pub tolerance: Option<f64>,
    pub max_iter: usize,
    pub sample_point_tol: f64,
    pub epsilon_shrink: f64,
    pub max_shrinks: usize,
    /// Re-optimize the length along the final direction.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: None,
            max_iter: 10_000,
            sample_point_tol: SAMPLE_POINT_TOL,
            epsilon_shrink: 0.5,
            max_shrinks: 200,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(SpcaError::InvalidParameter(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.max_iter == 0 {
            return Err(SpcaError::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.epsilon_shrink > 0.0 && self.epsilon_shrink < 1.0) {
            return Err(SpcaError::InvalidParameter(format!(
                "epsilon_shrink must lie in (0, 1), got {}",
                self.epsilon_shrink
            )));
        }
        if !(self.sample_point_tol > 0.0) {
            return Err(SpcaError::InvalidParameter("sample_point_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterReached,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub v: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: Status,
    /// Escape moves that actually left a sample point.
    pub escape_steps_taken: usize,
    pub norm: f64,
    /// `v / ‖v‖`, or `None` when the fit collapsed to the origin.
    pub direction: Option<Vec<f64>>,
    /// Whether the final length came from the ray search.
    pub polished: bool,
    /// Set when the loop ended on `±X_k`, in which case no polish is applied.
    pub ended_at_sample_point: Option<(usize, Sign)>,
    pub radius: RadiusBound,
    /// Objective after the start and after every iteration.
    pub trace: Vec<f64>,
}

impl SolverResult {
    pub fn within_radius(&self) -> bool {
        self.norm <= self.radius.h + 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusBound {
    pub r0: f64,
    pub h: f64,
    pub coefficient: f64,
}

/// Terms of `L(v)` and `T(v)` skipping observations that `v` sits on.
fn scale_and_pull(v: &[f64], data: &DataSet, eta: f64, skip_hits: bool) -> Result<(f64, Vec<f64>, usize)> {
    data.check_dim(v)?;
    let mut l = CompensatedSum::new();
    let mut pull = CompensatedVec::zeros(data.p());
    let mut used = 0;
    for (i, x) in data.rows().enumerate() {
        let (a, b) = minus_plus_norms(v, x);
        let tol = eta * (1.0 + norm(x));
        if a <= tol || b <= tol {
            if skip_hits {
                continue;
            }
            let sign = if a <= tol { Sign::Plus } else { Sign::Minus };
            return Err(SpcaError::SamplePointHit { index: i, sign });
        }
        used += 1;
        let ab = a * b;
        l.add((a * a + b * b) / ab);
        // ‖v+x‖² - ‖v-x‖² = 4 v'x
        pull.add_scaled(4.0 * dot(v, x) / ab, x);
    }
    Ok((l.value(), pull.values(), used))
}

/// `L(v) = mean((‖v+X‖² + ‖v-X‖²) / (‖v-X‖‖v+X‖))`, leaving out any
/// observation that `v` sits on.
pub fn step_scale(v: &[f64], data: &DataSet) -> Result<f64> {
    let (l, _, used) = scale_and_pull(v, data, SAMPLE_POINT_TOL, true)?;
    if used == 0 {
        return Err(SpcaError::UndefinedScale);
    }
    Ok(l / data.n() as f64)
}

/// The update `T(v) = v - ∇f(v) / L(v)`, written as a weighted sum of the
/// observations.
pub fn weiszfeld_step(v: &[f64], data: &DataSet) -> Result<Vec<f64>> {
    weiszfeld_step_with_tol(v, data, SAMPLE_POINT_TOL)
}

fn weiszfeld_step_with_tol(v: &[f64], data: &DataSet, eta: f64) -> Result<Vec<f64>> {
    let (l, pull, _) = scale_and_pull(v, data, eta, false)?;
    Ok(pull.into_iter().map(|x| x / l).collect())
}

/// Result of trying to leave the sample point `sign * X_k`.
#[derive(Debug, Clone)]
pub struct EscapeOutcome {
    pub point: Vec<f64>,
    /// Step length used; `None` when the point is stationary.
    pub epsilon: Option<f64>,
    pub objective: f64,
}

pub fn escape_step(k: usize, sign: Sign, data: &DataSet, cfg: &SolverConfig) -> Result<Vec<f64>> {
    escape_from(k, sign, data, cfg).map(|e| e.point)
}

pub fn escape_from(k: usize, sign: Sign, data: &DataSet, cfg: &SolverConfig) -> Result<EscapeOutcome> {
    cfg.validate()?;
    let rest = rest_gradient(k, sign, data, cfg.sample_point_tol)?;
    let start: Vec<f64> = data.row(k).iter().map(|x| sign.value() * x).collect();
    let f0 = objective_value(&start, data)?;
    let g = norm(&rest.grad);
    if g - rest.kink <= 0.0 {
        return Ok(EscapeOutcome {
            point: start,
            epsilon: None,
            objective: f0,
        });
    }
    let m = data.rows().map(|x| 2.0 * norm(x)).fold(0.0, f64::max);
    let mut eps = 0.5 * m;
    for _ in 0..cfg.max_shrinks {
        // move along ∇f_k / ‖∇f_k‖, the steepest descent direction here
        let cand: Vec<f64> = start.iter().zip(&rest.grad).map(|(s, gi)| s + eps * gi / g).collect();
        let f = objective_value(&cand, data)?;
        if f < f0 {
            return Ok(EscapeOutcome {
                point: cand,
                epsilon: Some(eps),
                objective: f,
            });
        }
        eps *= cfg.epsilon_shrink;
    }
    Err(SpcaError::BacktrackExhausted { trials: cfg.max_shrinks })
}

/// Lower empirical quantile: the smallest order statistic whose empirical
/// cdf reaches `q`.
pub fn lower_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Every minimizer of the sample objective lies in the ball of radius
/// `h + 1/2`.
pub fn radius_bound(data: &DataSet) -> Result<RadiusBound> {
    let norms = data.row_norms();
    if norms.iter().all(|&r| r == 0.0) {
        return Err(SpcaError::AllZeroData);
    }
    let r0 = lower_quantile(&norms, 0.75);
    let inside = norms.iter().filter(|&&r| r <= r0).count();
    let c = 2.0 * inside as f64 / data.n() as f64 - 1.0;
    // largest root of c h² - 2 R0 h - R0² (the objective vanishes at 0)
    let root = r0 / c * (1.0 + (1.0 + c).sqrt());
    Ok(RadiusBound {
        r0,
        h: 1.0 + root,
        coefficient: c,
    })
}

/// Right derivative of `t -> f(sqrt(t) u)` for unit `u`.
fn ray_slope(t: f64, u: &[f64], data: &DataSet) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in data.rows() {
        let xx = norm_sq(x);
        if xx == 0.0 {
            acc.add(1.0);
            continue;
        }
        let s = dot(u, x);
        let perp = (xx - s * s).max(0.0);
        if t == 0.0 {
            acc.add(1.0 - 2.0 * s * s / xx);
            continue;
        }
        // ‖√t u - x‖²‖√t u + x‖² = (t - ‖x‖²)² + 4 t ‖x - s u‖²
        let prod = ((t - xx) * (t - xx) + 4.0 * t * perp).sqrt();
        if prod == 0.0 {
            acc.add(1.0);
        } else {
            acc.add((t - xx + 2.0 * perp) / prod);
        }
    }
    acc.value() / data.n() as f64
}

/// Length `λ >= 0` minimizing `λ -> f(λ u)`. The map `t -> f(sqrt(t) u)` is
/// convex, so bisection on the sign of its right derivative finds the minimum.
/// In dimension one every direction is parallel to the data and the search is
/// the median of the squared observations.
pub fn ray_line_search(u: &[f64], data: &DataSet) -> Result<f64> {
    data.check_dim(u)?;
    let un = norm(u);
    if un == 0.0 {
        return Err(SpcaError::ZeroVector);
    }
    let u: Vec<f64> = u.iter().map(|x| x / un).collect();
    if data.p() >= 2 {
        for (i, x) in data.rows().enumerate() {
            let xn = norm(x);
            if xn == 0.0 {
                continue;
            }
            let s = dot(&u, x);
            let perp = (xn * xn - s * s).max(0.0).sqrt();
            if perp <= SAMPLE_POINT_TOL * (1.0 + xn) {
                return Err(SpcaError::DirectionAtSamplePoint { index: i });
            }
        }
    }
    if ray_slope(0.0, &u, data) >= 0.0 {
        return Ok(0.0);
    }
    let bound = radius_bound(data)?;
    let mut hi = (bound.h + 0.5).powi(2);
    let mut lo = 0.0;
    while ray_slope(hi, &u, data) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(SpcaError::InvalidParameter("ray search bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if ray_slope(mid, &u, data) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi.sqrt())
}

/// Leading eigenpair of the centered sample covariance (divisor `n - 1`).
pub fn pca_leading(data: &DataSet) -> Result<(Vec<f64>, f64)> {
    let cov = sample_covariance(data)?;
    if cov.iter().all(|&x| x == 0.0) {
        return Err(SpcaError::DegenerateData);
    }
    let eig = jacobi_eigen(&cov);
    let mut vec = eig.vector(0);
    sign_normalize(&mut vec);
    Ok((vec, eig.values[0]))
}

pub fn sample_covariance(data: &DataSet) -> Result<DMatrix<f64>> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(SpcaError::DegenerateData);
    }
    let mut mean = CompensatedVec::zeros(p);
    for x in data.rows() {
        mean.add_scaled(1.0, x);
    }
    let mean: Vec<f64> = mean.values().into_iter().map(|m| m / n as f64).collect();
    let mut acc = CompensatedVec::zeros(p * p);
    let mut centered = vec![0.0; p];
    let mut term = vec![0.0; p * p];
    for x in data.rows() {
        for j in 0..p {
            centered[j] = x[j] - mean[j];
        }
        for r in 0..p {
            for c in 0..p {
                term[r * p + c] = centered[r] * centered[c];
            }
        }
        acc.add_scaled(1.0, &term);
    }
    let vals = acc.values();
    Ok(DMatrix::from_fn(p, p, |r, c| {
        let (i, j) = if r <= c { (r, c) } else { (c, r) };
        vals[i * p + j] / (n - 1) as f64
    }))
}

/// Coordinate axis with the largest marginal variance, or with the largest
/// second moment when every variance is zero.
fn fallback_axis(data: &DataSet) -> Vec<f64> {
    let n = data.n() as f64;
    let p = data.p();
    let mut mean = vec![0.0; p];
    let mut second = vec![0.0; p];
    for x in data.rows() {
        for j in 0..p {
            mean[j] += x[j] / n;
            second[j] += x[j] * x[j] / n;
        }
    }
    let var: Vec<f64> = (0..p).map(|j| (second[j] - mean[j] * mean[j]).max(0.0)).collect();
    let score = if var.iter().any(|&v| v > 0.0) { var } else { second };
    let mut best = 0;
    for j in 1..p {
        if score[j] > score[best] {
            best = j;
        }
    }
    let mut axis = vec![0.0; p];
    axis[best] = 1.0;
    axis
}

/// Default start: the leading covariance eigenvector, scaled by the 0.75
/// quantile of the observation norms so that the iteration is scale
/// equivariant.
pub fn default_init(data: &DataSet) -> Result<Vec<f64>> {
    let dir = match pca_leading(data) {
        Ok((v, _)) => v,
        Err(SpcaError::DegenerateData) => fallback_axis(data),
        Err(e) => return Err(e),
    };
    let bound = radius_bound(data)?;
    let scale = if bound.r0 > 0.0 {
        bound.r0
    } else {
        data.row_norms().into_iter().fold(0.0, f64::max)
    };
    Ok(dir.into_iter().map(|x| x * scale).collect())
}

pub fn solve(data: &DataSet, cfg: &SolverConfig, init: Option<&[f64]>) -> Result<SolverResult> {
    cfg.validate()?;
    let radius = radius_bound(data)?;
    let eta = cfg.sample_point_tol;
    let mut v = match init {
        Some(v0) => {
            data.check_dim(v0)?;
            v0.to_vec()
        }
        None => default_init(data)?,
    };
    let mut f = objective_value(&v, data)?;
    let scale = if radius.r0 > 0.0 {
        radius.r0
    } else {
        data.rows().map(norm).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    };
    let delta = cfg.tolerance.unwrap_or(1e-12 * f.abs().max(scale * scale));
    let zero_cut = 1e-14 * scale;

    let mut trace = vec![f];
    let mut iterations = 0;
    let mut escapes = 0;
    let mut err = delta + 1.0;
    let mut collapsed = false;
    while err > delta && iterations < cfg.max_iter {
        iterations += 1;
        match locate_sample_point(&v, data, eta) {
            None => {
                let next = weiszfeld_step_with_tol(&v, data, eta)?;
                if norm(&next) <= zero_cut {
                    v = vec![0.0; data.p()];
                    f = 0.0;
                    trace.push(f);
                    collapsed = true;
                    break;
                }
                let f_next = objective_value(&next, data)?;
                if f_next > f {
                    // rounding made the step an ascent; we are at the floor
                    trace.push(f);
                    err = 0.0;
                    continue;
                }
                err = f - f_next;
                v = next;
                f = f_next;
            }
            Some((k, sign)) => match escape_from(k, sign, data, cfg) {
                Ok(EscapeOutcome {
                    point,
                    epsilon: Some(_),
                    objective,
                }) => {
                    escapes += 1;
                    v = point;
                    f = objective;
                    err = delta + 1.0;
                }
                Ok(_) | Err(SpcaError::BacktrackExhausted { .. }) => {
                    err = 0.0;
                }
                Err(e) => return Err(e),
            },
        }
        trace.push(f);
    }
    let status = if err > delta && !collapsed {
        Status::MaxIterReached
    } else {
        Status::Converged
    };

    let ended_at_sample_point = if collapsed { None } else { locate_sample_point(&v, data, eta) };
    let mut polished = false;
    if cfg.polish && !collapsed && ended_at_sample_point.is_none() && norm(&v) > 0.0 {
        if let Ok(len) = ray_line_search(&v, data) {
            let vn = norm(&v);
            let cand: Vec<f64> = v.iter().map(|x| x / vn * len).collect();
            let f_cand = objective_value(&cand, data)?;
            if f_cand < f {
                v = cand;
                f = f_cand;
                polished = true;
                trace.push(f);
            }
        }
    }

    sign_normalize(&mut v);
    let vn = norm(&v);
    let direction = if vn > 0.0 {
        Some(v.iter().map(|x| x / vn).collect())
    } else {
        None
    };
    Ok(SolverResult {
        objective: f,
        norm: vn,
        direction,
        v,
        iterations,
        status,
        escape_steps_taken: escapes,
        polished,
        ended_at_sample_point,
        radius,
        trace,
    })
}

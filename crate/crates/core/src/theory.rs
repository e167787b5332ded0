//! Population quantities for the elliptical model `X = O Λ Z` with
//! `Λ = σ diag(λ, 1, ..., 1)`: the leading eigenvalue `τ(λ, p)` of the spatial
//! sign covariance, the identifiability threshold `λ*_p`, its asymptotic
//! constant, and the norm `ψ` of the population minimizer under a Gaussian `Z`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Result, SpcaError};
use crate::quadrature::{adaptive_simpson, gauss_kronrod};
use crate::special::{erfc, ln_gamma_half};

pub const TAU_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMethod {
    ClosedForm2,
    ClosedForm3,
    ClosedForm4,
    Quadrature,
}

impl TauMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TauMethod::ClosedForm2 => "closed-form-2",
            TauMethod::ClosedForm3 => "closed-form-3",
            TauMethod::ClosedForm4 => "closed-form-4",
            TauMethod::Quadrature => "quadrature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauResult {
    pub lambda: f64,
    pub p: usize,
    pub tau: f64,
    /// Each of the `p - 1` tail eigenvalues, `(1 - tau) / (p - 1)`.
    pub tau0: f64,
    pub method: TauMethod,
    pub abs_err_estimate: f64,
}

impl TauResult {
    fn new(lambda: f64, p: usize, tau: f64, method: TauMethod, abs_err_estimate: f64) -> Self {
        Self {
            lambda,
            p,
            tau,
            tau0: (1.0 - tau) / (p - 1) as f64,
            method,
            abs_err_estimate,
        }
    }

    pub fn identifiable(&self) -> bool {
        self.tau > 0.5
    }
}

fn check_lambda_p(lambda: f64, p: usize) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SpcaError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if p < 2 {
        return Err(SpcaError::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    Ok(())
}

/// `τ = ½ ∫_0^∞ (1+u)^{-3/2} (1+u/λ²)^{-(p-1)/2} du` after mapping
/// `u = s/(1-s)` onto `[0, 1]`, where the integrand becomes
/// `(1-s)^{(p-2)/2} (1 - s + s/λ²)^{-(p-1)/2}`.
pub fn tau_quadrature(lambda: f64, p: usize) -> Result<TauResult> {
    check_lambda_p(lambda, p)?;
    let half_tail = (p as f64 - 1.0) / 2.0;
    let half_lead = (p as f64 - 2.0) / 2.0;
    let shrink = 1.0 - 1.0 / (lambda * lambda);
    let integrand = |s: f64| {
        if s >= 1.0 {
            return if p == 2 { lambda } else { 0.0 };
        }
        (half_lead * (-s).ln_1p() - half_tail * (-s * shrink).ln_1p()).exp()
    };
    let breaks: Vec<f64> = (-8..=8)
        .map(|k| {
            let u = 10f64.powi(k);
            u / (1.0 + u)
        })
        .collect();
    let r = adaptive_simpson(integrand, 0.0, 1.0, &breaks, 2.0 * TAU_TOL)?;
    Ok(TauResult::new(lambda, p, 0.5 * r.value, TauMethod::Quadrature, 0.5 * r.abs_err))
}

/// Closed forms for `p ∈ {2, 3, 4}`; the `p = 3` expression has a removable
/// singularity at `λ = 1`, bridged by its Taylor polynomial.
pub fn tau_closed(lambda: f64, p: usize) -> Result<TauResult> {
    if !(2..=4).contains(&p) {
        return Err(SpcaError::UnsupportedDim(p));
    }
    check_lambda_p(lambda, p)?;
    let (tau, method) = match p {
        2 => (lambda / (lambda + 1.0), TauMethod::ClosedForm2),
        3 => (i3(lambda), TauMethod::ClosedForm3),
        _ => (lambda * lambda / ((lambda + 1.0) * (lambda + 1.0)), TauMethod::ClosedForm4),
    };
    Ok(TauResult::new(lambda, p, tau, method, 0.0))
}

fn i3(lambda: f64) -> f64 {
    let x = lambda - 1.0;
    if x.abs() < 1e-4 {
        return 1.0 / 3.0 + x * (4.0 / 15.0 + x * (-2.0 / 21.0 + x * (8.0 / 315.0 + x * 2.0 / 3465.0)));
    }
    let l2 = lambda * lambda;
    let y = l2 - 1.0;
    if y.abs() < 0.5 {
        // 1 - arctan(s)/s = s² Σ (-s²)^k / (2k + 3) with s² = λ² - 1 (either sign),
        // which avoids the cancellation of the closed form near λ = 1
        let mut sum = 0.0;
        let mut pow = 1.0;
        for k in 0..80 {
            let term = pow / (2 * k + 3) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
            pow *= -y;
        }
        return l2 * sum;
    }
    let ratio = if lambda > 1.0 {
        (1.0 / lambda).acos() / y.sqrt()
    } else {
        // continuation below 1: arccos(1/λ)/sqrt(λ²-1) = arccosh(1/λ)/sqrt(1-λ²)
        (1.0 / lambda).acosh() / (-y).sqrt()
    };
    l2 / y * (1.0 - ratio)
}

/// Closed form where available, quadrature otherwise.
pub fn tau(lambda: f64, p: usize) -> Result<TauResult> {
    if (2..=4).contains(&p) {
        tau_closed(lambda, p)
    } else {
        tau_quadrature(lambda, p)
    }
}

/// The unique `λ >= 1` with `τ(λ, p) = 1/2`, by bisection to `1e-9`.
pub fn lambda_star(p: usize) -> Result<f64> {
    if p < 2 {
        return Err(SpcaError::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while tau(hi, p)?.tau <= 0.5 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if tau(mid, p)?.tau > 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `1 - sqrt(π/2) e^{1/(2C²)} / C · erfc(1/(sqrt(2) C))`, the large-`p` limit
/// of `τ(C sqrt(p), p)`.
pub fn threshold_limit(c: f64) -> f64 {
    let x = 1.0 / (std::f64::consts::SQRT_2 * c);
    1.0 - FRAC_PI_2.sqrt() * (x * x).exp() / c * erfc(x)
}

/// The constant `C` with `λ*_p ~ C sqrt(p)`.
pub fn threshold_constant() -> f64 {
    let (mut lo, mut hi) = (0.5, 5.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if threshold_limit(mid) > 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub p: usize,
    pub p_tau: f64,
    pub p_tau0: f64,
}

/// `p τ(λ, p)` and `p τ₀(λ, p)` for each `p`; these tend to `λ²` and `1`.
pub fn tau_scaling_checks(lambda: f64, p_list: &[usize]) -> Result<Vec<ScalingRow>> {
    p_list
        .iter()
        .map(|&p| {
            let t = tau(lambda, p)?;
            Ok(ScalingRow {
                p,
                p_tau: p as f64 * t.tau,
                p_tau0: p as f64 * t.tau0,
            })
        })
        .collect()
}

/// Nested quadrature for `h(t) = f_P(sqrt(t) o₁)` and its derivative under a
/// Gaussian `Z` with `σ = 1`. With `R = ‖Z‖ ~ χ_p` and `W = sin²θ ~
/// Beta(1/2, (p-1)/2)`, write `a = λ² R² W` and `b = R² (1 - W)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianRay {
    lambda: f64,
    p: usize,
    ln_chi_norm: f64,
    ln_beta_norm: f64,
    r_max: f64,
}

const RAY_TOL: f64 = 1e-10;

impl GaussianRay {
    pub fn new(lambda: f64, p: usize) -> Result<Self> {
        check_lambda_p(lambda, p)?;
        // χ_p density: r^{p-1} e^{-r²/2} / (2^{p/2-1} Γ(p/2))
        let ln_chi_norm = -((p as f64 / 2.0 - 1.0) * 2f64.ln() + ln_gamma_half(p));
        // θ density on [0, π/2]: 2 cos^{p-2}θ / B(1/2, (p-1)/2)
        let ln_beta_norm = 2f64.ln() - (ln_gamma_half(1) + ln_gamma_half(p - 1) - ln_gamma_half(p));
        Ok(Self {
            lambda,
            p,
            ln_chi_norm,
            ln_beta_norm,
            r_max: (p as f64).sqrt() + 12.0,
        })
    }

    fn chi_density(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        (self.ln_chi_norm + (self.p as f64 - 1.0) * r.ln() - 0.5 * r * r).exp()
    }

    fn angle_density(&self, theta: f64) -> f64 {
        let c = theta.cos().max(0.0);
        if self.p == 2 {
            return self.ln_beta_norm.exp();
        }
        (self.ln_beta_norm + (self.p as f64 - 2.0) * c.ln()).exp()
    }

    fn expect<F>(&self, t: f64, g: F) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64 + Copy,
    {
        let l2 = self.lambda * self.lambda;
        let inner = |r: f64| -> f64 {
            let r2 = r * r;
            let integrand = |theta: f64| {
                let s = theta.sin();
                let c = theta.cos();
                g(l2 * r2 * s * s, r2 * c * c) * self.angle_density(theta)
            };
            // the integrand is least smooth where a = t and b = 0
            let mut breaks = Vec::new();
            let lr = self.lambda * r;
            if t > 0.0 && lr * lr > t {
                breaks.push((t.sqrt() / lr).asin());
            }
            match gauss_kronrod(integrand, 0.0, FRAC_PI_2, &breaks, RAY_TOL * 0.1, 400) {
                Ok(v) => v.value * self.chi_density(r),
                Err(_) => f64::NAN,
            }
        };
        let mut breaks = vec![(self.p as f64).sqrt()];
        if t > 0.0 {
            breaks.push(t.sqrt() / self.lambda);
        }
        let out = gauss_kronrod(inner, 0.0, self.r_max, &breaks, RAY_TOL, 400)?;
        if !out.value.is_finite() {
            return Err(SpcaError::QuadratureNonConvergence {
                tol: RAY_TOL,
                estimate: out.abs_err,
            });
        }
        Ok(out.value)
    }

    /// `h(t) = E[ sqrt((a + b + t)² - 4 t a) - a - b ]`.
    pub fn h(&self, t: f64) -> Result<f64> {
        self.expect(t, move |a, b| {
            let d = ((t - a + b) * (t - a + b) + 4.0 * a * b).sqrt();
            let denom = d + a + b;
            if denom == 0.0 {
                t
            } else {
                t * (t + 2.0 * b - 2.0 * a) / denom
            }
        })
    }

    /// `h'(t) = E[ (t - a + b) / sqrt((a + b + t)² - 4 t a) ]`.
    pub fn h_prime(&self, t: f64) -> Result<f64> {
        self.expect(t, move |a, b| {
            let num = t - a + b;
            let d = (num * num + 4.0 * a * b).sqrt();
            if d == 0.0 {
                1.0
            } else {
                num / d
            }
        })
    }
}

pub fn h_p(t: f64, lambda: f64, p: usize) -> Result<f64> {
    GaussianRay::new(lambda, p)?.h(t)
}

pub fn h_p_derivative(t: f64, lambda: f64, p: usize) -> Result<f64> {
    GaussianRay::new(lambda, p)?.h_prime(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationNorm {
    pub lambda: f64,
    pub p: usize,
    pub sigma: f64,
    pub psi: f64,
    pub tau: f64,
    /// Minimizing squared length for `σ = 1`.
    pub t_star: f64,
}

/// Norm of the population minimizer for a Gaussian `Z`: zero when
/// `τ(λ, p) <= 1/2`, otherwise `σ sqrt(t*)` with `t*` the root of the
/// increasing derivative `h'`.
pub fn population_norm(lambda: f64, p: usize, sigma: f64) -> Result<PopulationNorm> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SpcaError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let tau = tau(lambda, p)?.tau;
    let mut out = PopulationNorm {
        lambda,
        p,
        sigma,
        psi: 0.0,
        tau,
        t_star: 0.0,
    };
    if tau <= 0.5 {
        return Ok(out);
    }
    let ray = GaussianRay::new(lambda, p)?;
    let mut lo = 0.0;
    let mut hi = (10.0 * lambda).powi(2);
    while ray.h_prime(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if ray.h_prime(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.t_star = 0.5 * (lo + hi);
    out.psi = sigma * out.t_star.sqrt();
    Ok(out)
}

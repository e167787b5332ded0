//! The two simulation studies and the replication helpers behind them.
//!
//! Replicates run in parallel on a rayon pool; every replicate draws from its
//! own stream derived from the study seed and the cell it belongs to, and rows
//! come back sorted, so output does not depend on scheduling.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::asymptotics::{ascov_pca, ascov_spca, psi_monte_carlo, DEFAULT_MC_DRAWS};
use crate::error::{Result, SpcaError};
use crate::linalg::{dot, jacobi_eigen};
use crate::sampling::{sample_elliptical, sample_margins, stream_seed, EllipticalSpec, MarginModel, MarginSpec, Radial};
use crate::solver::{pca_leading, solve, SolverConfig};
use crate::theory::{population_norm, tau};

/// The `p = 3` identifiability threshold drawn as a reference line.
pub const SIM1_THRESHOLD: f64 = 1.815;

/// Worker count: the explicit value, else `THREADS` from the environment,
/// else every available core.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("THREADS").ok().and_then(|s| s.trim().parse().ok()))
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `f` on a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| SpcaError::InvalidParameter(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Seed of one study cell, mixing the study seed with the cell coordinates.
pub fn cell_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed, |acc, &x| stream_seed(acc, x))
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sim1Variant {
    /// Covariance `diag(θ², 1, 1)`.
    Equal,
    /// Covariance `diag(θ², θ, 1)`.
    SqrtSecond,
}

#[derive(Debug, Clone)]
pub struct Sim1Config {
    pub models: Vec<MarginModel>,
    pub n_list: Vec<usize>,
    pub theta_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub variant: Sim1Variant,
}

impl Default for Sim1Config {
    fn default() -> Self {
        Self {
            models: MarginModel::ALL.to_vec(),
            n_list: vec![100, 200, 400, 800],
            theta_grid: linear_grid(1.0, 3.0, 20),
            replicates: 200,
            seed: 42,
            variant: Sim1Variant::Equal,
        }
    }
}

impl Sim1Config {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.n_list.is_empty() || self.theta_grid.is_empty() {
            return Err(SpcaError::InvalidParameter("study grids must be nonempty".into()));
        }
        if self.replicates == 0 {
            return Err(SpcaError::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.n_list.contains(&0) {
            return Err(SpcaError::InvalidParameter("sample sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sim1Row {
    pub model: MarginModel,
    pub n: usize,
    pub theta: f64,
    pub mean_abs_v1: f64,
    pub mean_tail_norm: f64,
    pub replicates: usize,
    pub seed: u64,
}

fn sim1_replicate(spec: &MarginSpec, n: usize, seed: u64) -> Result<(f64, f64)> {
    let data = sample_margins(spec, n, seed)?;
    let fit = solve(&data, &SolverConfig::default(), None)?;
    if !fit.within_radius() {
        return Err(SpcaError::RadiusViolation {
            norm: fit.norm,
            bound: fit.radius.h + 0.5,
        });
    }
    Ok((fit.v[0].abs(), fit.v[1].hypot(fit.v[2])))
}

pub fn run_sim1(cfg: &Sim1Config) -> Result<Vec<Sim1Row>> {
    cfg.validate()?;
    let mut models = cfg.models.clone();
    models.sort();
    models.dedup();
    let mut cells = Vec::new();
    for &model in &models {
        for &n in &cfg.n_list {
            for &theta in &cfg.theta_grid {
                let second = match cfg.variant {
                    Sim1Variant::Equal => 1.0,
                    Sim1Variant::SqrtSecond => theta.sqrt(),
                };
                let spec = MarginSpec::new(model, theta, second)?;
                let seed = cell_seed(cfg.seed, &[model as u64, n as u64, theta.to_bits()]);
                cells.push((spec, n, seed));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicates).map(move |r| (c, r)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (spec, n, seed) = &cells[c];
            sim1_replicate(spec, *n, stream_seed(*seed, r as u64))
        })
        .collect::<Result<_>>()?;

    let reps = cfg.replicates as f64;
    let mut rows: Vec<Sim1Row> = cells
        .iter()
        .enumerate()
        .map(|(c, (spec, n, _))| {
            let chunk = &results[c * cfg.replicates..(c + 1) * cfg.replicates];
            Sim1Row {
                model: spec.model,
                n: *n,
                theta: spec.theta,
                mean_abs_v1: chunk.iter().map(|x| x.0).sum::<f64>() / reps,
                mean_tail_norm: chunk.iter().map(|x| x.1).sum::<f64>() / reps,
                replicates: cfg.replicates,
                seed: cfg.seed,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.model, a.n)
            .cmp(&(b.model, b.n))
            .then(a.theta.total_cmp(&b.theta))
    });
    Ok(rows)
}

pub fn write_sim1_csv<W: Write>(rows: &[Sim1Row], mut out: W) -> std::io::Result<()> {
    writeln!(out, "model,n,theta,mean_abs_v1,mean_tail_norm,replicates,seed,threshold")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model.name(),
            r.n,
            r.theta,
            r.mean_abs_v1,
            r.mean_tail_norm,
            r.replicates,
            r.seed,
            SIM1_THRESHOLD
        )?;
    }
    Ok(())
}

/// How the direction covariances of the second study are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sim2Method {
    /// Monte-Carlo plug-in of the limiting formulas.
    Plugin,
    /// Empirical covariance of `sqrt(n)(direction - o₁)` over replicated fits.
    Empirical { n: usize, replicates: usize },
}

#[derive(Debug, Clone)]
pub struct Sim2Config {
    pub p_list: Vec<usize>,
    pub radials: Vec<Radial>,
    pub lambda_grid: Vec<f64>,
    pub mc_draws: usize,
    /// Sample size of the single large fit that supplies `ψ` for t laws.
    pub psi_sample: usize,
    pub seed: u64,
    pub method: Sim2Method,
}

impl Default for Sim2Config {
    fn default() -> Self {
        Self {
            p_list: vec![3, 5],
            radials: vec![Radial::StudentT(3), Radial::StudentT(5), Radial::StudentT(10)],
            lambda_grid: vec![2.0, 5.0, 10.0, 20.0, 40.0],
            mc_draws: DEFAULT_MC_DRAWS,
            psi_sample: 100_000,
            seed: 42,
            method: Sim2Method::Plugin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sim2Row {
    pub p: usize,
    pub radial: Radial,
    pub lambda: f64,
    pub psi: f64,
    /// Natural log of the spectral norm; NaN when `ψ = 0`.
    pub log_spca: f64,
    pub log_pca: f64,
    pub pca_moment_warning: bool,
    pub mc_draws: usize,
    pub seed: u64,
    pub method: Sim2Method,
}

fn radial_key(r: Radial) -> u64 {
    match r {
        Radial::Gaussian => u64::MAX,
        Radial::StudentT(nu) => nu as u64,
    }
}

/// `ψ` for any supported radial law: quadrature for Gaussian, a large-sample
/// ray search otherwise. Zero whenever the model is not identifiable.
pub fn population_psi(spec: &EllipticalSpec, psi_sample: usize, seed: u64) -> Result<f64> {
    if tau(spec.lambda, spec.p)?.tau <= 0.5 {
        return Ok(0.0);
    }
    match spec.radial {
        Radial::Gaussian => Ok(population_norm(spec.lambda, spec.p, spec.sigma)?.psi),
        Radial::StudentT(_) => psi_monte_carlo(spec, psi_sample, seed),
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateFit {
    /// Fitted `v`, signed so that `v'o₁ >= 0`.
    pub v: Vec<f64>,
    pub norm: f64,
    pub direction: Option<Vec<f64>>,
    /// Leading sample-covariance eigenvector, signed like `v`.
    pub pca_direction: Vec<f64>,
}

/// Fit `replicates` independent samples of size `n` from `spec`.
pub fn fit_replicates(spec: &EllipticalSpec, n: usize, replicates: usize, seed: u64) -> Result<Vec<ReplicateFit>> {
    let o1 = spec.o1();
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let data = sample_elliptical(spec, n, stream_seed(seed, r as u64))?;
            let fit = solve(&data, &SolverConfig::default(), None)?;
            let flip = if dot(&fit.v, &o1) < 0.0 { -1.0 } else { 1.0 };
            let (mut pca, _) = pca_leading(&data)?;
            if dot(&pca, &o1) < 0.0 {
                pca.iter_mut().for_each(|x| *x = -*x);
            }
            Ok(ReplicateFit {
                v: fit.v.iter().map(|x| flip * x).collect(),
                norm: fit.norm,
                direction: fit.direction.map(|d| d.iter().map(|x| flip * x).collect()),
                pca_direction: pca,
            })
        })
        .collect()
}

/// Covariance (divisor `k`) of `scale * (x_i - center)` over the given vectors.
pub fn scaled_deviation_cov(vectors: &[Vec<f64>], center: &[f64], scale: f64) -> DMatrix<f64> {
    let p = center.len();
    let k = vectors.len() as f64;
    let mut m = DMatrix::<f64>::zeros(p, p);
    for v in vectors {
        let d: Vec<f64> = v.iter().zip(center).map(|(a, b)| scale * (a - b)).collect();
        for r in 0..p {
            for c in 0..p {
                m[(r, c)] += d[r] * d[c] / k;
            }
        }
    }
    m
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    jacobi_eigen(m).values.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn sim2_cell(cfg: &Sim2Config, p: usize, radial: Radial, lambda: f64) -> Result<Sim2Row> {
    let spec = EllipticalSpec::axis_aligned(p, lambda, 1.0, radial)?;
    let seed = cell_seed(cfg.seed, &[p as u64, radial_key(radial), lambda.to_bits()]);
    let psi = population_psi(&spec, cfg.psi_sample, stream_seed(seed, 1))?;
    let (log_spca, log_pca, warn) = match cfg.method {
        Sim2Method::Plugin => {
            let log_spca = if psi > 0.0 {
                ascov_spca(&spec, psi, cfg.mc_draws, stream_seed(seed, 2))?
                    .direction_spectral_norm()
                    .ln()
            } else {
                f64::NAN
            };
            let pca = ascov_pca(&spec, cfg.mc_draws, stream_seed(seed, 3))?;
            (log_spca, pca.direction_spectral_norm().ln(), pca.moment_warning)
        }
        Sim2Method::Empirical { n, replicates } => {
            let fits = fit_replicates(&spec, n, replicates, stream_seed(seed, 4))?;
            let o1 = spec.o1();
            let scale = (n as f64).sqrt();
            let log_spca = if psi > 0.0 {
                let dirs: Vec<Vec<f64>> = fits
                    .iter()
                    .map(|f| f.direction.clone().unwrap_or_else(|| vec![0.0; p]))
                    .collect();
                spectral_norm(&scaled_deviation_cov(&dirs, &o1, scale)).ln()
            } else {
                f64::NAN
            };
            let pcas: Vec<Vec<f64>> = fits.iter().map(|f| f.pca_direction.clone()).collect();
            let log_pca = spectral_norm(&scaled_deviation_cov(&pcas, &o1, scale)).ln();
            (log_spca, log_pca, matches!(radial, Radial::StudentT(nu) if nu <= 4))
        }
    };
    Ok(Sim2Row {
        p,
        radial,
        lambda,
        psi,
        log_spca,
        log_pca,
        pca_moment_warning: warn,
        mc_draws: cfg.mc_draws,
        seed: cfg.seed,
        method: cfg.method,
    })
}

pub fn run_sim2(cfg: &Sim2Config) -> Result<Vec<Sim2Row>> {
    if cfg.p_list.is_empty() || cfg.radials.is_empty() || cfg.lambda_grid.is_empty() {
        return Err(SpcaError::InvalidParameter("study grids must be nonempty".into()));
    }
    let mut cells = Vec::new();
    for &p in &cfg.p_list {
        for &radial in &cfg.radials {
            for &lambda in &cfg.lambda_grid {
                cells.push((p, radial, lambda));
            }
        }
    }
    let mut rows: Vec<Sim2Row> = cells
        .par_iter()
        .map(|&(p, radial, lambda)| sim2_cell(cfg, p, radial, lambda))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        (a.p, radial_key(a.radial))
            .cmp(&(b.p, radial_key(b.radial)))
            .then(a.lambda.total_cmp(&b.lambda))
    });
    Ok(rows)
}

pub fn write_sim2_csv<W: Write>(rows: &[Sim2Row], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "p,nu,lambda,log_spca_direction,log_pca_direction,mc_draws,seed,psi,method,pca_moment_warning"
    )?;
    for r in rows {
        let method = match r.method {
            Sim2Method::Plugin => "plugin".to_string(),
            Sim2Method::Empirical { n, replicates } => format!("empirical-n{n}-r{replicates}"),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.p,
            r.radial.label(),
            r.lambda,
            r.log_spca,
            r.log_pca,
            r.mc_draws,
            r.seed,
            r.psi,
            method,
            r.pca_moment_warning
        )?;
    }
    Ok(())
}

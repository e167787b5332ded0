//! Seeded samplers for the elliptical model and for the independent-margin
//! models of the first simulation study.
//!
//! Every sampler owns a ChaCha8 stream keyed by a 64-bit seed; replicate `r`
//! of a study uses [`stream_seed`]`(seed, r)`, so results do not depend on the
//! order in which replicates run. Normal variates come from the inverse CDF.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DataSet;
use crate::error::{Result, SpcaError};
use crate::special::normal_quantile;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `replicate` within a study seeded by `seed`.
pub fn stream_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(replicate.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// A reproducible stream of uniforms, normals and chi-squares.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }

    /// Chi-square with `nu` degrees of freedom as a sum of squared normals.
    pub fn chi_square(&mut self, nu: u32) -> f64 {
        (0..nu)
            .map(|_| {
                let z = self.normal();
                z * z
            })
            .sum()
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u64() >> 63 == 0 {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Radial {
    Gaussian,
    /// Multivariate t with integer degrees of freedom.
    StudentT(u32),
}

impl Radial {
    pub fn label(self) -> String {
        match self {
            Radial::Gaussian => "inf".to_string(),
            Radial::StudentT(nu) => nu.to_string(),
        }
    }
}

/// `X = O Λ Z` with `Λ = σ diag(λ, 1, ..., 1)` and spherical `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalSpec {
    pub p: usize,
    pub o: DMatrix<f64>,
    pub lambda: f64,
    pub sigma: f64,
    pub radial: Radial,
}

impl EllipticalSpec {
    pub fn new(o: DMatrix<f64>, lambda: f64, sigma: f64, radial: Radial) -> Result<Self> {
        let p = o.nrows();
        if p < 2 || o.ncols() != p {
            return Err(SpcaError::InvalidParameter(format!(
                "O must be square with p >= 2, got {}x{}",
                o.nrows(),
                o.ncols()
            )));
        }
        let gram = o.transpose() * &o - DMatrix::<f64>::identity(p, p);
        if gram.amax() > 1e-10 {
            return Err(SpcaError::InvalidParameter("O is not orthogonal".into()));
        }
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(SpcaError::InvalidParameter(format!("lambda must exceed 1, got {lambda}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SpcaError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if let Radial::StudentT(0) = radial {
            return Err(SpcaError::InvalidParameter("t degrees of freedom must be at least 1".into()));
        }
        Ok(Self {
            p,
            o,
            lambda,
            sigma,
            radial,
        })
    }

    /// The axis-aligned model with `O = I`.
    pub fn axis_aligned(p: usize, lambda: f64, sigma: f64, radial: Radial) -> Result<Self> {
        Self::new(DMatrix::identity(p, p), lambda, sigma, radial)
    }

    /// Leading principal direction `o₁`.
    pub fn o1(&self) -> Vec<f64> {
        self.o.column(0).iter().copied().collect()
    }

    fn scales(&self) -> Vec<f64> {
        let mut s = vec![self.sigma; self.p];
        s[0] *= self.lambda;
        s
    }
}

/// Draw one spherical `Z` into `z`.
pub fn draw_spherical(stream: &mut Stream, radial: Radial, z: &mut [f64]) {
    for zi in z.iter_mut() {
        *zi = stream.normal();
    }
    if let Radial::StudentT(nu) = radial {
        let w = (nu as f64 / stream.chi_square(nu)).sqrt();
        z.iter_mut().for_each(|zi| *zi *= w);
    }
}

/// Rows `Λ Z_i`, i.e. the model before the rotation `O`.
pub fn sample_spherical(spec: &EllipticalSpec, n: usize, seed: u64) -> Result<DataSet> {
    let scales = spec.scales();
    let mut stream = Stream::new(seed);
    let mut values = Vec::with_capacity(n * spec.p);
    let mut z = vec![0.0; spec.p];
    for _ in 0..n {
        draw_spherical(&mut stream, spec.radial, &mut z);
        values.extend(z.iter().zip(&scales).map(|(zi, s)| zi * s));
    }
    DataSet::new(n, spec.p, values)
}

pub fn sample_elliptical(spec: &EllipticalSpec, n: usize, seed: u64) -> Result<DataSet> {
    let base = sample_spherical(spec, n, seed)?;
    base.transformed(&spec.o)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MarginModel {
    Normal,
    Uniform,
    Bernoulli,
}

impl MarginModel {
    pub fn name(self) -> &'static str {
        match self {
            MarginModel::Normal => "normal",
            MarginModel::Uniform => "uniform",
            MarginModel::Bernoulli => "bernoulli",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Some(MarginModel::Normal),
            "uniform" => Some(MarginModel::Uniform),
            "bernoulli" => Some(MarginModel::Bernoulli),
            _ => None,
        }
    }

    pub const ALL: [MarginModel; 3] = [MarginModel::Normal, MarginModel::Uniform, MarginModel::Bernoulli];
}

/// Three independent margins with standard deviations `(theta, second_sd, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    pub model: MarginModel,
    pub theta: f64,
    pub second_sd: f64,
}

impl MarginSpec {
    pub fn new(model: MarginModel, theta: f64, second_sd: f64) -> Result<Self> {
        if !(theta >= 1.0 && theta.is_finite()) {
            return Err(SpcaError::InvalidParameter(format!("theta must be at least 1, got {theta}")));
        }
        if !(second_sd > 0.0 && second_sd.is_finite()) {
            return Err(SpcaError::InvalidParameter(format!(
                "second_sd must be positive, got {second_sd}"
            )));
        }
        Ok(Self {
            model,
            theta,
            second_sd,
        })
    }

    pub fn sds(&self) -> [f64; 3] {
        [self.theta, self.second_sd, 1.0]
    }
}

pub fn sample_margins(spec: &MarginSpec, n: usize, seed: u64) -> Result<DataSet> {
    let sds = spec.sds();
    let mut stream = Stream::new(seed);
    let mut values = Vec::with_capacity(3 * n);
    for _ in 0..n {
        for sd in sds {
            let x = match spec.model {
                MarginModel::Normal => sd * stream.normal(),
                MarginModel::Uniform => sd * 3f64.sqrt() * (2.0 * stream.uniform() - 1.0),
                MarginModel::Bernoulli => sd * stream.sign(),
            };
            values.push(x);
        }
    }
    DataSet::new(n, 3, values)
}

/// Orthogonal matrix from the QR factorization of a seeded Gaussian matrix,
/// with the signs fixed so that `R` has a positive diagonal.
pub fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    let mut stream = Stream::new(seed);
    let g = DMatrix::from_fn(p, p, |_, _| stream.normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stays_inside_open_interval() {
        let mut s = Stream::new(7);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn stream_seeds_differ() {
        let a = stream_seed(42, 0);
        let b = stream_seed(42, 1);
        let c = stream_seed(43, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(stream_seed(42, 5), stream_seed(42, 5));
    }

    #[test]
    fn margins_follow_construction() {
        let spec = MarginSpec::new(MarginModel::Bernoulli, 2.0, 2f64.sqrt()).unwrap();
        let d = sample_margins(&spec, 500, 1).unwrap();
        for x in d.rows() {
            assert!(x[0].abs() == 2.0 && x[1].abs() == 2f64.sqrt() && x[2].abs() == 1.0);
        }
        let spec = MarginSpec::new(MarginModel::Uniform, 2.5, 1.0).unwrap();
        let d = sample_margins(&spec, 2000, 2).unwrap();
        assert!(d.rows().all(|x| x[0].abs() <= 2.5 * 3f64.sqrt()));
        assert!(MarginSpec::new(MarginModel::Normal, 0.5, 1.0).is_err());
    }

    #[test]
    fn orthogonal_sampler() {
        let q = random_orthogonal(5, 3);
        let e = q.transpose() * &q - DMatrix::<f64>::identity(5, 5);
        assert!(e.amax() < 1e-12);
        assert_eq!(q, random_orthogonal(5, 3));
    }

    #[test]
    fn elliptical_spec_validation() {
        assert!(EllipticalSpec::axis_aligned(2, 1.0, 1.0, Radial::Gaussian).is_err());
        assert!(EllipticalSpec::axis_aligned(1, 2.0, 1.0, Radial::Gaussian).is_err());
        assert!(EllipticalSpec::axis_aligned(3, 2.0, 1.0, Radial::StudentT(0)).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(EllipticalSpec::new(bad, 2.0, 1.0, Radial::Gaussian).is_err());
    }
}

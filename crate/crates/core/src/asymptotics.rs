//! Monte-Carlo plug-in estimates of the limiting covariance of the estimator
//! and of the leading sample-covariance eigenvector, plus the split of a
//! covariance into norm and direction blocks.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::DataSet;
use crate::error::{Result, SpcaError};
use crate::linalg::{dot, norm};
use crate::sampling::{draw_spherical, sample_elliptical, stream_seed, EllipticalSpec, Radial, Stream};
use crate::solver::ray_line_search;

pub const BATCHES: usize = 20;
pub const DEFAULT_MC_DRAWS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AscovMethod {
    SpcaPlugin,
    PcaFormula,
}

#[derive(Debug, Clone)]
pub struct AscovEstimate {
    /// Variance along `o₁` (zero for the PCA direction).
    pub q1: f64,
    /// Variance along each tail direction.
    pub q2: f64,
    pub sigma_matrix: DMatrix<f64>,
    pub mc_draws: usize,
    /// Batch-means standard errors of `q1` and `q2`.
    pub q1_se: f64,
    pub q2_se: f64,
    pub psi_used: f64,
    pub method: AscovMethod,
    /// Set when the radial law lacks the moments the formula relies on.
    pub moment_warning: bool,
}

impl AscovEstimate {
    /// Covariance of the unit-length direction: `q2/ψ² O(I - e₁e₁')O'` for the
    /// plug-in, the matrix itself for PCA.
    pub fn direction_cov(&self) -> DMatrix<f64> {
        match self.method {
            AscovMethod::SpcaPlugin => {
                let s = self.q2 / (self.psi_used * self.psi_used);
                tail_projector(&self.sigma_matrix, self.q1, self.q2).scale(s)
            }
            AscovMethod::PcaFormula => self.sigma_matrix.clone(),
        }
    }

    /// Largest eigenvalue of [`Self::direction_cov`]; the matrix is a
    /// multiple of a projector, so this is its nonzero eigenvalue.
    pub fn direction_spectral_norm(&self) -> f64 {
        match self.method {
            AscovMethod::SpcaPlugin => self.q2 / (self.psi_used * self.psi_used),
            AscovMethod::PcaFormula => self.q2,
        }
    }

    pub fn direction_spectral_norm_se(&self) -> f64 {
        match self.method {
            AscovMethod::SpcaPlugin => self.q2_se / (self.psi_used * self.psi_used),
            AscovMethod::PcaFormula => self.q2_se,
        }
    }
}

// recover O(I - e₁e₁')O' from Σ = O(q1 e₁e₁' + q2 (I - e₁e₁'))O'
fn tail_projector(sigma: &DMatrix<f64>, q1: f64, q2: f64) -> DMatrix<f64> {
    let p = sigma.nrows();
    let id = DMatrix::<f64>::identity(p, p);
    if (q1 - q2).abs() < f64::EPSILON * q1.abs().max(q2.abs()) {
        return id;
    }
    // Σ = q2 I + (q1 - q2) o₁o₁'  so  o₁o₁' = (Σ - q2 I)/(q1 - q2)
    let lead = (sigma - id.scale(q2)).scale(1.0 / (q1 - q2));
    id - lead
}

fn assemble(o: &DMatrix<f64>, q1: f64, q2: f64) -> DMatrix<f64> {
    let p = o.nrows();
    let mut d = DMatrix::<f64>::identity(p, p).scale(q2);
    d[(0, 0)] = q1;
    let mut s = o * d * o.transpose();
    for r in 0..p {
        for c in (r + 1)..p {
            let m = 0.5 * (s[(r, c)] + s[(c, r)]);
            s[(r, c)] = m;
            s[(c, r)] = m;
        }
    }
    s
}

fn batch_sizes(total: usize) -> Vec<usize> {
    let base = total / BATCHES;
    let extra = total % BATCHES;
    (0..BATCHES).map(|b| base + usize::from(b < extra)).collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, Copy, Default)]
struct PluginSums {
    a1: f64,
    a2: f64,
    b2: f64,
    a4: f64,
    b4: f64,
    c1: f64,
    d1: f64,
    s1: f64,
    s2: f64,
    count: usize,
}

impl PluginSums {
    fn add(&mut self, other: &PluginSums) {
        self.a1 += other.a1;
        self.a2 += other.a2;
        self.b2 += other.b2;
        self.a4 += other.a4;
        self.b4 += other.b4;
        self.c1 += other.c1;
        self.d1 += other.d1;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.count += other.count;
    }

    fn q(&self, psi: f64) -> (f64, f64) {
        let k = self.count as f64;
        let (a1, a2, b2, a4, b4) = (self.a1 / k, self.a2 / k, self.b2 / k, self.a4 / k, self.b4 / k);
        let (c1, d1, s1, s2) = (self.c1 / k, self.d1 / k, self.s1 / k, self.s2 / k);
        let g1 = a1 - 2.0 * a2 + 2.0 * a4;
        let g2 = a1 - 2.0 * b2 + 2.0 * b4;
        (2.0 * (c1 - s1 + psi * psi) / (g1 * g1), 2.0 * (d1 - s2) / (g2 * g2))
    }
}

fn plugin_batch(spec: &EllipticalSpec, psi: f64, draws: usize, seed: u64) -> PluginSums {
    let p = spec.p;
    let tails = (p - 1) as f64;
    let o1 = spec.o1();
    let v: Vec<f64> = o1.iter().map(|x| psi * x).collect();
    let mut stream = Stream::new(seed);
    let mut z = vec![0.0; p];
    let mut x = vec![0.0; p];
    let mut dm = vec![0.0; p];
    let mut dp = vec![0.0; p];
    let mut acc = PluginSums::default();
    for _ in 0..draws {
        draw_spherical(&mut stream, spec.radial, &mut z);
        z[0] *= spec.lambda;
        for r in 0..p {
            x[r] = spec.sigma * (0..p).map(|c| spec.o[(r, c)] * z[c]).sum::<f64>();
        }
        for j in 0..p {
            dm[j] = v[j] - x[j];
            dp[j] = v[j] + x[j];
        }
        let a = norm(&dm);
        let b = norm(&dp);
        let sm = dot(&o1, &dm);
        let sp = dot(&o1, &dp);
        let ab = a * b;
        let ba3 = b / (a * a * a);
        let perp = (a * a - sm * sm).max(0.0);
        let r2 = (b * b) / (a * a);
        let xo = dot(&o1, &x);
        acc.a1 += b / a + a / b;
        acc.a2 += ba3 * sm * sm;
        acc.b2 += ba3 * perp / tails;
        acc.a4 += sp * sm / ab;
        acc.b4 += (dot(&dp, &dm) - sp * sm) / (tails * ab);
        acc.c1 += r2 * sm * sm;
        acc.d1 += r2 * perp / tails;
        acc.s1 += xo * xo;
        acc.s2 += (dot(&x, &x) - xo * xo) / tails;
        acc.count += 1;
    }
    acc
}

/// Plug-in estimate of `Σ = O(q1 e₁e₁' + q2 (I - e₁e₁'))O'` at `v = ψ o₁`,
/// averaging the tail-direction quantities over all `p - 1` tail axes.
pub fn ascov_spca(spec: &EllipticalSpec, psi: f64, mc_draws: usize, seed: u64) -> Result<AscovEstimate> {
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(SpcaError::InvalidPsi(psi));
    }
    if let Radial::StudentT(nu) = spec.radial {
        if nu < 3 {
            return Err(SpcaError::NonFiniteMoment(format!(
                "the plug-in needs a finite second moment; t with {nu} degrees of freedom has none"
            )));
        }
    }
    if mc_draws < BATCHES * 2 {
        return Err(SpcaError::InvalidParameter(format!("mc_draws must be at least {}", BATCHES * 2)));
    }
    let batches: Vec<PluginSums> = batch_sizes(mc_draws)
        .into_par_iter()
        .enumerate()
        .map(|(b, m)| plugin_batch(spec, psi, m, stream_seed(seed, b as u64)))
        .collect();
    let mut total = PluginSums::default();
    for b in &batches {
        total.add(b);
    }
    let (q1, q2) = total.q(psi);
    let per: Vec<(f64, f64)> = batches.iter().map(|b| b.q(psi)).collect();
    let (_, q1_se) = mean_and_se(&per.iter().map(|x| x.0).collect::<Vec<_>>());
    let (_, q2_se) = mean_and_se(&per.iter().map(|x| x.1).collect::<Vec<_>>());
    Ok(AscovEstimate {
        q1,
        q2,
        sigma_matrix: assemble(&spec.o, q1, q2),
        mc_draws,
        q1_se,
        q2_se,
        psi_used: psi,
        method: AscovMethod::SpcaPlugin,
        moment_warning: false,
    })
}

/// `λ²/(λ² - 1)² · E(Z₁²Z₂²)/E(Z₁²)² · O(I - e₁e₁')O'` with the moments of
/// the radial law estimated by Monte Carlo.
pub fn ascov_pca(spec: &EllipticalSpec, mc_draws: usize, seed: u64) -> Result<AscovEstimate> {
    if mc_draws < BATCHES * 2 {
        return Err(SpcaError::InvalidParameter(format!("mc_draws must be at least {}", BATCHES * 2)));
    }
    let p = spec.p;
    let radial = spec.radial;
    let batches: Vec<(f64, f64, usize)> = batch_sizes(mc_draws)
        .into_par_iter()
        .enumerate()
        .map(|(b, m)| {
            let mut stream = Stream::new(stream_seed(seed, b as u64));
            let mut z = vec![0.0; p];
            let (mut m22, mut m2) = (0.0, 0.0);
            for _ in 0..m {
                draw_spherical(&mut stream, radial, &mut z);
                // both moments are averaged over every ordered pair / axis
                let sq: Vec<f64> = z.iter().map(|x| x * x).collect();
                let s: f64 = sq.iter().sum();
                let s2: f64 = sq.iter().map(|x| x * x).sum();
                m22 += (s * s - s2) / (p * (p - 1)) as f64;
                m2 += s / p as f64;
            }
            (m22, m2, m)
        })
        .collect();
    let l2 = spec.lambda * spec.lambda;
    let lead = l2 / ((l2 - 1.0) * (l2 - 1.0));
    let coef = |m22: f64, m2: f64, k: usize| {
        let k = k as f64;
        lead * (m22 / k) / ((m2 / k) * (m2 / k))
    };
    let (mut t22, mut t2, mut tk) = (0.0, 0.0, 0);
    for &(a, b, k) in &batches {
        t22 += a;
        t2 += b;
        tk += k;
    }
    let q2 = coef(t22, t2, tk);
    let per: Vec<f64> = batches.iter().map(|&(a, b, k)| coef(a, b, k)).collect();
    let (_, q2_se) = mean_and_se(&per);
    let moment_warning = matches!(radial, Radial::StudentT(nu) if nu <= 4);
    Ok(AscovEstimate {
        q1: 0.0,
        q2,
        sigma_matrix: assemble(&spec.o, 0.0, q2),
        mc_draws,
        q1_se: 0.0,
        q2_se,
        psi_used: f64::NAN,
        method: AscovMethod::PcaFormula,
        moment_warning,
    })
}

#[derive(Debug, Clone)]
pub struct NormDirectionSplit {
    pub norm_var: f64,
    pub dir_cov: DMatrix<f64>,
    pub cross: Vec<f64>,
}

/// With `Q = I - hh'/‖h‖²`: `h'Σh/‖h‖²`, `QΣQ/‖h‖²` and `QΣh/‖h‖²`.
pub fn split_norm_direction(sigma: &DMatrix<f64>, h: &[f64]) -> Result<NormDirectionSplit> {
    let p = h.len();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(SpcaError::DimensionMismatch {
            expected: p,
            got: sigma.nrows(),
        });
    }
    let hh = dot(h, h);
    if hh == 0.0 {
        return Err(SpcaError::ZeroVector);
    }
    let hv = DMatrix::from_column_slice(p, 1, h);
    let q = DMatrix::<f64>::identity(p, p) - (&hv * hv.transpose()).scale(1.0 / hh);
    let sh = sigma * &hv;
    let norm_var = (hv.transpose() * &sh)[(0, 0)] / hh;
    let dir_cov = (&q * sigma * &q).scale(1.0 / hh);
    let cross = (&q * &sh).scale(1.0 / hh).iter().copied().collect();
    Ok(NormDirectionSplit {
        norm_var,
        dir_cov,
        cross,
    })
}

/// Population norm for radial laws without a quadrature route: the ray
/// search along `o₁` on one large sample.
pub fn psi_monte_carlo(spec: &EllipticalSpec, n: usize, seed: u64) -> Result<f64> {
    let data: DataSet = sample_elliptical(spec, n, seed)?;
    ray_line_search(&spec.o1(), &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_orthogonal;

    #[test]
    fn split_identity_case() {
        let s = DMatrix::<f64>::identity(2, 2);
        let out = split_norm_direction(&s, &[1.0, 0.0]).unwrap();
        assert!((out.norm_var - 1.0).abs() < 1e-15);
        assert!((out.dir_cov[(1, 1)] - 1.0).abs() < 1e-15 && out.dir_cov[(0, 0)].abs() < 1e-15);
        assert!(out.cross.iter().all(|c| c.abs() < 1e-15));
        assert_eq!(split_norm_direction(&s, &[0.0, 0.0]).unwrap_err(), SpcaError::ZeroVector);
    }

    #[test]
    fn plugin_structure() {
        let o = random_orthogonal(3, 11);
        let spec = EllipticalSpec::new(o.clone(), 3.0, 1.0, Radial::Gaussian).unwrap();
        let est = ascov_spca(&spec, 1.5, 20_000, 5).unwrap();
        let o1 = spec.o1();
        let so1 = &est.sigma_matrix * DMatrix::from_column_slice(3, 1, &o1);
        for j in 0..3 {
            assert!((so1[j] - est.q1 * o1[j]).abs() < 1e-10);
        }
        let o2: Vec<f64> = o.column(1).iter().copied().collect();
        let so2 = &est.sigma_matrix * DMatrix::from_column_slice(3, 1, &o2);
        for j in 0..3 {
            assert!((so2[j] - est.q2 * o2[j]).abs() < 1e-10);
        }
        let h: Vec<f64> = o1.iter().map(|x| 1.5 * x).collect();
        let split = split_norm_direction(&est.sigma_matrix, &h).unwrap();
        assert!((split.norm_var - est.q1).abs() < 1e-10);
        assert!(split.cross.iter().all(|c| c.abs() < 1e-10));
        let dc = est.direction_cov();
        assert!((&split.dir_cov - &dc).amax() < 1e-10);
    }

    #[test]
    fn plugin_rejects_bad_inputs() {
        let spec = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::Gaussian).unwrap();
        assert_eq!(ascov_spca(&spec, 0.0, 1000, 1).unwrap_err(), SpcaError::InvalidPsi(0.0));
        let t2 = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::StudentT(2)).unwrap();
        assert!(matches!(ascov_spca(&t2, 1.0, 1000, 1), Err(SpcaError::NonFiniteMoment(_))));
    }

    #[test]
    fn pca_matrix_annihilates_o1() {
        let o = random_orthogonal(4, 2);
        let spec = EllipticalSpec::new(o, 2.0, 1.0, Radial::StudentT(3)).unwrap();
        let est = ascov_pca(&spec, 4000, 9).unwrap();
        assert!(est.moment_warning);
        let o1 = spec.o1();
        let v = &est.sigma_matrix * DMatrix::from_column_slice(4, 1, &o1);
        assert!(v.amax() < 1e-12);
    }
}

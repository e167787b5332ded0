//! Python bindings. Data sets cross the boundary as lists of rows.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use spca_core::sampling::{self, Radial};
use spca_core::{harness, DataSet, EllipticalSpec, MarginModel, MarginSpec, SolverConfig, SpcaError, Status};

create_exception!(spca, DegenerateDataError, PyException);
create_exception!(spca, ConvergenceError, PyException);

fn to_py(e: SpcaError) -> PyErr {
    let msg = e.to_string();
    match e {
        SpcaError::AllZeroData
        | SpcaError::DegenerateData
        | SpcaError::UndefinedScale
        | SpcaError::ZeroVector
        | SpcaError::SamplePointHit { .. }
        | SpcaError::DirectionAtSamplePoint { .. } => DegenerateDataError::new_err(msg),
        SpcaError::BacktrackExhausted { .. }
        | SpcaError::QuadratureNonConvergence { .. }
        | SpcaError::RadiusViolation { .. } => ConvergenceError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn dataset(rows: &[Vec<f64>]) -> PyResult<DataSet> {
    DataSet::from_rows(rows).map_err(to_py)
}

fn radial(nu: Option<u32>) -> Radial {
    nu.map_or(Radial::Gaussian, Radial::StudentT)
}

fn spec(p: usize, lambda: f64, sigma: f64, nu: Option<u32>, rotation_seed: Option<u64>) -> PyResult<EllipticalSpec> {
    match rotation_seed {
        None => EllipticalSpec::axis_aligned(p, lambda, sigma, radial(nu)),
        Some(s) => EllipticalSpec::new(sampling::random_orthogonal(p, s), lambda, sigma, radial(nu)),
    }
    .map_err(to_py)
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "SolverResult", get_all, frozen)]
struct PySolverResult {
    v: Vec<f64>,
    norm: f64,
    direction: Option<Vec<f64>>,
    objective: f64,
    iterations: usize,
    escape_steps: usize,
    converged: bool,
    polished: bool,
    radius_bound: f64,
    within_radius: bool,
    trace: Vec<f64>,
}

#[pymethods]
impl PySolverResult {
    fn __repr__(&self) -> String {
        format!(
            "SolverResult(norm={}, direction={:?}, iterations={}, converged={})",
            self.norm, self.direction, self.iterations, self.converged
        )
    }
}

#[pyclass(name = "TauResult", get_all, frozen)]
struct PyTauResult {
    lambda_: f64,
    p: usize,
    tau: f64,
    tau0: f64,
    method: String,
    abs_err_estimate: f64,
    identifiable: bool,
}

#[pymethods]
impl PyTauResult {
    fn __repr__(&self) -> String {
        format!("TauResult(lambda={}, p={}, tau={}, method={})", self.lambda_, self.p, self.tau, self.method)
    }
}

#[pyclass(name = "AscovEstimate", get_all, frozen)]
struct PyAscovEstimate {
    q1: f64,
    q2: f64,
    q1_se: f64,
    q2_se: f64,
    sigma_matrix: Vec<Vec<f64>>,
    direction_cov: Vec<Vec<f64>>,
    direction_spectral_norm: f64,
    direction_spectral_norm_se: f64,
    psi: f64,
    mc_draws: usize,
    moment_warning: bool,
}

impl From<spca_core::AscovEstimate> for PyAscovEstimate {
    fn from(e: spca_core::AscovEstimate) -> Self {
        Self {
            q1: e.q1,
            q2: e.q2,
            q1_se: e.q1_se,
            q2_se: e.q2_se,
            sigma_matrix: matrix_rows(&e.sigma_matrix),
            direction_cov: matrix_rows(&e.direction_cov()),
            direction_spectral_norm: e.direction_spectral_norm(),
            direction_spectral_norm_se: e.direction_spectral_norm_se(),
            psi: e.psi_used,
            mc_draws: e.mc_draws,
            moment_warning: e.moment_warning,
        }
    }
}

/// Mean of `‖x - v‖‖x + v‖ - ‖x‖²` over the rows of `data`.
#[pyfunction]
fn objective(v: Vec<f64>, data: Vec<Vec<f64>>) -> PyResult<f64> {
    spca_core::objective_value(&v, &dataset(&data)?).map_err(to_py)
}

#[pyfunction]
fn gradient(v: Vec<f64>, data: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    spca_core::gradient(&v, &dataset(&data)?).map_err(to_py)
}

#[pyfunction]
fn hessian(v: Vec<f64>, data: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    spca_core::hessian(&v, &dataset(&data)?).map(|h| matrix_rows(&h)).map_err(to_py)
}

/// Returns `(matrix, leading_eigenvalue, leading_vector)`.
#[pyfunction]
fn sign_covariance(data: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, f64, Vec<f64>)> {
    let s = spca_core::sign_covariance(&dataset(&data)?).map_err(to_py)?;
    Ok((matrix_rows(&s.matrix), s.leading_eig, s.leading_vector))
}

/// Returns `(vector, eigenvalue)` of the sample covariance.
#[pyfunction]
fn pca_leading(data: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    spca_core::pca_leading(&dataset(&data)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (data, init=None, tolerance=None, max_iter=10_000, polish=true))]
fn solve(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    init: Option<Vec<f64>>,
    tolerance: Option<f64>,
    max_iter: usize,
    polish: bool,
) -> PyResult<PySolverResult> {
    let data = dataset(&data)?;
    let cfg = SolverConfig {
        tolerance,
        max_iter,
        polish,
        ..SolverConfig::default()
    };
    let fit = py
        .detach(|| spca_core::solve(&data, &cfg, init.as_deref()))
        .map_err(to_py)?;
    Ok(PySolverResult {
        within_radius: fit.within_radius(),
        v: fit.v,
        norm: fit.norm,
        direction: fit.direction,
        objective: fit.objective,
        iterations: fit.iterations,
        escape_steps: fit.escape_steps_taken,
        converged: fit.status == Status::Converged,
        polished: fit.polished,
        radius_bound: fit.radius.h,
        trace: fit.trace,
    })
}

/// `method` is `"auto"`, `"closed"` or `"quad"`.
#[pyfunction]
#[pyo3(signature = (lambda_, p, method="auto"))]
fn tau(lambda_: f64, p: usize, method: &str) -> PyResult<PyTauResult> {
    let t = match method {
        "auto" => spca_core::tau(lambda_, p),
        "closed" => spca_core::tau_closed(lambda_, p),
        "quad" => spca_core::tau_quadrature(lambda_, p),
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    }
    .map_err(to_py)?;
    Ok(PyTauResult {
        lambda_: t.lambda,
        p: t.p,
        tau: t.tau,
        tau0: t.tau0,
        method: t.method.as_str().to_string(),
        abs_err_estimate: t.abs_err_estimate,
        identifiable: t.identifiable(),
    })
}

#[pyfunction]
fn lambda_star(p: usize) -> PyResult<f64> {
    spca_core::lambda_star(p).map_err(to_py)
}

#[pyfunction]
fn threshold_constant() -> f64 {
    spca_core::threshold_constant()
}

/// Norm of the population minimizer. Gaussian (`nu=None`) uses quadrature,
/// t laws a ray search on one sample of `psi_sample` draws.
#[pyfunction]
#[pyo3(signature = (lambda_, p, sigma=1.0, nu=None, psi_sample=100_000, seed=42))]
fn population_norm(
    py: Python<'_>,
    lambda_: f64,
    p: usize,
    sigma: f64,
    nu: Option<u32>,
    psi_sample: usize,
    seed: u64,
) -> PyResult<f64> {
    let s = spec(p, lambda_, sigma, nu, None)?;
    py.detach(|| harness::population_psi(&s, psi_sample, seed)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, lambda_, n, seed=42, sigma=1.0, nu=None, rotation_seed=None))]
fn sample_elliptical(
    p: usize,
    lambda_: f64,
    n: usize,
    seed: u64,
    sigma: f64,
    nu: Option<u32>,
    rotation_seed: Option<u64>,
) -> PyResult<Vec<Vec<f64>>> {
    let s = spec(p, lambda_, sigma, nu, rotation_seed)?;
    Ok(sampling::sample_elliptical(&s, n, seed).map_err(to_py)?.to_rows())
}

/// `model` is `"normal"`, `"uniform"` or `"bernoulli"`.
#[pyfunction]
#[pyo3(signature = (model, theta, n, seed=42, second_sd=1.0))]
fn sample_margins(model: &str, theta: f64, n: usize, seed: u64, second_sd: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = MarginModel::parse(model).ok_or_else(|| PyValueError::new_err(format!("unknown model `{model}`")))?;
    let s = MarginSpec::new(m, theta, second_sd).map_err(to_py)?;
    Ok(sampling::sample_margins(&s, n, seed).map_err(to_py)?.to_rows())
}

#[pyfunction]
#[pyo3(signature = (p, lambda_, psi=None, nu=None, mc_draws=200_000, seed=42, psi_sample=100_000))]
fn ascov_spca(
    py: Python<'_>,
    p: usize,
    lambda_: f64,
    psi: Option<f64>,
    nu: Option<u32>,
    mc_draws: usize,
    seed: u64,
    psi_sample: usize,
) -> PyResult<PyAscovEstimate> {
    let s = spec(p, lambda_, 1.0, nu, None)?;
    py.detach(|| {
        let psi = match psi {
            Some(v) => v,
            None => harness::population_psi(&s, psi_sample, seed)?,
        };
        spca_core::ascov_spca(&s, psi, mc_draws, seed)
    })
    .map(Into::into)
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, lambda_, nu=None, mc_draws=200_000, seed=42))]
fn ascov_pca(
    py: Python<'_>,
    p: usize,
    lambda_: f64,
    nu: Option<u32>,
    mc_draws: usize,
    seed: u64,
) -> PyResult<PyAscovEstimate> {
    let s = spec(p, lambda_, 1.0, nu, None)?;
    py.detach(|| spca_core::ascov_pca(&s, mc_draws, seed))
        .map(Into::into)
        .map_err(to_py)
}

#[pymodule]
fn spca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolverResult>()?;
    m.add_class::<PyTauResult>()?;
    m.add_class::<PyAscovEstimate>()?;
    m.add("DegenerateDataError", m.py().get_type::<DegenerateDataError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(hessian, m)?)?;
    m.add_function(wrap_pyfunction!(sign_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(pca_leading, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(tau, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_star, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_constant, m)?)?;
    m.add_function(wrap_pyfunction!(population_norm, m)?)?;
    m.add_function(wrap_pyfunction!(sample_elliptical, m)?)?;
    m.add_function(wrap_pyfunction!(sample_margins, m)?)?;
    m.add_function(wrap_pyfunction!(ascov_spca, m)?)?;
    m.add_function(wrap_pyfunction!(ascov_pca, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_rows_are_row_major() {
        let m = nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matrix_rows(&m), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    }

    #[test]
    fn rotated_spec_is_valid() {
        let s = spec(4, 2.0, 1.0, Some(3), Some(9)).unwrap();
        let o1 = s.o1();
        assert!((o1.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(spec(4, 0.5, 1.0, None, None).is_err());
    }
}

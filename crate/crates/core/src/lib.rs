//! Robust estimation of the leading principal direction and its scale by
//! minimizing `v -> E(‖X - v‖ ‖X + v‖ - ‖X‖²)`.
//!
//! The crate covers the sample objective and its derivatives, a monotone
//! Weiszfeld-type solver, the identifiability thresholds for elliptical
//! models, seeded samplers, Monte-Carlo asymptotic covariances and the two
//! simulation studies used to validate all of the above.

pub mod asymptotics;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod quadrature;
pub mod sampling;
pub mod solver;
pub mod theory;
pub mod special;

pub use data::DataSet;
pub use error::{Result, Sign, SpcaError};
pub use objective::{
    gradient, hessian, modified_gradient, objective_nuclear, objective_value, sign_covariance, SignCovariance,
    SAMPLE_POINT_TOL,
};
pub use solver::{
    pca_leading, radius_bound, ray_line_search, solve, step_scale, weiszfeld_step, RadiusBound, SolverConfig,
    SolverResult, Status,
};
pub use theory::{
    lambda_star, population_norm, tau, tau_closed, tau_quadrature, threshold_constant, PopulationNorm, TauMethod,
    TauResult,
};
pub use sampling::{
    random_orthogonal, sample_elliptical, sample_margins, stream_seed, EllipticalSpec, MarginModel, MarginSpec, Radial,
};
pub use asymptotics::{ascov_pca, ascov_spca, split_norm_direction, AscovEstimate, AscovMethod};

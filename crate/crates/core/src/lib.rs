//! Spatio-temporal linear mixed models on site-by-time grids.
//!
//! The crate fits Gaussian linear mixed models whose covariance decomposes
//! into spatial, temporal, and interaction components, predicts held-out
//! cells with uncertainty, and exploits the grid structure of the
//! interaction to solve covariance systems in far less than cubic time.
//!
//! Modules, bottom up:
//!
//! - [`kernels`]: stationary correlation functions and correlation matrices.
//! - [`design`]: site/time layouts, the canonical cell order, and
//!   observed/unobserved masks.
//! - [`covariance`]: model parameter types, covariance assembly, and
//!   conversions between parameterizations.
//! - [`fastsolve`]: structured solvers (eigendecomposition of the
//!   interaction, low-rank updates for the main effects, and a padding
//!   trick for incomplete grids).
//! - [`simplex`]: a derivative-free simplex optimizer.
//! - [`estimate`]: restricted likelihood and weighted-least-squares
//!   semivariogram fitting, plus ordinary least squares as a baseline.
//! - [`predict`]: best linear unbiased prediction with intervals.
//! - [`harness`]: simulation studies and solver benchmarks.

pub mod covariance;
pub mod design;
pub mod error;
pub mod estimate;
pub mod fastsolve;
pub mod harness;
pub mod kernels;
pub mod predict;
pub mod simplex;

pub use covariance::{
    classic_to_lmm, recover_components, ClassicPS, ModelTheta, ThetaPS, ThetaSep,
};
pub use design::{Site, StDesign};
pub use error::{Error, Result};
pub use estimate::{
    empirical_sv, fit_cwls, fit_ols, fit_reml, neg2_reml, profile_variance, wald_test, BinsSpec,
    EmpiricalSv, FitOptions, FitResult, ModelSpec, WaldTest,
};
pub use fastsolve::{solve_observed, FastSolve};
pub use harness::{
    bench_csv, bench_file_name, bench_inversion, run_study, simulate_dataset, variance_config,
    BenchRow, BenchSpec, Method, MethodSummary, SimProtocol, SimulatedData, StudyResult,
    VarianceConfig,
};
pub use kernels::{CorrelationModel, KernelKind};
pub use predict::{blup, PredictionResult};

//! Shared setup for the solver benchmarks: simulated grids, model
//! parameters, and the multi-column right-hand sides a fit actually solves.

use nalgebra::DMatrix;
use stlmm::{simulate_dataset, variance_config, ModelTheta, SimProtocol, ThetaSep};

/// One benchmark scenario: a partially observed grid, both covariance
/// families at the same kernels, and the `[X | y]` block a restricted
/// likelihood evaluation pushes through the solver.
pub struct SolveCase {
    pub label: String,
    pub data: stlmm::SimulatedData,
    pub product_sum: ModelTheta,
    pub separable: ModelTheta,
    pub rhs: DMatrix<f64>,
}

/// Builds a scenario with roughly `s * t` cells and `n_test` of them held out.
pub fn solve_case(s: usize, t: usize, n_test: usize) -> SolveCase {
    let vc = variance_config("vc3").expect("built-in configuration");
    let proto = SimProtocol {
        n_sites: s,
        n_times: t,
        n_test,
        reps: 1,
        ..SimProtocol::default()
    };
    let data = simulate_dataset(&vc.theta, &proto, 0).expect("simulation");

    let separable = ThetaSep::new(
        vc.theta.total_variance(),
        0.2,
        0.2,
        vc.theta.spatial,
        vc.theta.temporal,
    )
    .expect("valid shares");

    let n_o = data.design.n_observed();
    let p = data.x_obs.ncols();
    let mut rhs = DMatrix::zeros(n_o, p + 1);
    rhs.columns_mut(0, p).copy_from(&data.x_obs);
    rhs.column_mut(p).copy_from(&data.y_obs);

    SolveCase {
        label: format!("{}x{}_minus_{}", s, t, n_test),
        data,
        product_sum: ModelTheta::ProductSum(vc.theta),
        separable: ModelTheta::Separable(separable),
        rhs,
    }
}

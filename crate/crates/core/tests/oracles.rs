//! Cross-checks of every numerical path against independent references.
//!
//! The reference side never touches the structured solvers: covariance
//! matrices come from incidence algebra and Kronecker products, inverses
//! from dense Cholesky on those matrices, log-determinants from dense
//! eigendecompositions, and semivariograms from brute-force pair loops.

mod common;

use common::*;
use nalgebra::{Cholesky, DMatrix, DVector};
use stlmm::covariance::{cross_cov_cells, dense_cov};
use stlmm::estimate::FitTiming;
use stlmm::fastsolve::dense_solve;
use stlmm::kernels::CorrelationModel;
use stlmm::{
    blup, empirical_sv, harness, neg2_reml, recover_components, solve_observed, BinsSpec,
    FitResult, ModelTheta, StDesign, ThetaSep,
};

fn sweep_designs() -> Vec<StDesign> {
    let mut designs = Vec::new();
    let mut seed = 400;
    for (s, t) in [(6usize, 5usize), (10, 8), (12, 10)] {
        for missing in [0.0, 0.05, 0.25] {
            designs.push(random_design(s, t, missing, seed));
            seed += 1;
        }
    }
    designs
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn ps_solver_matches_incidence_oracle_across_grids() {
    for (di, design) in sweep_designs().iter().enumerate() {
        for cfg in harness::all_variance_configs() {
            let model = ModelTheta::ProductSum(cfg.theta);
            let rhs = random_matrix(design.n_observed(), 3, 900 + di as u64);
            let fast = solve_observed(&model, design, &rhs).unwrap();

            let sigma = oracle_ps_observed(&cfg.theta, design);
            let reference = dense_solve(&sigma, &rhs).unwrap();
            let logdet = oracle_logdet(&sigma);

            assert!(
                rel_diff(&fast.solution, &reference.solution) <= 1e-8,
                "{} solution mismatch on design {di} ({} observed): {:e}",
                cfg.name,
                design.n_observed(),
                rel_diff(&fast.solution, &reference.solution)
            );
            assert!(
                close(fast.logdet, logdet, 1e-8),
                "{} logdet mismatch on design {di}: {} vs {}",
                cfg.name,
                fast.logdet,
                logdet
            );
        }
    }
}

#[test]
fn sep_solver_matches_kronecker_oracle_across_grids() {
    let spatial = CorrelationModel::exponential(2.25).unwrap();
    let temporal = CorrelationModel::exponential(9.0).unwrap();
    let thetas = [
        ThetaSep::new(1.0, 0.0, 0.0, spatial, temporal).unwrap(),
        ThetaSep::new(2.5, 0.3, 0.6, spatial, temporal).unwrap(),
        ThetaSep::new(40.0, 1.0, 0.25, spatial, temporal).unwrap(),
    ];
    for (di, design) in sweep_designs().iter().enumerate() {
        for (ti, theta) in thetas.iter().enumerate() {
            let model = ModelTheta::Separable(*theta);
            let rhs = random_matrix(design.n_observed(), 3, 1300 + di as u64);
            let fast = solve_observed(&model, design, &rhs).unwrap();

            let sigma = oracle_sep_observed(theta, design);
            let reference = dense_solve(&sigma, &rhs).unwrap();
            let logdet = oracle_logdet(&sigma);

            assert!(
                rel_diff(&fast.solution, &reference.solution) <= 1e-8,
                "separable theta {ti} solution mismatch on design {di}: {:e}",
                rel_diff(&fast.solution, &reference.solution)
            );
            assert!(
                close(fast.logdet, logdet, 1e-8),
                "separable theta {ti} logdet mismatch on design {di}: {} vs {}",
                fast.logdet,
                logdet
            );
        }
    }
}

#[test]
fn covariance_assembly_matches_incidence_route() {
    let design = random_design(9, 7, 0.2, 77);
    let theta = harness::variance_config("vc2").unwrap().theta;
    let model = ModelTheta::ProductSum(theta);

    let direct = dense_cov(&model, &design).unwrap();
    let oracle = oracle_ps_observed(&theta, &design);
    assert!(rel_diff(&direct, &oracle) <= 1e-12);

    let cross = cross_cov_cells(
        &model,
        &design,
        design.observed_cells(),
        design.unobserved_cells(),
    )
    .unwrap();
    let oracle_cross = oracle_ps_cross(&theta, &design, design.unobserved_cells());
    assert!(rel_diff(&cross, &oracle_cross) <= 1e-12);
}

#[test]
fn reml_objective_matches_textbook_dense_formula() {
    let design = random_design(8, 6, 0.1, 501);
    let n = design.n_observed();
    let mut x = random_matrix(n, 3, 502);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    let y = random_vector(n, 503);

    let theta = harness::variance_config("vc1").unwrap().theta;
    let configs: Vec<(ModelTheta, DMatrix<f64>)> = vec![
        (
            ModelTheta::ProductSum(theta),
            oracle_ps_observed(&theta, &design),
        ),
        {
            let sep = ThetaSep::new(6.0, 0.2, 0.4, theta.spatial, theta.temporal).unwrap();
            (ModelTheta::Separable(sep), oracle_sep_observed(&sep, &design))
        },
    ];

    for (model, sigma) in configs {
        let chol = Cholesky::new(sigma.clone()).unwrap();
        let si_x = chol.solve(&x);
        let si_y = chol.solve(&DMatrix::from_column_slice(n, 1, y.as_slice()));
        let xtsx = x.transpose() * &si_x;
        let xtsy = x.transpose() * &si_y;
        let beta = xtsx.clone().cholesky().unwrap().solve(&xtsy);
        let r = &y - &x * beta.column(0);
        let si_r = chol.solve(&DMatrix::from_column_slice(n, 1, r.as_slice()));
        let rss = (r.transpose() * si_r.column(0))[(0, 0)];
        let want = oracle_logdet(&sigma) + oracle_logdet(&xtsx) + rss;

        let got = neg2_reml(&model, &design, &x, &y).unwrap();
        assert!(
            close(got, want, 1e-8),
            "objective mismatch: {got} vs {want}"
        );
    }
}

#[test]
fn blup_matches_textbook_dense_kriging() {
    let design = random_design(8, 7, 0.15, 611);
    let n = design.n_observed();
    let targets: Vec<usize> = design.unobserved_cells().to_vec();
    let m = targets.len();
    assert!(m > 0);

    let mut x = random_matrix(n, 3, 612);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    let y = random_vector(n, 613);
    let mut x_t = random_matrix(m, 3, 614);
    for i in 0..m {
        x_t[(i, 0)] = 1.0;
    }

    let theta = harness::variance_config("vc3").unwrap().theta;
    let model = ModelTheta::ProductSum(theta);
    let sigma = oracle_ps_observed(&theta, &design);
    let chol = Cholesky::new(sigma.clone()).unwrap();

    // Dense GLS coefficients shared by both sides.
    let si_x = chol.solve(&x);
    let xtsx = x.transpose() * &si_x;
    let cov_beta = xtsx.clone().cholesky().unwrap().inverse();
    let beta_m = &cov_beta * (x.transpose() * chol.solve(&DMatrix::from_column_slice(n, 1, y.as_slice())));
    let beta = DVector::from_column_slice(beta_m.column(0).as_slice());

    let fit = FitResult {
        model,
        beta: beta.clone(),
        cov_beta: cov_beta.clone(),
        objective: 0.0,
        converged: true,
        iterations: 0,
        evaluations: 0,
        n_obs: n,
        timing: FitTiming::default(),
    };
    let got = blup(&fit, &design, &x, &y, &x_t, &targets).unwrap();

    let sigma_ou = oracle_ps_cross(&theta, &design, &targets);
    let r = &y - &x * &beta;
    let si_r = chol.solve(&DMatrix::from_column_slice(n, 1, r.as_slice()));
    let si_sou = chol.solve(&sigma_ou);
    let total = theta.total_variance();
    for j in 0..m {
        let pred = x_t.row(j).transpose().dot(&beta)
            + sigma_ou.column(j).dot(&si_r.column(0));
        assert!(
            close(got.predictions[j], pred, 1e-8),
            "prediction {j}: {} vs {pred}",
            got.predictions[j]
        );
        let h = x_t.row(j).transpose()
            - (x.transpose() * si_sou.column(j));
        let var = total - sigma_ou.column(j).dot(&si_sou.column(j))
            + (h.transpose() * &cov_beta * &h)[(0, 0)];
        assert!(
            close(got.variances[j], var, 1e-8),
            "variance {j}: {} vs {var}",
            got.variances[j]
        );
        assert!(close(got.lower[j], pred - 1.96 * var.sqrt(), 1e-8));
        assert!(close(got.upper[j], pred + 1.96 * var.sqrt(), 1e-8));
    }
}

#[test]
fn component_recovery_is_exact_for_all_builtin_configs() {
    for cfg in harness::all_variance_configs() {
        let model = ModelTheta::ProductSum(cfg.theta);
        let back = recover_components(&model).unwrap();
        let want = cfg.theta.variances();
        let got = back.variances();
        for k in 0..6 {
            assert!(
                (got[k] - want[k]).abs() <= 1e-6,
                "{} component {k}: {} vs {}",
                cfg.name,
                got[k],
                want[k]
            );
        }
        assert_eq!(back.spatial.range(), cfg.theta.spatial.range());
        assert_eq!(back.temporal.range(), cfg.theta.temporal.range());
    }
}

#[test]
fn empirical_semivariogram_matches_bruteforce_pairs() {
    let design = random_design(7, 6, 0.1, 808);
    let residuals = random_vector(design.n_observed(), 809);
    let bins = BinsSpec::default();
    let sv = empirical_sv(&design, &residuals, &bins).unwrap();

    // Brute force: every observed pair, binned by the documented rule.
    let cells = design.observed_cells();
    let sites = design.sites();
    let times = design.times();
    let max_s = {
        let mut m: f64 = 0.0;
        for i in 0..sites.len() {
            for j in 0..sites.len() {
                m = m.max(sites[i].distance(&sites[j]));
            }
        }
        m / 2.0
    };
    let n_bins = 15;
    let width = max_s / n_bins as f64;
    let max_lag = design.t() / 2;

    let n_classes = n_bins + 1;
    let mut counts = vec![0u64; n_classes * (max_lag + 1)];
    let mut sums = vec![0.0f64; n_classes * (max_lag + 1)];
    for a in 0..cells.len() {
        for b in (a + 1)..cells.len() {
            let (ka, kb) = (cells[a], cells[b]);
            let d = sites[design.site_of(ka)].distance(&sites[design.site_of(kb)]);
            let dt = (times[design.time_of(ka)] - times[design.time_of(kb)]).abs();
            let lag = dt.round();
            if (dt - lag).abs() > 0.5 || lag as usize > max_lag {
                continue;
            }
            let si = if d == 0.0 {
                0
            } else if d > max_s {
                continue;
            } else {
                1 + ((d / width).ceil() as usize).max(1).min(n_bins) - 1
            };
            let idx = si * (max_lag + 1) + lag as usize;
            counts[idx] += 1;
            let diff = residuals[a] - residuals[b];
            sums[idx] += diff * diff;
        }
    }

    for si in 0..n_classes {
        for ti in 0..=max_lag {
            let idx = si * (max_lag + 1) + ti;
            assert_eq!(
                sv.count(si, ti),
                counts[idx],
                "count mismatch in class ({si},{ti})"
            );
            if counts[idx] > 0 {
                let want = sums[idx] / (2.0 * counts[idx] as f64);
                let got = sv.gamma(si, ti);
                assert!(
                    (got - want).abs() <= 1e-12 * want.max(1.0),
                    "gamma mismatch in class ({si},{ti}): {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn theoretical_semivariogram_limits_recover_separable_shares() {
    let spatial = CorrelationModel::exponential(2.0).unwrap();
    let temporal = CorrelationModel::exponential(5.0).unwrap();
    let sep = ThetaSep::new(8.0, 0.25, 0.5, spatial, temporal).unwrap();
    let model = ModelTheta::Separable(sep);
    let back = recover_components(&model).unwrap();
    // The factored model concentrates its smooth part in the interaction
    // term and its jumps in the noise term of the component view.
    let smooth = 8.0 * (1.0 - 0.25) * (1.0 - 0.5);
    assert!((back.sigma2_omega - smooth).abs() <= 1e-6 * smooth);
    let total: f64 = back.variances().iter().sum();
    assert!((total - 8.0).abs() <= 1e-6 * 8.0);
}

//! Best linear unbiased prediction at grid cells.

use crate::covariance::cross_cov_cells;
use crate::design::StDesign;
use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::fastsolve::solve_observed;
use nalgebra::{DMatrix, DVector};

/// Two-sided 95% interval multiplier.
const Z_95: f64 = 1.96;

/// Point predictions with uncertainty at a set of target cells.
#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub target_cells: Vec<usize>,
    pub predictions: DVector<f64>,
    /// Prediction variances, including coefficient-estimation uncertainty.
    pub variances: DVector<f64>,
    /// 95% interval bounds.
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Predicts the response at `target_cells` from a fitted model.
///
/// The predictor is the regression surface plus the covariance-weighted
/// projection of the observed residuals; its variance accounts for both the
/// interpolation error and the uncertainty in the coefficients. Targets may
/// coincide with observed cells, in which case the result is the smoothed
/// value there (exactly the observation when the fitted model has no nugget
/// variance).
pub fn blup(
    fit: &FitResult,
    design: &StDesign,
    x_obs: &DMatrix<f64>,
    y_obs: &DVector<f64>,
    x_targets: &DMatrix<f64>,
    target_cells: &[usize],
) -> Result<PredictionResult> {
    let n_o = design.n_observed();
    let p = fit.beta.len();
    let m = target_cells.len();
    if x_obs.nrows() != n_o || y_obs.len() != n_o {
        return Err(Error::dim(format!(
            "X has {} rows and y has {} entries for {n_o} observed cells",
            x_obs.nrows(),
            y_obs.len()
        )));
    }
    if x_obs.ncols() != p || x_targets.ncols() != p {
        return Err(Error::dim(format!(
            "coefficient count {p} does not match X columns ({} observed, {} target)",
            x_obs.ncols(),
            x_targets.ncols()
        )));
    }
    if x_targets.nrows() != m {
        return Err(Error::dim(format!(
            "{} target rows for {m} target cells",
            x_targets.nrows()
        )));
    }
    if m == 0 {
        return Ok(PredictionResult {
            target_cells: Vec::new(),
            predictions: DVector::zeros(0),
            variances: DVector::zeros(0),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        });
    }

    // Sigma_ou: observed rows by target columns.
    let sigma_ou = cross_cov_cells(&fit.model, design, design.observed_cells(), target_cells)?;
    let residuals = y_obs - x_obs * &fit.beta;

    let mut rhs = DMatrix::zeros(n_o, p + 1 + m);
    rhs.columns_mut(0, p).copy_from(x_obs);
    rhs.column_mut(p).copy_from(&residuals);
    rhs.columns_mut(p + 1, m).copy_from(&sigma_ou);
    let solved = solve_observed(&fit.model, design, &rhs)?.solution;
    let si_x = solved.columns(0, p);
    let si_r = solved.column(p);
    let si_sigma = solved.columns(p + 1, m);

    let predictions = x_targets * &fit.beta + sigma_ou.tr_mul(&si_r);

    // H = X_u - Sigma_uo Sigma_oo^{-1} X_o carries the coefficient
    // uncertainty into the targets.
    let h = x_targets - sigma_ou.tr_mul(&si_x);
    let h_cov = &h * &fit.cov_beta;
    let total_var = fit.model.total_variance();

    let mut variances = DVector::zeros(m);
    for j in 0..m {
        let interpolation = sigma_ou.column(j).dot(&si_sigma.column(j));
        let coefficient = h.row(j).dot(&h_cov.row(j));
        let var = total_var - interpolation + coefficient;
        if !var.is_finite() {
            return Err(Error::IndefiniteCovariance(format!(
                "prediction variance at target {j} is {var}"
            )));
        }
        variances[j] = var.max(0.0);
    }

    let half_widths = variances.map(|v| Z_95 * v.sqrt());
    Ok(PredictionResult {
        target_cells: target_cells.to_vec(),
        lower: &predictions - &half_widths,
        upper: &predictions + &half_widths,
        predictions: predictions.column(0).into_owned(),
        variances,
    })
}

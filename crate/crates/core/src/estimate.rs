//! Parameter estimation: residual maximum likelihood, semivariogram-based
//! weighted least squares, and ordinary least squares.
//!
//! All generalized-least-squares arithmetic funnels through one shared
//! routine, so coefficient estimates are bit-identical no matter which
//! fitting method produced the covariance parameters. The likelihood paths
//! profile out an overall variance scale, which drops one dimension from the
//! search and keeps the optimizer on well-scaled shape parameters.

use crate::covariance::{ModelTheta, ThetaPS, ThetaSep};
use crate::design::{spatial_distances, StDesign};
use crate::error::{Error, Result};
use crate::fastsolve::solve_observed;
use crate::kernels::{CorrelationModel, KernelKind};
use crate::simplex::{NelderMead, SimplexResult};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use std::time::Instant;

/// Transformed optimizer coordinates live in this box; beyond it the decoded
/// parameters are numerically saturated anyway.
const COORD_BOUND: f64 = 25.0;

/// Relative floor applied to variance shares during optimization.
const VARIANCE_FLOOR: f64 = 1e-8;

/// Which family and kernels to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    ProductSum {
        spatial: KernelKind,
        temporal: KernelKind,
    },
    Separable {
        spatial: KernelKind,
        temporal: KernelKind,
    },
}

/// Wall-clock breakdown of a fit, in seconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitTiming {
    pub total: f64,
    pub semivariogram: f64,
    pub optimize: f64,
}

/// A fitted model: covariance parameters, GLS coefficients, and diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ModelTheta,
    pub beta: DVector<f64>,
    /// `(X' Sigma^{-1} X)^{-1}` at the fitted parameters.
    pub cov_beta: DMatrix<f64>,
    /// Final objective: profiled -2 restricted log-likelihood for the
    /// likelihood methods, the weighted sum of squares for the
    /// semivariogram method.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub n_obs: usize,
    pub timing: FitTiming,
}

/// Shared generalized-least-squares products for a fixed covariance.
#[derive(Debug, Clone)]
pub(crate) struct GlsProducts {
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    /// Weighted residual sum of squares `r' Sigma^{-1} r`.
    pub rss: f64,
    pub logdet_sigma: f64,
    pub logdet_xtsix: f64,
}

impl GlsProducts {
    pub fn neg2_reml(&self) -> f64 {
        self.logdet_sigma + self.rss + self.logdet_xtsix
    }
}

fn check_xy(design: &StDesign, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    let n_o = design.n_observed();
    if n_o == 0 {
        return Err(Error::empty("design has no observed cells"));
    }
    if x.nrows() != n_o || y.len() != n_o {
        return Err(Error::dim(format!(
            "X has {} rows and y has {} entries for {n_o} observed cells",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::empty("X has no columns"));
    }
    if n_o <= x.ncols() {
        return Err(Error::invalid(format!(
            "need more observations ({n_o}) than coefficients ({})",
            x.ncols()
        )));
    }
    Ok(())
}

fn estimability_error(xtsix: &DMatrix<f64>) -> Error {
    let p = xtsix.nrows();
    let eig = xtsix.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let null_dim = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l.abs() <= 1e-12 * max.max(1.0))
        .count()
        .max(1);
    Error::NotEstimable { null_dim, p }
}

/// One GLS pass: solves against `[X | y]`, then forms coefficients, their
/// covariance, and the scalars the likelihood needs.
pub(crate) fn gls_products(
    model: &ModelTheta,
    design: &StDesign,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<GlsProducts> {
    check_xy(design, x, y)?;
    let n_o = design.n_observed();
    let p = x.ncols();

    let mut rhs = DMatrix::zeros(n_o, p + 1);
    rhs.columns_mut(0, p).copy_from(x);
    rhs.column_mut(p).copy_from(y);
    let solve = solve_observed(model, design, &rhs)?;
    let six = solve.solution.columns(0, p);
    let siy = solve.solution.column(p);

    let mut xtsix = x.tr_mul(&six);
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (xtsix[(i, j)] + xtsix[(j, i)]);
            xtsix[(i, j)] = v;
            xtsix[(j, i)] = v;
        }
    }
    let xtsiy = x.tr_mul(&siy);
    let ytsiy = y.dot(&siy.column(0));

    let chol = nalgebra::Cholesky::new(xtsix.clone())
        .ok_or_else(|| estimability_error(&xtsix))?;
    let beta = chol.solve(&xtsiy);
    let logdet_xtsix = {
        let l = chol.l_dirty();
        (0..p).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    };
    let rss = ytsiy - beta.dot(&xtsiy.column(0));

    Ok(GlsProducts {
        beta: beta.column(0).into_owned(),
        cov_beta: chol.inverse(),
        rss,
        logdet_sigma: solve.logdet,
        logdet_xtsix,
    })
}

/// `-2` times the restricted log-likelihood, up to an additive constant.
pub fn neg2_reml(
    model: &ModelTheta,
    design: &StDesign,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    Ok(gls_products(model, design, x, y)?.neg2_reml())
}

/// Profiles the overall variance scale out of the restricted likelihood.
///
/// `model` must carry unit-scale parameters (shares that sum to one for the
/// product-sum family, interaction sill one for the separable family).
/// Returns the optimal scale and the profiled objective; adding back
/// `n - p` and rescaling reproduces [`neg2_reml`] exactly.
pub fn profile_variance(
    model: &ModelTheta,
    design: &StDesign,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(f64, f64)> {
    let products = gls_products(model, design, x, y)?;
    let dof = (design.n_observed() - x.ncols()) as f64;
    if products.rss <= 0.0 || products.rss.is_nan() {
        return Err(Error::invalid(format!(
            "weighted residual sum of squares is {}; y lies in the span of X",
            products.rss
        )));
    }
    let scale = products.rss / dof;
    let profiled = dof * scale.ln() + products.logdet_sigma + products.logdet_xtsix;
    Ok((scale, profiled))
}

fn bounded_exp(z: f64) -> f64 {
    z.clamp(-COORD_BOUND, COORD_BOUND).exp()
}

fn bounded_logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-COORD_BOUND, COORD_BOUND)).exp())
}

/// Search geometry for the two practical ranges: data-driven starting
/// values plus upper caps at the widest separations the data can inform.
///
/// A practical range beyond the largest observed site distance (or beyond
/// the observed time span) is not identifiable: every such value fits the
/// observations nearly equally well while implying ever-stronger dependence
/// at distances never sampled, so the search stays inside the observed
/// window and a fit that wants more dependence saturates at the cap.
#[derive(Debug, Clone, Copy)]
struct RangeScales {
    kappa0: f64,
    phi0: f64,
    kappa_cap: f64,
    phi_cap: f64,
}

impl RangeScales {
    fn new(design: &StDesign) -> RangeScales {
        let d = spatial_distances(design.sites());
        let max_d = d.iter().fold(0.0f64, |a, &b| a.max(b));
        let kappa_cap = if max_d > 0.0 { max_d } else { 2.0 };
        let times = design.times();
        let span = match (
            times.iter().cloned().reduce(f64::min),
            times.iter().cloned().reduce(f64::max),
        ) {
            (Some(lo), Some(hi)) if hi > lo => hi - lo,
            _ => 0.0,
        };
        let phi_cap = if span > 0.0 { span } else { 1.0 };
        RangeScales {
            kappa0: 0.5 * kappa_cap,
            phi0: (design.t() as f64 / 4.0).max(0.25).min(0.5 * phi_cap),
            kappa_cap,
            phi_cap,
        }
    }

    fn spatial(&self, kind: KernelKind, z: f64) -> Result<CorrelationModel> {
        CorrelationModel::new(kind, capped_range(self.kappa0, self.kappa_cap, z))
    }

    fn temporal(&self, kind: KernelKind, z: f64) -> Result<CorrelationModel> {
        CorrelationModel::new(kind, capped_range(self.phi0, self.phi_cap, z))
    }
}

/// Monotone map from an unconstrained coordinate to a range in (0, cap):
/// equals `start` at z = 0, behaves like `start * exp(z)` well below the
/// cap, and saturates smoothly at the cap for large z.
fn capped_range(start: f64, cap: f64, z: f64) -> f64 {
    let zc = z.clamp(-COORD_BOUND, COORD_BOUND);
    cap / (1.0 + (cap / start - 1.0) * (-zc).exp())
}

struct PsDecoder {
    spatial: KernelKind,
    temporal: KernelKind,
    scales: RangeScales,
}

impl PsDecoder {
    /// Coordinates: five log-ratios of variance shares against the
    /// measurement nugget, then the two range coordinates. Shares are
    /// floored and renormalized so no component collapses entirely.
    fn decode_unit(&self, z: &[f64]) -> Result<ThetaPS> {
        let mut w = [0.0f64; 6];
        for i in 0..5 {
            w[i] = bounded_exp(z[i]);
        }
        w[5] = 1.0;
        let sum: f64 = w.iter().sum();
        let mut shares = w.map(|v| (v / sum).max(VARIANCE_FLOOR));
        let renorm: f64 = shares.iter().sum();
        for s in &mut shares {
            *s /= renorm;
        }
        ThetaPS::new(
            shares[0],
            shares[1],
            shares[2],
            shares[3],
            shares[4],
            shares[5],
            self.scales.spatial(self.spatial, z[5])?,
            self.scales.temporal(self.temporal, z[6])?,
        )
    }
}

struct SepDecoder {
    spatial: KernelKind,
    temporal: KernelKind,
    scales: RangeScales,
    /// Scale applied to the interaction sill; 1 when the sill is profiled.
    sill0: f64,
    /// Whether coordinate 0 is a log sill (semivariogram fits) or absent
    /// (likelihood fits, where the sill is profiled out).
    with_sill: bool,
}

impl SepDecoder {
    fn decode(&self, z: &[f64]) -> Result<ThetaSep> {
        let (sill, rest) = if self.with_sill {
            (self.sill0 * bounded_exp(z[0]), &z[1..])
        } else {
            (self.sill0, z)
        };
        let clamp_share = |v: f64| v.clamp(VARIANCE_FLOOR, 1.0 - VARIANCE_FLOOR);
        ThetaSep::new(
            sill,
            clamp_share(bounded_logistic(rest[0])),
            clamp_share(bounded_logistic(rest[1])),
            self.scales.spatial(self.spatial, rest[2])?,
            self.scales.temporal(self.temporal, rest[3])?,
        )
    }
}

fn finish_timing(start: Instant, semivariogram: f64, optimize: f64) -> FitTiming {
    FitTiming {
        total: start.elapsed().as_secs_f64(),
        semivariogram,
        optimize,
    }
}

/// Options shared by the iterative fitting methods.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub optimizer: NelderMead,
    /// Number of feasible-GLS passes in [`fit_cwls`]: the semivariogram is
    /// re-estimated from updated residuals this many times.
    pub fgls_passes: usize,
    pub bins: BinsSpec,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optimizer: NelderMead::default(),
            fgls_passes: 1,
            bins: BinsSpec::default(),
        }
    }
}

/// Restricted-maximum-likelihood fit of either model family.
///
/// Minimizes the profiled objective over transformed shape and range
/// parameters with a simplex search. Practical ranges are searched within
/// the window the data can support: up to the largest observed site
/// separation and the observed time span, since dependence at wider
/// separations is never sampled. Non-convergence after the restart is
/// not an error: the best point found is returned with `converged == false`.
pub fn fit_reml(
    spec: ModelSpec,
    design: &StDesign,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let start = Instant::now();
    check_xy(design, x, y)?;
    let scales = RangeScales::new(design);

    // Fail fast on structural problems (rank deficiency, degenerate data)
    // rather than letting the optimizer wander an all-infinite landscape.
    let probe_model = match spec {
        ModelSpec::ProductSum { spatial, temporal } => ModelTheta::ProductSum(
            PsDecoder {
                spatial,
                temporal,
                scales,
            }
            .decode_unit(&[0.0; 7])?,
        ),
        ModelSpec::Separable { spatial, temporal } => ModelTheta::Separable(
            SepDecoder {
                spatial,
                temporal,
                scales,
                sill0: 1.0,
                with_sill: false,
            }
            .decode(&[0.0; 4])?,
        ),
    };
    profile_variance(&probe_model, design, x, y)?;

    let opt_start = Instant::now();
    let (result, model): (SimplexResult, ModelTheta) = match spec {
        ModelSpec::ProductSum { spatial, temporal } => {
            let decoder = PsDecoder {
                spatial,
                temporal,
                scales,
            };
            let objective = |z: &[f64]| match decoder
                .decode_unit(z)
                .map(ModelTheta::ProductSum)
                .and_then(|m| profile_variance(&m, design, x, y))
            {
                Ok((_, value)) => value,
                Err(_) => f64::INFINITY,
            };
            let res = opts.optimizer.minimize(objective, &[0.0; 7]);
            let unit = decoder.decode_unit(&res.x)?;
            let (scale, _) =
                profile_variance(&ModelTheta::ProductSum(unit), design, x, y)?;
            (res, ModelTheta::ProductSum(unit.scaled(scale)))
        }
        ModelSpec::Separable { spatial, temporal } => {
            let decoder = SepDecoder {
                spatial,
                temporal,
                scales,
                sill0: 1.0,
                with_sill: false,
            };
            let objective = |z: &[f64]| match decoder
                .decode(z)
                .map(ModelTheta::Separable)
                .and_then(|m| profile_variance(&m, design, x, y))
            {
                Ok((_, value)) => value,
                Err(_) => f64::INFINITY,
            };
            let res = opts.optimizer.minimize(objective, &[0.0; 4]);
            let mut theta = decoder.decode(&res.x)?;
            let (scale, _) =
                profile_variance(&ModelTheta::Separable(theta), design, x, y)?;
            theta.sigma2_omega = scale;
            (res, ModelTheta::Separable(theta))
        }
    };
    let optimize = opt_start.elapsed().as_secs_f64();

    let products = gls_products(&model, design, x, y)?;
    Ok(FitResult {
        model,
        beta: products.beta,
        cov_beta: products.cov_beta,
        objective: result.objective,
        converged: result.converged,
        iterations: result.iterations,
        evaluations: result.evaluations,
        n_obs: design.n_observed(),
        timing: finish_timing(start, 0.0, optimize),
    })
}

/// Ordinary least squares, reported in the same shape as the other fits.
///
/// The covariance estimate is a pure measurement nugget at the residual
/// variance, so downstream prediction reduces to the regression surface with
/// independent-error variances.
pub fn fit_ols(design: &StDesign, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult> {
    let start = Instant::now();
    check_xy(design, x, y)?;
    let unit = nugget_model(1.0);
    let products = gls_products(&unit, design, x, y)?;
    let dof = (design.n_observed() - x.ncols()) as f64;
    let sigma2 = products.rss / dof;
    if sigma2 <= 0.0 || sigma2.is_nan() {
        return Err(Error::invalid(
            "residual variance is zero; y lies in the span of X",
        ));
    }
    let model = nugget_model(sigma2);
    let fitted = gls_products(&model, design, x, y)?;
    let objective = fitted.neg2_reml();
    Ok(FitResult {
        model,
        beta: fitted.beta,
        cov_beta: fitted.cov_beta,
        objective,
        converged: true,
        iterations: 0,
        evaluations: 0,
        n_obs: design.n_observed(),
        timing: finish_timing(start, 0.0, 0.0),
    })
}

fn nugget_model(sigma2: f64) -> ModelTheta {
    let unit = CorrelationModel::exponential(1.0).expect("valid range");
    ModelTheta::ProductSum(
        ThetaPS::new(0.0, 0.0, 0.0, 0.0, 0.0, sigma2, unit, unit).expect("valid nugget"),
    )
}

/// Binning layout for the empirical semivariogram.
#[derive(Debug, Clone, Copy)]
pub struct BinsSpec {
    /// Number of equal-width positive-distance spatial bins. A dedicated
    /// zero-distance class always exists in front of them.
    pub n_spatial_bins: usize,
    /// Upper edge of the last spatial bin; defaults to half the largest
    /// site separation.
    pub max_spatial: Option<f64>,
    /// Largest integer temporal lag kept; defaults to half the number of
    /// time points.
    pub max_temporal_lag: Option<usize>,
}

impl Default for BinsSpec {
    fn default() -> Self {
        BinsSpec {
            n_spatial_bins: 15,
            max_spatial: None,
            max_temporal_lag: None,
        }
    }
}

/// One spatial distance class.
#[derive(Debug, Clone, Copy)]
pub struct SvBin {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
}

/// Empirical semivariogram over a spatial-by-temporal grid of lag classes.
#[derive(Debug, Clone)]
pub struct EmpiricalSv {
    /// Class 0 is the exact zero-distance class; the rest are equal-width
    /// bins.
    pub spatial_classes: Vec<SvBin>,
    /// Integer lags, starting at zero.
    pub temporal_lags: Vec<f64>,
    counts: Vec<u64>,
    gammas: Vec<f64>,
}

impl EmpiricalSv {
    fn idx(&self, si: usize, ti: usize) -> usize {
        si * self.temporal_lags.len() + ti
    }

    pub fn count(&self, si: usize, ti: usize) -> u64 {
        self.counts[self.idx(si, ti)]
    }

    /// Estimated semivariance for a class; meaningless when the count is 0.
    pub fn gamma(&self, si: usize, ti: usize) -> f64 {
        self.gammas[self.idx(si, ti)]
    }

    /// Non-empty classes as `(spatial index, temporal index, count, gamma)`.
    pub fn nonempty(&self) -> impl Iterator<Item = (usize, usize, u64, f64)> + '_ {
        let nt = self.temporal_lags.len();
        self.counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(move |(i, &c)| (i / nt, i % nt, c, self.gammas[i]))
    }
}

/// Method-of-moments semivariogram of `residuals` over the observed cells.
///
/// Every ordered pair is counted once. Pairs beyond the spatial or temporal
/// limits are dropped; temporal separations snap to the nearest integer lag.
pub fn empirical_sv(
    design: &StDesign,
    residuals: &DVector<f64>,
    bins: &BinsSpec,
) -> Result<EmpiricalSv> {
    let n_o = design.n_observed();
    if n_o == 0 || residuals.is_empty() {
        return Err(Error::empty("no residuals to bin"));
    }
    if residuals.len() != n_o {
        return Err(Error::dim(format!(
            "{} residuals for {n_o} observed cells",
            residuals.len()
        )));
    }
    if bins.n_spatial_bins == 0 {
        return Err(Error::invalid("need at least one spatial bin"));
    }

    let site_dist = spatial_distances(design.sites());
    let max_site_dist = site_dist.iter().fold(0.0f64, |a, &b| a.max(b));
    let max_s = bins.max_spatial.unwrap_or(0.5 * max_site_dist);
    if let Some(m) = bins.max_spatial {
        if m <= 0.0 || !m.is_finite() {
            return Err(Error::invalid(format!("max_spatial must be positive, got {m}")));
        }
    }
    let max_lag = bins.max_temporal_lag.unwrap_or(design.t() / 2);

    let n_spatial = if max_s > 0.0 { bins.n_spatial_bins + 1 } else { 1 };
    let width = if max_s > 0.0 {
        max_s / bins.n_spatial_bins as f64
    } else {
        0.0
    };
    let n_temporal = max_lag + 1;

    let mut counts = vec![0u64; n_spatial * n_temporal];
    let mut sums = vec![0.0f64; n_spatial * n_temporal];

    let cells = design.observed_cells();
    let times = design.times();
    for a in 0..n_o {
        let (sa, ta) = (design.site_of(cells[a]), design.time_of(cells[a]));
        for b in (a + 1)..n_o {
            let (sb, tb) = (design.site_of(cells[b]), design.time_of(cells[b]));
            let dt = (times[ta] - times[tb]).abs();
            let lag = dt.round();
            if lag as usize > max_lag || (dt - lag).abs() > 0.5 {
                continue;
            }
            let d = site_dist[(sa, sb)];
            let si = if d == 0.0 {
                0
            } else if d <= max_s {
                1 + (((d / width).ceil() as usize).max(1) - 1).min(bins.n_spatial_bins - 1)
            } else {
                continue;
            };
            let idx = si * n_temporal + lag as usize;
            let diff = residuals[a] - residuals[b];
            counts[idx] += 1;
            sums[idx] += diff * diff;
        }
    }

    if counts.iter().all(|&c| c == 0) {
        return Err(Error::empty(
            "every semivariogram class is empty; widen max_spatial or max_temporal_lag",
        ));
    }

    let gammas = counts
        .iter()
        .zip(&sums)
        .map(|(&c, &s)| if c > 0 { s / (2.0 * c as f64) } else { 0.0 })
        .collect();

    let mut spatial_classes = vec![SvBin {
        lower: 0.0,
        upper: 0.0,
        center: 0.0,
    }];
    if max_s > 0.0 {
        for b in 0..bins.n_spatial_bins {
            spatial_classes.push(SvBin {
                lower: b as f64 * width,
                upper: (b + 1) as f64 * width,
                center: (b as f64 + 0.5) * width,
            });
        }
    }
    let temporal_lags = (0..=max_lag).map(|l| l as f64).collect();

    Ok(EmpiricalSv {
        spatial_classes,
        temporal_lags,
        counts,
        gammas,
    })
}

fn cwls_objective(model: &ModelTheta, emp: &EmpiricalSv) -> f64 {
    let mut total = 0.0;
    for (si, ti, count, gamma_hat) in emp.nonempty() {
        let h_s = emp.spatial_classes[si].center;
        let h_t = emp.temporal_lags[ti];
        let Ok(gamma) = model.theoretical_sv(h_s, h_t) else {
            return f64::INFINITY;
        };
        let denom = gamma.max(1e-10);
        let diff = gamma_hat - gamma;
        total += count as f64 * diff * diff / (denom * denom);
    }
    total
}

/// Semivariogram-based weighted-least-squares fit with a feasible-GLS
/// coefficient update.
///
/// Starts from ordinary-least-squares residuals, bins them into an empirical
/// semivariogram, and fits covariance parameters by minimizing the weighted
/// squared distance to the model semivariogram, with weights proportional to
/// class counts over squared model values (recomputed at every parameter
/// proposal). Practical ranges are searched within the same observed-window
/// caps as the likelihood fit. Additional `fgls_passes` re-estimate
/// residuals under the fitted covariance and repeat.
pub fn fit_cwls(
    spec: ModelSpec,
    design: &StDesign,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let start = Instant::now();
    check_xy(design, x, y)?;
    if opts.fgls_passes == 0 {
        return Err(Error::invalid("fgls_passes must be at least 1"));
    }
    let scales = RangeScales::new(design);

    let ols = gls_products(&nugget_model(1.0), design, x, y)?;
    let sigma2_ols = ols.rss / (design.n_observed() - x.ncols()) as f64;
    if sigma2_ols <= 0.0 || sigma2_ols.is_nan() {
        return Err(Error::invalid(
            "residual variance is zero; y lies in the span of X",
        ));
    }
    let mut beta = ols.beta;

    let mut sv_seconds = 0.0;
    let mut opt_seconds = 0.0;
    let mut evaluations = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut objective = f64::INFINITY;
    let mut model: Option<ModelTheta> = None;

    for _pass in 0..opts.fgls_passes {
        let residuals = y - x * &beta;
        let sv_start = Instant::now();
        let emp = empirical_sv(design, &residuals, &opts.bins)?;
        sv_seconds += sv_start.elapsed().as_secs_f64();

        let opt_start = Instant::now();
        let result = match spec {
            ModelSpec::ProductSum { spatial, temporal } => {
                let decoder = PsDecoder {
                    spatial,
                    temporal,
                    scales,
                };
                let per_component = sigma2_ols / 6.0;
                let decode = |z: &[f64]| -> Result<ThetaPS> {
                    let mut vars = [0.0f64; 6];
                    for (v, &zi) in vars.iter_mut().zip(&z[..6]) {
                        *v = per_component * bounded_exp(zi);
                    }
                    let total: f64 = vars.iter().sum();
                    for v in &mut vars {
                        *v = v.max(VARIANCE_FLOOR * total);
                    }
                    ThetaPS::new(
                        vars[0],
                        vars[1],
                        vars[2],
                        vars[3],
                        vars[4],
                        vars[5],
                        decoder.scales.spatial(decoder.spatial, z[6])?,
                        decoder.scales.temporal(decoder.temporal, z[7])?,
                    )
                };
                let res = opts.optimizer.minimize(
                    |z| match decode(z) {
                        Ok(theta) => cwls_objective(&ModelTheta::ProductSum(theta), &emp),
                        Err(_) => f64::INFINITY,
                    },
                    &[0.0; 8],
                );
                model = Some(ModelTheta::ProductSum(decode(&res.x)?));
                res
            }
            ModelSpec::Separable { spatial, temporal } => {
                let decoder = SepDecoder {
                    spatial,
                    temporal,
                    scales,
                    sill0: sigma2_ols,
                    with_sill: true,
                };
                let res = opts.optimizer.minimize(
                    |z| match decoder.decode(z) {
                        Ok(theta) => cwls_objective(&ModelTheta::Separable(theta), &emp),
                        Err(_) => f64::INFINITY,
                    },
                    &[0.0; 5],
                );
                model = Some(ModelTheta::Separable(decoder.decode(&res.x)?));
                res
            }
        };
        opt_seconds += opt_start.elapsed().as_secs_f64();

        evaluations += result.evaluations;
        iterations += result.iterations;
        converged = result.converged;
        objective = result.objective;

        beta = gls_products(model.as_ref().unwrap(), design, x, y)?.beta;
    }

    let model = model.expect("at least one pass ran");
    let products = gls_products(&model, design, x, y)?;
    Ok(FitResult {
        model,
        beta: products.beta,
        cov_beta: products.cov_beta,
        objective,
        converged,
        iterations,
        evaluations,
        n_obs: design.n_observed(),
        timing: finish_timing(start, sv_seconds, opt_seconds),
    })
}

/// A two-sided coefficient test against zero.
#[derive(Debug, Clone, Copy)]
pub struct WaldTest {
    pub estimate: f64,
    pub se: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Tests `beta[k] == 0` using the fitted coefficient covariance and a
/// Gaussian reference.
pub fn wald_test(fit: &FitResult, k: usize) -> Result<WaldTest> {
    if k >= fit.beta.len() {
        return Err(Error::dim(format!(
            "coefficient {k} out of range for {} coefficients",
            fit.beta.len()
        )));
    }
    let var = fit.cov_beta[(k, k)];
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::invalid(format!(
            "coefficient {k} has non-positive variance {var}"
        )));
    }
    let se = var.sqrt();
    let statistic = fit.beta[k] / se;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p_value = (2.0 * normal.sf(statistic.abs())).clamp(0.0, 1.0);
    Ok(WaldTest {
        estimate: fit.beta[k],
        se,
        statistic,
        p_value,
    })
}

//! Model parameterizations and their covariance functions.
//!
//! Two families are supported. The product-sum family combines site, time,
//! and interaction effects, each with its own sill, plus a measurement-error
//! nugget. The separable family is a single interaction sill times a product
//! of spatial and temporal structures, each blending its kernel with a
//! nugget share.
//!
//! Coincidence terms (site nugget, time nugget, measurement error) bind to
//! index equality, not to distance zero: two distinct stations at the same
//! coordinates carry independent site effects. Semivariogram-side functions
//! use the distance convention instead, with exact lag zero meaning "same
//! unit".

use crate::design::StDesign;
use crate::error::{Error, Result};
use crate::kernels::{self, CorrelationModel};
use nalgebra::DMatrix;

/// Product-sum parameters: six variance components and two kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPS {
    /// Sill of the spatially correlated site effect.
    pub sigma2_delta: f64,
    /// Site nugget (uncorrelated site effect).
    pub sigma2_gamma: f64,
    /// Sill of the temporally correlated time effect.
    pub sigma2_tau: f64,
    /// Time nugget (uncorrelated time effect).
    pub sigma2_eta: f64,
    /// Sill of the space-time interaction.
    pub sigma2_omega: f64,
    /// Measurement-error nugget.
    pub sigma2_epsilon: f64,
    pub spatial: CorrelationModel,
    pub temporal: CorrelationModel,
}

impl ThetaPS {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma2_delta: f64,
        sigma2_gamma: f64,
        sigma2_tau: f64,
        sigma2_eta: f64,
        sigma2_omega: f64,
        sigma2_epsilon: f64,
        spatial: CorrelationModel,
        temporal: CorrelationModel,
    ) -> Result<Self> {
        let theta = ThetaPS {
            sigma2_delta,
            sigma2_gamma,
            sigma2_tau,
            sigma2_eta,
            sigma2_omega,
            sigma2_epsilon,
            spatial,
            temporal,
        };
        for (name, v) in theta.named_variances() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(theta)
    }

    pub fn variances(&self) -> [f64; 6] {
        [
            self.sigma2_delta,
            self.sigma2_gamma,
            self.sigma2_tau,
            self.sigma2_eta,
            self.sigma2_omega,
            self.sigma2_epsilon,
        ]
    }

    fn named_variances(&self) -> [(&'static str, f64); 6] {
        [
            ("sigma2_delta", self.sigma2_delta),
            ("sigma2_gamma", self.sigma2_gamma),
            ("sigma2_tau", self.sigma2_tau),
            ("sigma2_eta", self.sigma2_eta),
            ("sigma2_omega", self.sigma2_omega),
            ("sigma2_epsilon", self.sigma2_epsilon),
        ]
    }

    /// Marginal variance of a single observation.
    pub fn total_variance(&self) -> f64 {
        self.variances().iter().sum()
    }

    /// Same shape with every variance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> ThetaPS {
        ThetaPS {
            sigma2_delta: c * self.sigma2_delta,
            sigma2_gamma: c * self.sigma2_gamma,
            sigma2_tau: c * self.sigma2_tau,
            sigma2_eta: c * self.sigma2_eta,
            sigma2_omega: c * self.sigma2_omega,
            sigma2_epsilon: c * self.sigma2_epsilon,
            ..*self
        }
    }

    /// Covariance between two observations given kernel correlations and
    /// index-coincidence flags.
    pub(crate) fn cov_entry(
        &self,
        rho_s: f64,
        rho_t: f64,
        same_site: bool,
        same_time: bool,
    ) -> f64 {
        let mut c = self.sigma2_delta * rho_s
            + self.sigma2_tau * rho_t
            + self.sigma2_omega * rho_s * rho_t;
        if same_site {
            c += self.sigma2_gamma;
        }
        if same_time {
            c += self.sigma2_eta;
        }
        if same_site && same_time {
            c += self.sigma2_epsilon;
        }
        c
    }
}

/// Separable parameters: one interaction sill, nugget shares per dimension,
/// and two kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSep {
    pub sigma2_omega: f64,
    /// Spatial nugget share in `[0, 1]`.
    pub v_s: f64,
    /// Temporal nugget share in `[0, 1]`.
    pub v_t: f64,
    pub spatial: CorrelationModel,
    pub temporal: CorrelationModel,
}

impl ThetaSep {
    pub fn new(
        sigma2_omega: f64,
        v_s: f64,
        v_t: f64,
        spatial: CorrelationModel,
        temporal: CorrelationModel,
    ) -> Result<Self> {
        if !sigma2_omega.is_finite() || sigma2_omega <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma2_omega must be positive and finite, got {sigma2_omega}"
            )));
        }
        for (name, v) in [("v_s", v_s), ("v_t", v_t)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(ThetaSep {
            sigma2_omega,
            v_s,
            v_t,
            spatial,
            temporal,
        })
    }

    pub fn total_variance(&self) -> f64 {
        self.sigma2_omega
    }

    pub(crate) fn cov_entry(
        &self,
        rho_s: f64,
        rho_t: f64,
        same_site: bool,
        same_time: bool,
    ) -> f64 {
        let c_s = (1.0 - self.v_s) * rho_s + if same_site { self.v_s } else { 0.0 };
        let c_t = (1.0 - self.v_t) * rho_t + if same_time { self.v_t } else { 0.0 };
        self.sigma2_omega * c_s * c_t
    }
}

/// Either model family, for code that works with both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelTheta {
    ProductSum(ThetaPS),
    Separable(ThetaSep),
}

impl ModelTheta {
    pub fn spatial(&self) -> &CorrelationModel {
        match self {
            ModelTheta::ProductSum(t) => &t.spatial,
            ModelTheta::Separable(t) => &t.spatial,
        }
    }

    pub fn temporal(&self) -> &CorrelationModel {
        match self {
            ModelTheta::ProductSum(t) => &t.temporal,
            ModelTheta::Separable(t) => &t.temporal,
        }
    }

    pub fn total_variance(&self) -> f64 {
        match self {
            ModelTheta::ProductSum(t) => t.total_variance(),
            ModelTheta::Separable(t) => t.total_variance(),
        }
    }

    fn cov_entry(&self, rho_s: f64, rho_t: f64, same_site: bool, same_time: bool) -> f64 {
        match self {
            ModelTheta::ProductSum(t) => t.cov_entry(rho_s, rho_t, same_site, same_time),
            ModelTheta::Separable(t) => t.cov_entry(rho_s, rho_t, same_site, same_time),
        }
    }

    /// Theoretical semivariogram at spatial lag `h_s` and temporal lag `h_t`.
    ///
    /// Lags of exactly zero mean "same unit" (same site, same time, or both),
    /// so `sv(0, 0) = 0` and nugget jumps appear between lag zero and any
    /// positive lag.
    pub fn theoretical_sv(&self, h_s: f64, h_t: f64) -> Result<f64> {
        let rho_s = self.spatial().correlate(h_s)?;
        let rho_t = self.temporal().correlate(h_t)?;
        let c0 = self.cov_entry(1.0, 1.0, true, true);
        let c = self.cov_entry(rho_s, rho_t, h_s == 0.0, h_t == 0.0);
        Ok(c0 - c)
    }
}

impl From<ThetaPS> for ModelTheta {
    fn from(t: ThetaPS) -> Self {
        ModelTheta::ProductSum(t)
    }
}

impl From<ThetaSep> for ModelTheta {
    fn from(t: ThetaSep) -> Self {
        ModelTheta::Separable(t)
    }
}

/// Sill-and-nugget-share parameterization of the product-sum family, as
/// classical variogram fits usually report it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicPS {
    /// Spatial sill.
    pub sigma2_s: f64,
    /// Spatial nugget share in `[0, 1]`.
    pub v_s: f64,
    /// Temporal sill.
    pub sigma2_t: f64,
    /// Temporal nugget share in `[0, 1]`.
    pub v_t: f64,
    /// Interaction sill.
    pub sigma2_st: f64,
    pub spatial: CorrelationModel,
    pub temporal: CorrelationModel,
}

/// Rewrites classical sills and nugget shares as mixed-model variance
/// components. The measurement-error nugget comes out zero because the
/// classical form has no term distinguishing it from the two structural
/// nuggets.
pub fn classic_to_lmm(classic: &ClassicPS) -> Result<ThetaPS> {
    for (name, v) in [
        ("sigma2_s", classic.sigma2_s),
        ("sigma2_t", classic.sigma2_t),
        ("sigma2_st", classic.sigma2_st),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!(
                "{name} must be non-negative and finite, got {v}"
            )));
        }
    }
    for (name, v) in [("v_s", classic.v_s), ("v_t", classic.v_t)] {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    ThetaPS::new(
        classic.sigma2_s * (1.0 - classic.v_s),
        classic.sigma2_s * classic.v_s,
        classic.sigma2_t * (1.0 - classic.v_t),
        classic.sigma2_t * classic.v_t,
        classic.sigma2_st,
        0.0,
        classic.spatial,
        classic.temporal,
    )
}

/// Reads the six product-sum components off a model's semivariogram limits.
///
/// Evaluates the semivariogram at near-zero and effectively-infinite lags
/// (1e-9 and 1e8 times the respective range) and differences the values. For
/// a product-sum input this inverts the parameterization; for a separable
/// input it returns the product-sum shadow the semivariogram actually shows
/// (interaction sill shrunk by the nugget shares, the rest folded into the
/// measurement nugget).
pub fn recover_components(model: &ModelTheta) -> Result<ThetaPS> {
    let near = 1e-9;
    let far = 1e8;
    let s0 = near * model.spatial().range();
    let s_inf = far * model.spatial().range();
    let t0 = near * model.temporal().range();
    let t_inf = far * model.temporal().range();

    let g_inf_inf = model.theoretical_sv(s_inf, t_inf)?;
    let g_near0_inf = model.theoretical_sv(s0, t_inf)?;
    let g_zero_inf = model.theoretical_sv(0.0, t_inf)?;
    let g_inf_near0 = model.theoretical_sv(s_inf, t0)?;
    let g_inf_zero = model.theoretical_sv(s_inf, 0.0)?;
    let g_near0_near0 = model.theoretical_sv(s0, t0)?;

    let clamp = |v: f64| if v < 0.0 && v > -1e-6 { 0.0 } else { v };
    let sigma2_delta = clamp(g_inf_inf - g_near0_inf);
    let sigma2_gamma = clamp(g_near0_inf - g_zero_inf);
    let sigma2_tau = clamp(g_inf_inf - g_inf_near0);
    let sigma2_eta = clamp(g_inf_near0 - g_inf_zero);
    let sigma2_omega = clamp(g_inf_near0 + g_near0_inf - g_inf_inf - g_near0_near0);
    let sigma2_epsilon = clamp(
        g_inf_inf - (sigma2_delta + sigma2_gamma + sigma2_tau + sigma2_eta + sigma2_omega),
    );

    ThetaPS::new(
        sigma2_delta,
        sigma2_gamma,
        sigma2_tau,
        sigma2_eta,
        sigma2_omega,
        sigma2_epsilon,
        *model.spatial(),
        *model.temporal(),
    )
}

/// Kernel correlation matrices for a design, computed once and shared by the
/// dense builders and the structured solvers.
pub(crate) fn design_correlations(
    model: &ModelTheta,
    design: &StDesign,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let r_s = kernels::spatial_correlation(model.spatial(), design.sites())?;
    let r_t = kernels::temporal_correlation(model.temporal(), design.times())?;
    Ok((r_s, r_t))
}

/// Covariance matrix over an explicit list of cells, in the given order.
pub fn dense_cov_cells(
    model: &ModelTheta,
    design: &StDesign,
    cells: &[usize],
) -> Result<DMatrix<f64>> {
    cross_cov_cells(model, design, cells, cells)
}

/// Cross-covariance between two cell lists (rows by columns).
pub fn cross_cov_cells(
    model: &ModelTheta,
    design: &StDesign,
    rows: &[usize],
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    for &c in rows.iter().chain(cols) {
        if c >= design.n_cells() {
            return Err(Error::dim(format!(
                "cell index {c} out of range for {} cells",
                design.n_cells()
            )));
        }
    }
    let (r_s, r_t) = design_correlations(model, design)?;
    let mut cov = DMatrix::zeros(rows.len(), cols.len());
    for (a, &ka) in rows.iter().enumerate() {
        let (ia, ja) = (design.site_of(ka), design.time_of(ka));
        for (b, &kb) in cols.iter().enumerate() {
            let (ib, jb) = (design.site_of(kb), design.time_of(kb));
            cov[(a, b)] = model.cov_entry(r_s[(ia, ib)], r_t[(ja, jb)], ia == ib, ja == jb);
        }
    }
    Ok(cov)
}

/// Covariance matrix over the observed cells of `design`, canonical order.
pub fn dense_cov(model: &ModelTheta, design: &StDesign) -> Result<DMatrix<f64>> {
    if design.n_observed() == 0 {
        return Err(Error::empty("design has no observed cells"));
    }
    dense_cov_cells(model, design, design.observed_cells())
}

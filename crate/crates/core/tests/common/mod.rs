//! Reference constructions shared by the integration tests.
//!
//! Everything here builds covariance matrices the slow, literal way:
//! explicit incidence matrices, explicit Kronecker products, and dense
//! eigendecompositions. The library must reproduce these numbers without
//! sharing any code with them.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stlmm::kernels::{spatial_correlation, temporal_correlation};
use stlmm::{Site, StDesign, ThetaPS, ThetaSep};

/// Incidence of grid cells onto sites: a full-grid row picks out its site.
pub fn site_incidence(design: &StDesign) -> DMatrix<f64> {
    let n = design.n_cells();
    let mut z = DMatrix::zeros(n, design.s());
    for k in 0..n {
        z[(k, design.site_of(k))] = 1.0;
    }
    z
}

/// Incidence of grid cells onto time points.
pub fn time_incidence(design: &StDesign) -> DMatrix<f64> {
    let n = design.n_cells();
    let mut z = DMatrix::zeros(n, design.t());
    for k in 0..n {
        z[(k, design.time_of(k))] = 1.0;
    }
    z
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Full-grid product-sum covariance assembled from incidence matrices and a
/// Kronecker product, in the canonical cell order (site index fastest).
pub fn oracle_ps_full(theta: &ThetaPS, design: &StDesign) -> DMatrix<f64> {
    let r_s = spatial_correlation(&theta.spatial, design.sites()).unwrap();
    let r_t = temporal_correlation(&theta.temporal, design.times()).unwrap();
    let z_s = site_incidence(design);
    let z_t = time_incidence(design);
    let n = design.n_cells();

    let mut sigma = &z_s * (&r_s * z_s.transpose()) * theta.sigma2_delta;
    sigma += &z_s * z_s.transpose() * theta.sigma2_gamma;
    sigma += &z_t * (&r_t * z_t.transpose()) * theta.sigma2_tau;
    sigma += &z_t * z_t.transpose() * theta.sigma2_eta;
    sigma += r_t.kronecker(&r_s) * theta.sigma2_omega;
    sigma += DMatrix::identity(n, n) * theta.sigma2_epsilon;
    sigma
}

/// Full-grid separable covariance as one Kronecker product of
/// nugget-blended marginal correlations.
pub fn oracle_sep_full(theta: &ThetaSep, design: &StDesign) -> DMatrix<f64> {
    let r_s = spatial_correlation(&theta.spatial, design.sites()).unwrap();
    let r_t = temporal_correlation(&theta.temporal, design.times()).unwrap();
    let s = design.s();
    let t = design.t();
    let blend = |r: &DMatrix<f64>, v: f64, n: usize| {
        r * (1.0 - v) + DMatrix::<f64>::identity(n, n) * v
    };
    blend(&r_t, theta.v_t, t).kronecker(&blend(&r_s, theta.v_s, s)) * theta.sigma2_omega
}

/// Observed-by-observed block of the product-sum covariance.
pub fn oracle_ps_observed(theta: &ThetaPS, design: &StDesign) -> DMatrix<f64> {
    let full = oracle_ps_full(theta, design);
    submatrix(&full, design.observed_cells(), design.observed_cells())
}

/// Observed-by-observed block of the separable covariance.
pub fn oracle_sep_observed(theta: &ThetaSep, design: &StDesign) -> DMatrix<f64> {
    let full = oracle_sep_full(theta, design);
    submatrix(&full, design.observed_cells(), design.observed_cells())
}

/// Observed-rows by requested-columns block of the product-sum covariance.
pub fn oracle_ps_cross(theta: &ThetaPS, design: &StDesign, cols: &[usize]) -> DMatrix<f64> {
    let full = oracle_ps_full(theta, design);
    submatrix(&full, design.observed_cells(), cols)
}

/// Log-determinant through a symmetric eigendecomposition.
pub fn oracle_logdet(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&e| e.ln())
        .sum()
}

/// Seeded uniform site layout on a 5 km square with integer times and an
/// optional random missing mask.
pub fn random_design(s: usize, t: usize, missing: f64, seed: u64) -> StDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<Site> = (0..s)
        .map(|_| Site::new(rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0))
        .collect();
    let times: Vec<f64> = (1..=t).map(|j| j as f64).collect();
    let n = s * t;
    let n_missing = (missing * n as f64).round() as usize;
    let mut cells: Vec<usize> = (0..n).collect();
    let (hidden, _) = cells.partial_shuffle(&mut rng, n_missing);
    let mut observed = vec![true; n];
    for &c in hidden.iter() {
        observed[c] = false;
    }
    StDesign::new(sites, times, observed).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Largest entrywise difference relative to the largest reference entry.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
        / scale
}

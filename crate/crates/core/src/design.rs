//! Spatio-temporal layout: sites, times, and the canonical cell ordering.
//!
//! A design is the Cartesian grid of `S` sites and `T` times. Cells are
//! numbered space-fastest: cell `k = j * S + i` holds site `i` at time `j`
//! (0-based), so a length-`S*T` vector in cell order is the column-major
//! vectorization of an `S x T` matrix. Every structured solver in this crate
//! relies on that layout.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Planar site coordinates in kilometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub x: f64,
    pub y: f64,
}

impl Site {
    pub fn new(x: f64, y: f64) -> Self {
        Site { x, y }
    }

    /// Euclidean distance to another site.
    pub fn distance(&self, other: &Site) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Absolute time difference, the only temporal metric used here.
pub fn temporal_distance(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Pairwise Euclidean distances between sites.
pub fn spatial_distances(sites: &[Site]) -> DMatrix<f64> {
    let s = sites.len();
    let mut d = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            let dij = sites[i].distance(&sites[j]);
            d[(i, j)] = dij;
            d[(j, i)] = dij;
        }
    }
    d
}

/// Pairwise absolute differences between time points.
pub fn temporal_distances(times: &[f64]) -> DMatrix<f64> {
    let t = times.len();
    let mut d = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in (i + 1)..t {
            let dij = temporal_distance(times[i], times[j]);
            d[(i, j)] = dij;
            d[(j, i)] = dij;
        }
    }
    d
}

/// A site-by-time grid with an observation mask.
///
/// `observed` follows the canonical cell order. Observed cells carry data
/// (rows of `X`, entries of `y` in the same order); unobserved cells are
/// either missing training data or prediction targets, depending on use.
#[derive(Debug, Clone)]
pub struct StDesign {
    sites: Vec<Site>,
    times: Vec<f64>,
    observed: Vec<bool>,
    observed_idx: Vec<usize>,
    unobserved_idx: Vec<usize>,
}

impl StDesign {
    /// Builds a design from sites, times, and a mask over the `S*T` cells.
    ///
    /// Duplicate site coordinates are legal (they make the spatial
    /// correlation matrix singular only for kernels that are 1 at distance
    /// zero with no nugget anywhere, which the solvers report) but almost
    /// always indicate a data problem, so they are logged as a warning.
    pub fn new(sites: Vec<Site>, times: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if sites.is_empty() || times.is_empty() {
            return Err(Error::empty("design needs at least one site and one time"));
        }
        if observed.len() != sites.len() * times.len() {
            return Err(Error::dim(format!(
                "mask has {} entries for a {} x {} grid",
                observed.len(),
                sites.len(),
                times.len()
            )));
        }
        for site in &sites {
            if !site.x.is_finite() || !site.y.is_finite() {
                return Err(Error::invalid("site coordinates must be finite"));
            }
        }
        for &t in &times {
            if !t.is_finite() {
                return Err(Error::invalid("time points must be finite"));
            }
        }
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                if sites[i].distance(&sites[j]) == 0.0 {
                    log::warn!(
                        "sites {i} and {j} share coordinates ({}, {})",
                        sites[i].x,
                        sites[i].y
                    );
                }
            }
        }
        let observed_idx = (0..observed.len()).filter(|&k| observed[k]).collect();
        let unobserved_idx = (0..observed.len()).filter(|&k| !observed[k]).collect();
        Ok(StDesign {
            sites,
            times,
            observed,
            observed_idx,
            unobserved_idx,
        })
    }

    /// A design with every cell observed.
    pub fn full_grid(sites: Vec<Site>, times: Vec<f64>) -> Result<Self> {
        let n = sites.len() * times.len();
        StDesign::new(sites, times, vec![true; n])
    }

    /// Same grid, different mask.
    pub fn with_mask(&self, observed: Vec<bool>) -> Result<Self> {
        StDesign::new(self.sites.clone(), self.times.clone(), observed)
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of sites.
    pub fn s(&self) -> usize {
        self.sites.len()
    }

    /// Number of time points.
    pub fn t(&self) -> usize {
        self.times.len()
    }

    /// Total grid cells `S * T`.
    pub fn n_cells(&self) -> usize {
        self.sites.len() * self.times.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed_idx.len()
    }

    pub fn n_unobserved(&self) -> usize {
        self.unobserved_idx.len()
    }

    pub fn is_full(&self) -> bool {
        self.unobserved_idx.is_empty()
    }

    /// Canonical index of the cell for site `i` at time `j`.
    pub fn cell_index(&self, site: usize, time: usize) -> usize {
        debug_assert!(site < self.s() && time < self.t());
        time * self.s() + site
    }

    /// Site index of cell `k`.
    pub fn site_of(&self, cell: usize) -> usize {
        cell % self.s()
    }

    /// Time index of cell `k`.
    pub fn time_of(&self, cell: usize) -> usize {
        cell / self.s()
    }

    pub fn is_observed(&self, cell: usize) -> bool {
        self.observed[cell]
    }

    /// Observed cells in canonical order.
    pub fn observed_cells(&self) -> &[usize] {
        &self.observed_idx
    }

    /// Unobserved cells in canonical order.
    pub fn unobserved_cells(&self) -> &[usize] {
        &self.unobserved_idx
    }
}

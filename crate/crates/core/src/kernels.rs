//! Stationary correlation kernels over spatial or temporal distance.
//!
//! All three kernels are parameterized by a practical range: the distance at
//! which correlation has decayed to about 0.05 (exactly 0 for the spherical
//! kernel). This keeps range estimates comparable across kernel families.

use crate::design::Site;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt;
use std::str::FromStr;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Exponential,
    Spherical,
    Gaussian,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [
        KernelKind::Exponential,
        KernelKind::Spherical,
        KernelKind::Gaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Exponential => "exponential",
            KernelKind::Spherical => "spherical",
            KernelKind::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" => Ok(KernelKind::Exponential),
            "spherical" => Ok(KernelKind::Spherical),
            "gaussian" => Ok(KernelKind::Gaussian),
            other => Err(Error::invalid(format!(
                "unknown kernel '{other}' (expected exponential, spherical, or gaussian)"
            ))),
        }
    }
}

/// A kernel with its practical range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationModel {
    kind: KernelKind,
    range: f64,
}

impl CorrelationModel {
    pub fn new(kind: KernelKind, range: f64) -> Result<Self> {
        if !range.is_finite() || range <= 0.0 {
            return Err(Error::invalid(format!(
                "kernel range must be positive and finite, got {range}"
            )));
        }
        Ok(CorrelationModel { kind, range })
    }

    pub fn exponential(range: f64) -> Result<Self> {
        CorrelationModel::new(KernelKind::Exponential, range)
    }

    pub fn spherical(range: f64) -> Result<Self> {
        CorrelationModel::new(KernelKind::Spherical, range)
    }

    pub fn gaussian(range: f64) -> Result<Self> {
        CorrelationModel::new(KernelKind::Gaussian, range)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Correlation at distance `h >= 0`.
    ///
    /// Exponential: `exp(-3h/r)`. Spherical: `1 - 1.5u + 0.5u^3` with
    /// `u = h/r` on `[0, 1]`, zero beyond the range. Gaussian:
    /// `exp(-3(h/r)^2)`. All return 1 at distance zero and values in `[0, 1]`.
    pub fn correlate(&self, h: f64) -> Result<f64> {
        if !h.is_finite() || h < 0.0 {
            return Err(Error::invalid(format!(
                "distance must be non-negative and finite, got {h}"
            )));
        }
        Ok(self.rho(h))
    }

    /// `correlate` without the domain check, for hot loops that already
    /// guarantee a valid distance.
    pub(crate) fn rho(&self, h: f64) -> f64 {
        debug_assert!(h.is_finite() && h >= 0.0);
        let u = h / self.range;
        match self.kind {
            KernelKind::Exponential => (-3.0 * u).exp(),
            KernelKind::Spherical => {
                if u >= 1.0 {
                    0.0
                } else {
                    1.0 - 1.5 * u + 0.5 * u * u * u
                }
            }
            KernelKind::Gaussian => (-3.0 * u * u).exp(),
        }
    }
}

/// Applies a kernel entrywise to a symmetric distance matrix.
///
/// The diagonal is set to exactly 1 and the upper triangle is mirrored from
/// the lower one, so the result is exactly symmetric with a unit diagonal
/// regardless of rounding in the supplied distances.
pub fn correlation_matrix(model: &CorrelationModel, distances: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(Error::dim(format!(
            "distance matrix is {} x {}",
            distances.nrows(),
            distances.ncols()
        )));
    }
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in 0..i {
            let rho = model.correlate(distances[(i, j)])?;
            r[(i, j)] = rho;
            r[(j, i)] = rho;
        }
    }
    Ok(r)
}

/// Correlation matrix over site pairs.
pub fn spatial_correlation(model: &CorrelationModel, sites: &[Site]) -> Result<DMatrix<f64>> {
    correlation_matrix(model, &crate::design::spatial_distances(sites))
}

/// Correlation matrix over time-point pairs.
pub fn temporal_correlation(model: &CorrelationModel, times: &[f64]) -> Result<DMatrix<f64>> {
    correlation_matrix(model, &crate::design::temporal_distances(times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_hits_practical_range() {
        let m = CorrelationModel::exponential(2.5).unwrap();
        assert_relative_eq!(m.correlate(2.5).unwrap(), (-3.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(m.correlate(2.5).unwrap(), 0.049787, epsilon = 1e-6);
        assert_eq!(m.correlate(0.0).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_hits_practical_range() {
        let m = CorrelationModel::gaussian(4.0).unwrap();
        assert_relative_eq!(m.correlate(4.0).unwrap(), (-3.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(m.correlate(2.0).unwrap(), (-0.75f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn spherical_values_and_support_boundary() {
        let m = CorrelationModel::spherical(2.0).unwrap();
        assert_relative_eq!(m.correlate(1.0).unwrap(), 0.3125, epsilon = 1e-15);
        assert_eq!(m.correlate(2.0).unwrap(), 0.0);
        assert_eq!(m.correlate(5.0).unwrap(), 0.0);
        // Continuous at the boundary: values just inside the range are tiny.
        assert!(m.correlate(2.0 - 1e-9).unwrap() < 1e-8);
    }

    #[test]
    fn kernels_are_monotone_and_bounded() {
        for kind in KernelKind::ALL {
            let m = CorrelationModel::new(kind, 3.0).unwrap();
            let mut prev = 1.0;
            for step in 0..=60 {
                let rho = m.correlate(0.1 * step as f64).unwrap();
                assert!((0.0..=1.0).contains(&rho));
                assert!(rho <= prev + 1e-15, "{kind} not monotone");
                prev = rho;
            }
        }
    }

    #[test]
    fn exponential_on_integer_lags_is_ar1() {
        let m = CorrelationModel::exponential(7.3).unwrap();
        let lag1 = m.correlate(1.0).unwrap();
        for k in 0..=20u32 {
            let direct = m.correlate(k as f64).unwrap();
            let powered = lag1.powi(k as i32);
            assert_relative_eq!(direct, powered, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(CorrelationModel::exponential(0.0).is_err());
        assert!(CorrelationModel::exponential(-1.0).is_err());
        assert!(CorrelationModel::exponential(f64::NAN).is_err());
        let m = CorrelationModel::exponential(1.0).unwrap();
        assert!(m.correlate(-0.1).is_err());
        assert!(m.correlate(f64::INFINITY).is_err());
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let sites = vec![
            Site::new(0.0, 0.0),
            Site::new(1.3, 0.4),
            Site::new(2.7, 1.1),
            Site::new(0.2, 3.9),
        ];
        let m = CorrelationModel::spherical(3.0).unwrap();
        let r = spatial_correlation(&m, &sites).unwrap();
        for i in 0..4 {
            assert_eq!(r[(i, i)], 1.0);
            for j in 0..4 {
                assert_eq!(r[(i, j)], r[(j, i)]);
            }
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for kind in KernelKind::ALL {
            assert_eq!(kind.name().parse::<KernelKind>().unwrap(), kind);
        }
        assert_eq!("Exponential".parse::<KernelKind>().unwrap(), KernelKind::Exponential);
        assert!("cubic".parse::<KernelKind>().is_err());
    }
}

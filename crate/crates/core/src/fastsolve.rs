//! Structured covariance solvers.
//!
//! The full-grid covariances here factor into layers that can each be
//! inverted cheaply: a Kronecker interaction-plus-noise base handled by joint
//! eigendecomposition of the two kernel matrices, and low-rank site and time
//! layers peeled off with the Sherman-Morrison-Woodbury identity. Missing
//! cells are handled last, by solving on the full grid with indicator
//! columns and correcting through the unobserved block of the inverse. Every
//! path returns both the inverse application and the log determinant, and
//! never materializes an `ST x ST` matrix.
//!
//! `dense_solve` is the plain Cholesky route on an explicit covariance
//! matrix. It exists as the correctness oracle and timing baseline for the
//! structured paths, and as the fallback for covariances with no structure
//! to exploit.

use crate::covariance::{self, ModelTheta, ThetaPS, ThetaSep};
use crate::design::StDesign;
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative threshold below which a variance layer is dropped instead of
/// inverted.
pub const LAYER_SKIP_REL: f64 = 1e-10;

/// Floor applied to kernel-matrix eigenvalues in the base factorization.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// An inverse application together with the log determinant it came from.
#[derive(Debug, Clone)]
pub struct FastSolve {
    /// `Sigma^{-1} rhs`, one column per right-hand side.
    pub solution: DMatrix<f64>,
    /// `ln det Sigma`.
    pub logdet: f64,
}

/// A factored covariance: applies the inverse to right-hand-side blocks and
/// reports the log determinant. Factoring happens at construction, so
/// `apply` can be called repeatedly.
pub trait SolveOp {
    /// Matrix dimension (rows the right-hand side must have).
    fn dim(&self) -> usize;

    /// `Sigma^{-1} rhs`.
    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64>;

    /// `ln det Sigma`.
    fn logdet(&self) -> f64;
}

fn check_rhs(op_dim: usize, rhs: &DMatrix<f64>) -> Result<()> {
    if rhs.nrows() != op_dim {
        return Err(Error::dim(format!(
            "rhs has {} rows, operator expects {op_dim}",
            rhs.nrows()
        )));
    }
    Ok(())
}

fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// First pivot at which a textbook Cholesky of `m` breaks down. Only called
/// on matrices that already failed to factor, to make the error actionable.
fn first_failing_pivot(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let mut a = m.lower_triangle();
    for k in 0..n {
        let d = a[(k, k)];
        if d <= 0.0 || !d.is_finite() {
            return k;
        }
        let d = d.sqrt();
        for i in (k + 1)..n {
            a[(i, k)] /= d;
        }
        for j in (k + 1)..n {
            for i in j..n {
                a[(i, j)] -= a[(i, k)] * a[(j, k)];
            }
        }
    }
    n.saturating_sub(1)
}

fn try_cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let probe = Cholesky::new(m.clone());
    match probe {
        Some(c) => Ok(c),
        None => Err(Error::NotPositiveDefinite {
            what: what.to_string(),
            pivot: Some(first_failing_pivot(&m)),
        }),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (r, &src) in rows.iter().enumerate() {
        for c in 0..m.ncols() {
            out[(r, c)] = m[(src, c)];
        }
    }
    out
}

/// Plain Cholesky factorization of an explicit covariance matrix.
pub struct DenseFactor {
    chol: Cholesky<f64, Dyn>,
    logdet: f64,
}

impl DenseFactor {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::dim(format!(
                "covariance is {} x {}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.is_empty() {
            return Err(Error::empty("covariance has dimension zero"));
        }
        let chol = try_cholesky(sigma, "covariance")?;
        let logdet = chol_logdet(&chol);
        Ok(DenseFactor { chol, logdet })
    }
}

impl SolveOp for DenseFactor {
    fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    fn logdet(&self) -> f64 {
        self.logdet
    }
}

/// Factors an explicit covariance and solves in one call.
pub fn dense_solve(sigma: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<FastSolve> {
    let factor = DenseFactor::new(sigma.clone_owned())?;
    check_rhs(factor.dim(), rhs)?;
    Ok(FastSolve {
        solution: factor.apply(rhs),
        logdet: factor.logdet(),
    })
}

/// Joint-eigendecomposition factorization of an interaction-plus-noise
/// covariance `sigma2_omega * R_t (x) R_s + sigma2_epsilon * I`.
///
/// With `R_s = U_s P_s U_s'` and `R_t = U_t P_t U_t'`, the covariance is
/// `(U_t (x) U_s) V (U_t (x) U_s)'` for the diagonal
/// `V = sigma2_omega * P_t (x) P_s + sigma2_epsilon * I`, so inverse and log
/// determinant reduce to two small eigendecompositions. Kronecker products
/// are applied through the reshaping identity
/// `(A (x) B) vec(M) = vec(B M A')`, never formed.
pub struct StegleFactor {
    s: usize,
    t: usize,
    /// Diagonal of `V` in cell order.
    v: DVector<f64>,
    /// Eigenvector bases; `None` when the interaction term is skipped and
    /// the covariance is just `sigma2_epsilon * I`.
    basis: Option<(DMatrix<f64>, DMatrix<f64>)>,
    logdet: f64,
    clamped_eigenvalues: usize,
}

impl StegleFactor {
    /// Factors from the two kernel correlation matrices.
    ///
    /// Kernel eigenvalues are floored at [`EIGENVALUE_FLOOR`]; any flooring
    /// is counted, reported through [`StegleFactor::clamped_eigenvalues`],
    /// and logged as a conditioning warning. A diagonal of `V` that still
    /// fails to be positive is reported as an indefiniteness error.
    pub fn new(
        sigma2_omega: f64,
        sigma2_epsilon: f64,
        r_s: &DMatrix<f64>,
        r_t: &DMatrix<f64>,
    ) -> Result<Self> {
        for (name, v) in [
            ("sigma2_omega", sigma2_omega),
            ("sigma2_epsilon", sigma2_epsilon),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        if r_s.nrows() != r_s.ncols() || r_t.nrows() != r_t.ncols() {
            return Err(Error::dim("kernel matrices must be square"));
        }
        let (s, t) = (r_s.nrows(), r_t.nrows());
        let n = s * t;
        if n == 0 {
            return Err(Error::empty("kernel matrices have dimension zero"));
        }
        let total = sigma2_omega + sigma2_epsilon;
        if total <= 0.0 || total.is_nan() {
            return Err(Error::IndefiniteCovariance(
                "interaction and noise variances are both zero".into(),
            ));
        }

        if sigma2_omega < LAYER_SKIP_REL * total {
            let v = DVector::from_element(n, sigma2_epsilon);
            let logdet = n as f64 * sigma2_epsilon.ln();
            return Ok(StegleFactor {
                s,
                t,
                v,
                basis: None,
                logdet,
                clamped_eigenvalues: 0,
            });
        }

        let eig_s = r_s.clone().symmetric_eigen();
        let eig_t = r_t.clone().symmetric_eigen();
        let mut clamped = 0usize;
        let mut floor = |x: f64| {
            if x < EIGENVALUE_FLOOR {
                clamped += 1;
                EIGENVALUE_FLOOR
            } else {
                x
            }
        };
        let p_s: Vec<f64> = eig_s.eigenvalues.iter().map(|&x| floor(x)).collect();
        let p_t: Vec<f64> = eig_t.eigenvalues.iter().map(|&x| floor(x)).collect();
        if clamped > 0 {
            log::warn!(
                "floored {clamped} kernel eigenvalue(s) at {EIGENVALUE_FLOOR:e}; \
                 a kernel matrix is numerically singular"
            );
        }

        let mut v = DVector::zeros(n);
        let mut logdet = 0.0;
        for j in 0..t {
            for i in 0..s {
                let vij = sigma2_omega * p_t[j] * p_s[i] + sigma2_epsilon;
                if vij <= 0.0 || vij.is_nan() {
                    return Err(Error::IndefiniteCovariance(format!(
                        "joint eigenvalue {} is {vij}",
                        j * s + i
                    )));
                }
                v[j * s + i] = vij;
                logdet += vij.ln();
            }
        }

        Ok(StegleFactor {
            s,
            t,
            v,
            basis: Some((eig_s.eigenvectors, eig_t.eigenvectors)),
            logdet,
            clamped_eigenvalues: clamped,
        })
    }

    /// How many kernel eigenvalues hit the floor during factorization.
    pub fn clamped_eigenvalues(&self) -> usize {
        self.clamped_eigenvalues
    }
}

impl SolveOp for StegleFactor {
    fn dim(&self) -> usize {
        self.s * self.t
    }

    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        debug_assert_eq!(rhs.nrows(), n);
        let Some((u_s, u_t)) = &self.basis else {
            let inv = 1.0 / self.v[0];
            return rhs * inv;
        };
        let mut out = DMatrix::zeros(n, rhs.ncols());
        for c in 0..rhs.ncols() {
            let m = DMatrix::from_column_slice(self.s, self.t, &rhs.as_slice()[c * n..(c + 1) * n]);
            let mut a = u_s.tr_mul(&m) * u_t;
            for (ai, vi) in a.iter_mut().zip(self.v.iter()) {
                *ai /= vi;
            }
            let back = u_s * a * u_t.transpose();
            out.as_mut_slice()[c * n..(c + 1) * n].copy_from_slice(back.as_slice());
        }
        out
    }

    fn logdet(&self) -> f64 {
        self.logdet
    }
}

/// One-shot interaction-plus-noise solve.
pub fn stegle_solve(
    sigma2_omega: f64,
    sigma2_epsilon: f64,
    r_s: &DMatrix<f64>,
    r_t: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Result<FastSolve> {
    let factor = StegleFactor::new(sigma2_omega, sigma2_epsilon, r_s, r_t)?;
    check_rhs(factor.dim(), rhs)?;
    Ok(FastSolve {
        solution: factor.apply(rhs),
        logdet: factor.logdet(),
    })
}

/// A 0/1 incidence map assigning each row to exactly one column (each cell
/// to its site, or to its time). Multiplications by the map and its
/// transpose are index operations; the dense form is only materialized once,
/// as a right-hand-side block during layer construction.
#[derive(Debug, Clone)]
pub struct Incidence {
    n_rows: usize,
    n_cols: usize,
    col_of_row: Vec<usize>,
}

impl Incidence {
    pub fn new(n_cols: usize, col_of_row: Vec<usize>) -> Result<Self> {
        if n_cols == 0 || col_of_row.is_empty() {
            return Err(Error::empty("incidence map has no rows or no columns"));
        }
        if let Some(&bad) = col_of_row.iter().find(|&&c| c >= n_cols) {
            return Err(Error::dim(format!(
                "incidence column {bad} out of range for {n_cols} columns"
            )));
        }
        Ok(Incidence {
            n_rows: col_of_row.len(),
            n_cols,
            col_of_row,
        })
    }

    /// Cell-to-site map over the full grid.
    pub fn site_map(design: &StDesign) -> Incidence {
        let col_of_row = (0..design.n_cells()).map(|k| design.site_of(k)).collect();
        Incidence::new(design.s(), col_of_row).expect("design is non-empty")
    }

    /// Cell-to-time map over the full grid.
    pub fn time_map(design: &StDesign) -> Incidence {
        let col_of_row = (0..design.n_cells()).map(|k| design.time_of(k)).collect();
        Incidence::new(design.t(), col_of_row).expect("design is non-empty")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// `Z' y`: sums rows of `y` into their assigned columns.
    fn gather(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        debug_assert_eq!(y.nrows(), self.n_rows);
        let mut out = DMatrix::zeros(self.n_cols, y.ncols());
        for c in 0..y.ncols() {
            for (row, &col) in self.col_of_row.iter().enumerate() {
                out[(col, c)] += y[(row, c)];
            }
        }
        out
    }

    fn dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n_rows, self.n_cols);
        for (row, &col) in self.col_of_row.iter().enumerate() {
            z[(row, col)] = 1.0;
        }
        z
    }
}

/// One Sherman-Morrison-Woodbury layer over an already-factored operator:
/// the inverse and log determinant of `A + Z Sigma_c Z'` given those of `A`.
///
/// Construction solves `A^{-1} Z` once and factors the capacitance matrix
/// `M = Sigma_c^{-1} + Z' A^{-1} Z`, after which each apply costs one inner
/// apply plus rank-`c` corrections. The log determinant accumulates as
/// `ln|A| + ln|Sigma_c| + ln|M|`.
pub struct SmwLayer {
    inner: Box<dyn SolveOp>,
    ai_z: DMatrix<f64>,
    mid_chol: Cholesky<f64, Dyn>,
    incidence: Incidence,
    logdet: f64,
}

impl SmwLayer {
    pub fn new(
        inner: Box<dyn SolveOp>,
        sigma_c: &DMatrix<f64>,
        incidence: Incidence,
        what: &str,
    ) -> Result<Self> {
        if incidence.n_rows() != inner.dim() {
            return Err(Error::dim(format!(
                "incidence has {} rows, inner operator has dimension {}",
                incidence.n_rows(),
                inner.dim()
            )));
        }
        if sigma_c.nrows() != incidence.n_cols() || sigma_c.ncols() != incidence.n_cols() {
            return Err(Error::dim(format!(
                "random-effect covariance is {} x {}, incidence has {} columns",
                sigma_c.nrows(),
                sigma_c.ncols(),
                incidence.n_cols()
            )));
        }
        let chol_c = try_cholesky(sigma_c.clone_owned(), what)?;
        let logdet_c = chol_logdet(&chol_c);

        let ai_z = inner.apply(&incidence.dense());
        let mut mid = chol_c.inverse() + incidence.gather(&ai_z);
        symmetrize(&mut mid);
        let mid_chol = try_cholesky(mid, "capacitance matrix")?;
        let logdet = inner.logdet() + logdet_c + chol_logdet(&mid_chol);

        Ok(SmwLayer {
            inner,
            ai_z,
            mid_chol,
            incidence,
            logdet,
        })
    }
}

impl SolveOp for SmwLayer {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let base = self.inner.apply(rhs);
        let projected = self.incidence.gather(&base);
        let corrected = self.mid_chol.solve(&projected);
        base - &self.ai_z * corrected
    }

    fn logdet(&self) -> f64 {
        self.logdet
    }
}

/// One-shot Sherman-Morrison-Woodbury solve over an existing operator.
pub fn smw_solve(
    inner: Box<dyn SolveOp>,
    sigma_c: &DMatrix<f64>,
    incidence: Incidence,
    rhs: &DMatrix<f64>,
) -> Result<FastSolve> {
    let layer = SmwLayer::new(inner, sigma_c, incidence, "random-effect covariance")?;
    check_rhs(layer.dim(), rhs)?;
    Ok(FastSolve {
        solution: layer.apply(rhs),
        logdet: layer.logdet(),
    })
}

/// Factored full-grid product-sum covariance.
///
/// Layer order: interaction-plus-noise base, then the temporal layer, then
/// the spatial layer. Layers contributing less than [`LAYER_SKIP_REL`] of
/// the total variance are dropped.
pub fn ps_operator(theta: &ThetaPS, design: &StDesign) -> Result<Box<dyn SolveOp>> {
    let total = theta.total_variance();
    if total <= 0.0 || total.is_nan() {
        return Err(Error::IndefiniteCovariance(
            "all variance components are zero".into(),
        ));
    }
    let skip = LAYER_SKIP_REL * total;
    let model = ModelTheta::ProductSum(*theta);
    let (r_s, r_t) = covariance::design_correlations(&model, design)?;

    let omega = if theta.sigma2_omega < skip {
        0.0
    } else {
        theta.sigma2_omega
    };
    let mut op: Box<dyn SolveOp> =
        Box::new(StegleFactor::new(omega, theta.sigma2_epsilon, &r_s, &r_t)?);

    if theta.sigma2_tau + theta.sigma2_eta >= skip {
        let mut sigma_t = r_t * theta.sigma2_tau;
        for j in 0..design.t() {
            sigma_t[(j, j)] += theta.sigma2_eta;
        }
        op = Box::new(SmwLayer::new(
            op,
            &sigma_t,
            Incidence::time_map(design),
            "temporal random-effect covariance",
        )?);
    }

    if theta.sigma2_delta + theta.sigma2_gamma >= skip {
        let mut sigma_s = r_s * theta.sigma2_delta;
        for i in 0..design.s() {
            sigma_s[(i, i)] += theta.sigma2_gamma;
        }
        op = Box::new(SmwLayer::new(
            op,
            &sigma_s,
            Incidence::site_map(design),
            "spatial random-effect covariance",
        )?);
    }

    Ok(op)
}

/// Full-grid product-sum solve in one call.
pub fn ps_solve(theta: &ThetaPS, design: &StDesign, rhs: &DMatrix<f64>) -> Result<FastSolve> {
    let op = ps_operator(theta, design)?;
    check_rhs(op.dim(), rhs)?;
    Ok(FastSolve {
        solution: op.apply(rhs),
        logdet: op.logdet(),
    })
}

/// Factored full-grid separable covariance
/// `sigma2_omega * R*_t (x) R*_s`, where each starred matrix blends its
/// kernel with its nugget share. Solves are two triangular solve sweeps per
/// column via the Kronecker reshaping identity.
pub struct SepFactor {
    s: usize,
    t: usize,
    sigma2_omega: f64,
    chol_s: Cholesky<f64, Dyn>,
    chol_t: Cholesky<f64, Dyn>,
    logdet: f64,
}

impl SepFactor {
    pub fn new(theta: &ThetaSep, design: &StDesign) -> Result<Self> {
        let model = ModelTheta::Separable(*theta);
        let (r_s, r_t) = covariance::design_correlations(&model, design)?;
        let (s, t) = (design.s(), design.t());

        let mut star_s = r_s * (1.0 - theta.v_s);
        for i in 0..s {
            star_s[(i, i)] = 1.0;
        }
        let mut star_t = r_t * (1.0 - theta.v_t);
        for j in 0..t {
            star_t[(j, j)] = 1.0;
        }

        let chol_s = try_cholesky(star_s, "spatial structure matrix")?;
        let chol_t = try_cholesky(star_t, "temporal structure matrix")?;
        let logdet = (s * t) as f64 * theta.sigma2_omega.ln()
            + s as f64 * chol_logdet(&chol_t)
            + t as f64 * chol_logdet(&chol_s);

        Ok(SepFactor {
            s,
            t,
            sigma2_omega: theta.sigma2_omega,
            chol_s,
            chol_t,
            logdet,
        })
    }
}

impl SolveOp for SepFactor {
    fn dim(&self) -> usize {
        self.s * self.t
    }

    fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        debug_assert_eq!(rhs.nrows(), n);
        let mut out = DMatrix::zeros(n, rhs.ncols());
        let inv_omega = 1.0 / self.sigma2_omega;
        for c in 0..rhs.ncols() {
            let m = DMatrix::from_column_slice(self.s, self.t, &rhs.as_slice()[c * n..(c + 1) * n]);
            let left = self.chol_s.solve(&m);
            let both = self.chol_t.solve(&left.transpose()).transpose() * inv_omega;
            out.as_mut_slice()[c * n..(c + 1) * n].copy_from_slice(both.as_slice());
        }
        out
    }

    fn logdet(&self) -> f64 {
        self.logdet
    }
}

/// Full-grid separable solve in one call.
pub fn sep_solve(theta: &ThetaSep, design: &StDesign, rhs: &DMatrix<f64>) -> Result<FastSolve> {
    let op = SepFactor::new(theta, design)?;
    check_rhs(op.dim(), rhs)?;
    Ok(FastSolve {
        solution: op.apply(rhs),
        logdet: op.logdet(),
    })
}

/// Factored full-grid operator for either model family.
pub fn model_operator(model: &ModelTheta, design: &StDesign) -> Result<Box<dyn SolveOp>> {
    match model {
        ModelTheta::ProductSum(theta) => ps_operator(theta, design),
        ModelTheta::Separable(theta) => Ok(Box::new(SepFactor::new(theta, design)?)),
    }
}

/// Observed-block solve through a full-grid operator.
///
/// Pads the right-hand sides with zeros at unobserved cells, appends one
/// indicator column per unobserved cell, and runs a single full-grid solve.
/// The unobserved-by-unobserved block of the full inverse then corrects the
/// padded solution down to `Sigma_oo^{-1} rhs_o`, and its log determinant
/// adjusts the full one: `ln|Sigma_oo| = ln|Sigma| + ln|inverse_uu|`.
pub fn hw_solve(full: &dyn SolveOp, design: &StDesign, rhs_o: &DMatrix<f64>) -> Result<FastSolve> {
    if full.dim() != design.n_cells() {
        return Err(Error::dim(format!(
            "operator dimension {} does not match the {}-cell grid",
            full.dim(),
            design.n_cells()
        )));
    }
    let n_o = design.n_observed();
    if n_o == 0 {
        return Err(Error::empty("design has no observed cells"));
    }
    if rhs_o.nrows() != n_o {
        return Err(Error::dim(format!(
            "rhs has {} rows, design has {n_o} observed cells",
            rhs_o.nrows()
        )));
    }
    if design.is_full() {
        return Ok(FastSolve {
            solution: full.apply(rhs_o),
            logdet: full.logdet(),
        });
    }

    let n = design.n_cells();
    let n_u = design.n_unobserved();
    let k = rhs_o.ncols();
    let observed = design.observed_cells();
    let unobserved = design.unobserved_cells();

    let mut combined = DMatrix::zeros(n, k + n_u);
    for (row_o, &cell) in observed.iter().enumerate() {
        for c in 0..k {
            combined[(cell, c)] = rhs_o[(row_o, c)];
        }
    }
    for (j, &cell) in unobserved.iter().enumerate() {
        combined[(cell, k + j)] = 1.0;
    }

    let solved = full.apply(&combined);
    let f = solved.columns(0, k).into_owned();
    let g = solved.columns(k, n_u).into_owned();

    let mut inv_uu = gather_rows(&g, unobserved);
    symmetrize(&mut inv_uu);
    let chol_uu = try_cholesky(inv_uu, "unobserved block of the inverse")?;

    let f_u = gather_rows(&f, unobserved);
    let correction = gather_rows(&g, observed) * chol_uu.solve(&f_u);
    let solution = gather_rows(&f, observed) - correction;
    let logdet = full.logdet() + chol_logdet(&chol_uu);

    Ok(FastSolve { solution, logdet })
}

/// Factors the model covariance and solves on the observed cells, routing
/// through the full-grid structure whether or not cells are missing.
pub fn solve_observed(
    model: &ModelTheta,
    design: &StDesign,
    rhs_o: &DMatrix<f64>,
) -> Result<FastSolve> {
    let op = model_operator(model, design)?;
    hw_solve(op.as_ref(), design, rhs_o)
}

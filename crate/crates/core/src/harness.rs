//! Simulation studies and solver benchmarks.
//!
//! The study harness simulates responses from a known product-sum model on a
//! random site layout, fits a chosen set of estimation methods to each
//! replicate, and aggregates coefficient tests, interval coverage, and
//! prediction accuracy. Replicates draw from per-replicate random streams,
//! so results are reproducible for a given root seed regardless of worker
//! count, and any single replicate can be regenerated in isolation.

use crate::covariance::{ModelTheta, ThetaPS, ThetaSep};
use crate::design::{Site, StDesign};
use crate::error::{Error, Result};
use crate::estimate::{
    fit_cwls, fit_ols, fit_reml, wald_test, FitOptions, FitResult, ModelSpec,
};
use crate::fastsolve::{dense_solve, solve_observed, FastSolve};
use crate::kernels::{CorrelationModel, KernelKind};
use crate::predict::blup;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::time::Instant;

/// A named generating model for simulation studies.
#[derive(Debug, Clone)]
pub struct VarianceConfig {
    pub name: String,
    pub theta: ThetaPS,
}

/// The four standard generating models. All share exponential kernels with a
/// 2.25 km spatial range and a 9-step temporal range; they differ in how
/// total variance splits across components, from structure-dominated (vc1)
/// to nugget-heavy with a weak interaction (vc4).
pub fn variance_config(name: &str) -> Result<VarianceConfig> {
    let spatial = CorrelationModel::exponential(2.25)?;
    let temporal = CorrelationModel::exponential(9.0)?;
    let v = match name.to_ascii_lowercase().as_str() {
        "vc1" => [18.0, 1.0, 18.0, 1.0, 20.0, 2.0],
        "vc2" => [16.0, 4.0, 16.0, 4.0, 16.0, 4.0],
        "vc3" => [10.0, 10.0, 10.0, 10.0, 10.0, 10.0],
        "vc4" => [30.0, 0.1, 20.0, 0.1, 2.0, 7.8],
        other => {
            return Err(Error::invalid(format!(
                "unknown variance config '{other}' (expected vc1..vc4)"
            )))
        }
    };
    Ok(VarianceConfig {
        name: name.to_ascii_lowercase(),
        theta: ThetaPS::new(v[0], v[1], v[2], v[3], v[4], v[5], spatial, temporal)?,
    })
}

pub fn all_variance_configs() -> Vec<VarianceConfig> {
    ["vc1", "vc2", "vc3", "vc4"]
        .iter()
        .map(|n| variance_config(n).expect("built-in config"))
        .collect()
}

/// Layout and size of one simulation study.
#[derive(Debug, Clone)]
pub struct SimProtocol {
    pub n_sites: usize,
    pub n_times: usize,
    /// Held-out cells per replicate; the rest are training data.
    pub n_test: usize,
    /// Side length of the square sampling domain, km.
    pub domain: f64,
    pub reps: usize,
    pub seed: u64,
    /// True coefficients: intercept, a time-varying covariate, a
    /// space-varying covariate, and a fully varying covariate.
    pub beta: [f64; 4],
}

impl Default for SimProtocol {
    fn default() -> Self {
        SimProtocol {
            n_sites: 36,
            n_times: 30,
            n_test: 25,
            domain: 5.0,
            reps: 200,
            seed: 20260819,
            beta: [0.0; 4],
        }
    }
}

impl SimProtocol {
    fn validate(&self) -> Result<()> {
        let cells = self.n_sites * self.n_times;
        if self.n_sites == 0 || self.n_times == 0 {
            return Err(Error::invalid("protocol needs sites and times"));
        }
        if self.n_test >= cells {
            return Err(Error::invalid(format!(
                "{} test cells exceed the {cells}-cell grid",
                self.n_test
            )));
        }
        if self.reps == 0 {
            return Err(Error::invalid("protocol needs at least one replicate"));
        }
        if self.domain <= 0.0 || self.domain.is_nan() {
            return Err(Error::invalid("domain side must be positive"));
        }
        Ok(())
    }
}

/// One simulated replicate, already split into training and test parts.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    /// Observed cells are the training data; test cells are unobserved.
    pub design: StDesign,
    pub x_obs: DMatrix<f64>,
    pub y_obs: DVector<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: DVector<f64>,
    pub test_cells: Vec<usize>,
}

/// Independent random stream for one replicate of a study.
fn rep_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn lower_cholesky(r: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(r.clone_owned())
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: what.to_string(),
            pivot: None,
        })
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draws one replicate from the generating model.
///
/// Sites are uniform on the square domain and redrawn per replicate; times
/// are the integers `1..=n_times`. The response adds the regression surface,
/// spatially and temporally correlated effects with their nuggets, the
/// separably correlated interaction, and measurement noise. The test set is
/// a uniform draw of cells without replacement.
pub fn simulate_dataset(
    theta: &ThetaPS,
    proto: &SimProtocol,
    rep: usize,
) -> Result<SimulatedData> {
    proto.validate()?;
    let mut rng = rep_rng(proto.seed, rep as u64);
    let s = proto.n_sites;
    let t = proto.n_times;
    let n = s * t;

    let sites: Vec<Site> = (0..s)
        .map(|_| {
            Site::new(
                rng.gen::<f64>() * proto.domain,
                rng.gen::<f64>() * proto.domain,
            )
        })
        .collect();
    let times: Vec<f64> = (1..=t).map(|j| j as f64).collect();
    let full = StDesign::full_grid(sites, times)?;

    let x_time = standard_normals(&mut rng, t);
    let x_site = standard_normals(&mut rng, s);
    let x_cell = standard_normals(&mut rng, n);
    let mut x_full = DMatrix::zeros(n, 4);
    for k in 0..n {
        x_full[(k, 0)] = 1.0;
        x_full[(k, 1)] = x_time[full.time_of(k)];
        x_full[(k, 2)] = x_site[full.site_of(k)];
        x_full[(k, 3)] = x_cell[k];
    }

    let r_s = crate::kernels::spatial_correlation(&theta.spatial, full.sites())?;
    let r_t = crate::kernels::temporal_correlation(&theta.temporal, full.times())?;
    let l_s = lower_cholesky(&r_s, "spatial kernel matrix")?;
    let l_t = lower_cholesky(&r_t, "temporal kernel matrix")?;

    let delta = &l_s * standard_normals(&mut rng, s) * theta.sigma2_delta.sqrt();
    let gamma = standard_normals(&mut rng, s) * theta.sigma2_gamma.sqrt();
    let tau = &l_t * standard_normals(&mut rng, t) * theta.sigma2_tau.sqrt();
    let eta = standard_normals(&mut rng, t) * theta.sigma2_eta.sqrt();
    let g = DMatrix::from_fn(s, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let omega = (&l_s * g * l_t.transpose()) * theta.sigma2_omega.sqrt();
    let epsilon = standard_normals(&mut rng, n) * theta.sigma2_epsilon.sqrt();

    let mut y_full = DVector::zeros(n);
    for k in 0..n {
        let (i, j) = (full.site_of(k), full.time_of(k));
        let mean: f64 = (0..4).map(|c| x_full[(k, c)] * proto.beta[c]).sum();
        y_full[k] =
            mean + delta[i] + gamma[i] + tau[j] + eta[j] + omega[(i, j)] + epsilon[k];
    }

    let mut cells: Vec<usize> = (0..n).collect();
    let (test, _) = cells.partial_shuffle(&mut rng, proto.n_test);
    let mut test_cells = test.to_vec();
    test_cells.sort_unstable();

    let mut observed = vec![true; n];
    for &c in &test_cells {
        observed[c] = false;
    }
    let design = full.with_mask(observed)?;

    let take = |cells: &[usize]| {
        let mut x = DMatrix::zeros(cells.len(), 4);
        let mut y = DVector::zeros(cells.len());
        for (row, &k) in cells.iter().enumerate() {
            for c in 0..4 {
                x[(row, c)] = x_full[(k, c)];
            }
            y[row] = y_full[k];
        }
        (x, y)
    };
    let (x_obs, y_obs) = take(design.observed_cells());
    let (x_test, y_test) = take(&test_cells);

    Ok(SimulatedData {
        design,
        x_obs,
        y_obs,
        x_test,
        y_test,
        test_cells,
    })
}

/// The five estimation methods the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PsReml,
    PsCwls,
    SepReml,
    SepCwls,
    IreOls,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PsReml,
        Method::PsCwls,
        Method::SepReml,
        Method::SepCwls,
        Method::IreOls,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::PsReml => "PS_REML",
            Method::PsCwls => "PS_C-WLS",
            Method::SepReml => "SEP_REML",
            Method::SepCwls => "SEP_C-WLS",
            Method::IreOls => "IRE_OLS",
        }
    }

    /// Parses a method label; case and hyphen/underscore differences are
    /// ignored.
    pub fn parse(s: &str) -> Result<Method> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        for m in Method::ALL {
            let own: String = m
                .label()
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            if key == own {
                return Ok(m);
            }
        }
        Err(Error::invalid(format!(
            "unknown method '{s}' (expected one of PS_REML, PS_C-WLS, SEP_REML, SEP_C-WLS, IRE_OLS)"
        )))
    }

    /// Runs this method's fit on one dataset.
    pub fn fit(
        &self,
        design: &StDesign,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        opts: &FitOptions,
    ) -> Result<FitResult> {
        let exp_exp = |family: fn(KernelKind, KernelKind) -> ModelSpec| {
            family(KernelKind::Exponential, KernelKind::Exponential)
        };
        let ps = exp_exp(|s, t| ModelSpec::ProductSum {
            spatial: s,
            temporal: t,
        });
        let sep = exp_exp(|s, t| ModelSpec::Separable {
            spatial: s,
            temporal: t,
        });
        match self {
            Method::PsReml => fit_reml(ps, design, x, y, opts),
            Method::PsCwls => fit_cwls(ps, design, x, y, opts),
            Method::SepReml => fit_reml(sep, design, x, y, opts),
            Method::SepCwls => fit_cwls(sep, design, x, y, opts),
            Method::IreOls => fit_ols(design, x, y),
        }
    }
}

/// Per-method aggregate over all successful replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub reps_used: usize,
    pub failures: usize,
    pub non_converged: usize,
    /// Share of replicates rejecting each non-intercept coefficient at the
    /// 5% level. The generating coefficients are zero in the standard
    /// protocol, making these empirical type-I error rates.
    pub rejection_rate: [f64; 3],
    /// Share of held-out observations inside their 95% intervals.
    pub coverage: f64,
    /// Root mean squared prediction error over all held-out observations.
    pub rmspe: f64,
    /// Mean coefficient estimation error, per coefficient.
    pub beta_bias: [f64; 4],
    /// Mean prediction error over all held-out observations.
    pub pred_bias: f64,
    /// Mean wall-clock seconds per fit (excluded from reproducibility
    /// comparisons).
    pub mean_fit_seconds: f64,
}

/// All aggregates from one study run.
#[derive(Debug, Clone)]
pub struct StudyResult {
    pub config: String,
    pub seed: u64,
    pub reps: usize,
    pub summaries: Vec<MethodSummary>,
}

struct MethodRep {
    beta_err: [f64; 4],
    p_values: [f64; 3],
    covered: usize,
    n_test: usize,
    sq_err_sum: f64,
    err_sum: f64,
    converged: bool,
    seconds: f64,
}

fn run_one_method(
    method: Method,
    data: &SimulatedData,
    proto: &SimProtocol,
    opts: &FitOptions,
) -> Result<MethodRep> {
    let start = Instant::now();
    let fit = method.fit(&data.design, &data.x_obs, &data.y_obs, opts)?;
    let mut p_values = [0.0; 3];
    for (k, p) in p_values.iter_mut().enumerate() {
        *p = wald_test(&fit, k + 1)?.p_value;
    }
    let pred = blup(
        &fit,
        &data.design,
        &data.x_obs,
        &data.y_obs,
        &data.x_test,
        &data.test_cells,
    )?;
    let mut covered = 0;
    let mut sq_err_sum = 0.0;
    let mut err_sum = 0.0;
    for j in 0..data.test_cells.len() {
        let err = pred.predictions[j] - data.y_test[j];
        sq_err_sum += err * err;
        err_sum += err;
        if pred.lower[j] <= data.y_test[j] && data.y_test[j] <= pred.upper[j] {
            covered += 1;
        }
    }
    let mut beta_err = [0.0; 4];
    for (c, e) in beta_err.iter_mut().enumerate() {
        *e = fit.beta[c] - proto.beta[c];
    }
    Ok(MethodRep {
        beta_err,
        p_values,
        covered,
        n_test: data.test_cells.len(),
        sq_err_sum,
        err_sum,
        converged: fit.converged,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs a full simulation study.
///
/// Replicates are independent random streams, so the aggregates (timings
/// aside) are identical for any `workers` value. A replicate whose fit or
/// prediction fails is dropped from that method's aggregates; if any method
/// loses more than 5% of replicates the study aborts with an error.
pub fn run_study(
    config: &VarianceConfig,
    proto: &SimProtocol,
    methods: &[Method],
    opts: &FitOptions,
    workers: usize,
) -> Result<StudyResult> {
    proto.validate()?;
    if methods.is_empty() {
        return Err(Error::empty("no methods selected"));
    }

    let run_rep = |rep: usize| -> Vec<Option<MethodRep>> {
        match simulate_dataset(&config.theta, proto, rep) {
            Ok(data) => methods
                .iter()
                .map(|m| match run_one_method(*m, &data, proto, opts) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        log::warn!("rep {rep}: {} failed: {e}", m.label());
                        None
                    }
                })
                .collect(),
            Err(e) => {
                log::warn!("rep {rep}: simulation failed: {e}");
                methods.iter().map(|_| None).collect()
            }
        }
    };

    let per_rep: Vec<Vec<Option<MethodRep>>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..proto.reps).into_par_iter().map(run_rep).collect()
        })
    } else {
        (0..proto.reps).map(run_rep).collect()
    };

    let mut summaries = Vec::with_capacity(methods.len());
    for (mi, &method) in methods.iter().enumerate() {
        let mut used = 0usize;
        let mut non_converged = 0usize;
        let mut reject = [0usize; 3];
        let mut covered = 0usize;
        let mut n_pred = 0usize;
        let mut sq_err = 0.0;
        let mut err = 0.0;
        let mut bias = [0.0f64; 4];
        let mut seconds = 0.0;

        for rep in &per_rep {
            let Some(r) = &rep[mi] else { continue };
            used += 1;
            if !r.converged {
                non_converged += 1;
            }
            for (p, rej) in r.p_values.iter().zip(reject.iter_mut()) {
                if *p < 0.05 {
                    *rej += 1;
                }
            }
            covered += r.covered;
            n_pred += r.n_test;
            sq_err += r.sq_err_sum;
            err += r.err_sum;
            for (b, e) in bias.iter_mut().zip(r.beta_err) {
                *b += e;
            }
            seconds += r.seconds;
        }

        let failures = proto.reps - used;
        if failures * 20 > proto.reps {
            return Err(Error::TooManyFailures {
                failed: failures,
                total: proto.reps,
            });
        }
        if used == 0 {
            return Err(Error::TooManyFailures {
                failed: failures,
                total: proto.reps,
            });
        }

        summaries.push(MethodSummary {
            method,
            reps_used: used,
            failures,
            non_converged,
            rejection_rate: reject.map(|r| r as f64 / used as f64),
            coverage: covered as f64 / n_pred as f64,
            rmspe: (sq_err / n_pred as f64).sqrt(),
            beta_bias: bias.map(|b| b / used as f64),
            pred_bias: err / n_pred as f64,
            mean_fit_seconds: seconds / used as f64,
        });
    }

    Ok(StudyResult {
        config: config.name.clone(),
        seed: proto.seed,
        reps: proto.reps,
        summaries,
    })
}

impl StudyResult {
    pub const CSV_HEADER: &'static str = "config,seed,method,reps_used,failures,\
non_converged,reject_b1,reject_b2,reject_b3,coverage,rmspe,bias_b0,bias_b1,\
bias_b2,bias_b3,pred_bias,mean_fit_seconds";

    /// Suggested output file name for this run.
    pub fn file_name(&self) -> String {
        format!("study_{}_{}.csv", self.config, self.seed)
    }

    /// Full table as CSV. Columns are fixed; all values except the timing
    /// column are reproducible for a given seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.config,
                self.seed,
                s.method.label(),
                s.reps_used,
                s.failures,
                s.non_converged,
                s.rejection_rate[0],
                s.rejection_rate[1],
                s.rejection_rate[2],
                s.coverage,
                s.rmspe,
                s.beta_bias[0],
                s.beta_bias[1],
                s.beta_bias[2],
                s.beta_bias[3],
                s.pred_bias,
                s.mean_fit_seconds,
            );
        }
        out
    }

    /// Human-readable aligned table.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "study {} seed {} ({} replicates)\n",
            self.config, self.seed, self.reps
        );
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>5} {:>8} {:>8} {:>8} {:>9} {:>9} {:>10} {:>8}",
            "method", "used", "fail", "rej_b1", "rej_b2", "rej_b3", "coverage", "rmspe",
            "pred_bias", "sec/fit"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>9.4} {:>9.4} {:>10.4} {:>8.2}",
                s.method.label(),
                s.reps_used,
                s.failures,
                s.rejection_rate[0],
                s.rejection_rate[1],
                s.rejection_rate[2],
                s.coverage,
                s.rmspe,
                s.pred_bias,
                s.mean_fit_seconds,
            );
        }
        out
    }
}

/// Sizing and repetition for the inversion benchmark.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    /// Target observed sizes; grids are shaped near a 6:5 site-to-time
    /// ratio so that `S*T*(1 - missing)` lands close to each target.
    pub sizes: Vec<usize>,
    pub missing: f64,
    /// Matrices (independent layouts) timed per size.
    pub n_matrices: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            sizes: vec![1000, 3000],
            missing: 0.05,
            n_matrices: 10,
            seed: 20260816,
        }
    }
}

/// One benchmark row: mean seconds per solve for each path at one size.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n_target: usize,
    pub s: usize,
    pub t: usize,
    pub n_obs: usize,
    pub dense_seconds: f64,
    pub ps_seconds: f64,
    pub sep_seconds: f64,
    pub ratio_ps: f64,
    pub ratio_sep: f64,
}

/// CSV for a set of benchmark rows.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("n_target,s,t,n_obs,dense_seconds,ps_seconds,sep_seconds,ratio_ps,ratio_sep\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n_target,
            r.s,
            r.t,
            r.n_obs,
            r.dense_seconds,
            r.ps_seconds,
            r.sep_seconds,
            r.ratio_ps,
            r.ratio_sep,
        );
    }
    out
}

/// Suggested output file name for a benchmark run.
pub fn bench_file_name(config: &str) -> String {
    format!("bench_{config}.csv")
}

fn bench_grid(target: usize, missing: f64) -> (usize, usize) {
    let cells = target as f64 / (1.0 - missing);
    let s = (cells * 1.2).sqrt().round().max(2.0) as usize;
    let t = (cells / s as f64).round().max(2.0) as usize;
    (s, t)
}

fn bench_design(
    theta: &ThetaPS,
    s: usize,
    t: usize,
    missing: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(StDesign, DMatrix<f64>)> {
    let sites: Vec<Site> = (0..s)
        .map(|_| Site::new(rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0))
        .collect();
    let times: Vec<f64> = (1..=t).map(|j| j as f64).collect();
    let n = s * t;
    let n_missing = (missing * n as f64).round() as usize;
    let mut cells: Vec<usize> = (0..n).collect();
    let (hidden, _) = cells.partial_shuffle(rng, n_missing);
    let mut observed = vec![true; n];
    for &c in hidden.iter() {
        observed[c] = false;
    }
    let design = StDesign::new(sites, times, observed)?;
    let rhs = DMatrix::from_fn(design.n_observed(), 1, |_, _| rng.sample(StandardNormal));
    let _ = theta;
    Ok((design, rhs))
}

fn max_rel_diff(a: &FastSolve, b: &FastSolve) -> f64 {
    let scale = b
        .solution
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    let sol = a
        .solution
        .iter()
        .zip(b.solution.iter())
        .fold(0.0f64, |acc, (&x, &y)| acc.max((x - y).abs()))
        / scale;
    let ld = (a.logdet - b.logdet).abs() / b.logdet.abs().max(1.0);
    sol.max(ld)
}

/// Times the dense Cholesky route against both structured routes.
///
/// For every size, the structured solves are first checked against dense
/// solves of the same matrices to 1e-8; timing only starts after that check
/// passes. Timed solves include factorization, exclude covariance assembly,
/// and run on `n_matrices` independent layouts per size. Ratios are dense
/// seconds over structured seconds; the dense reference is timed on the
/// product-sum matrix (its cost depends only on the dimension).
pub fn bench_inversion(theta: &ThetaPS, sep: &ThetaSep, spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    if spec.sizes.is_empty() {
        return Err(Error::empty("no benchmark sizes given"));
    }
    if !(0.0..1.0).contains(&spec.missing) {
        return Err(Error::invalid(format!(
            "missing fraction must be in [0, 1), got {}",
            spec.missing
        )));
    }
    if spec.n_matrices == 0 {
        return Err(Error::invalid("n_matrices must be at least 1"));
    }

    let ps_model = ModelTheta::ProductSum(*theta);
    let sep_model = ModelTheta::Separable(*sep);
    let mut rows = Vec::with_capacity(spec.sizes.len());

    for (si, &target) in spec.sizes.iter().enumerate() {
        let (s, t) = bench_grid(target, spec.missing);

        // Correctness gate on a fresh layout before any timing.
        {
            let mut rng = rep_rng(spec.seed, (1000 * si) as u64);
            let (design, rhs) = bench_design(theta, s, t, spec.missing, &mut rng)?;
            for (model, label) in [(&ps_model, "product-sum"), (&sep_model, "separable")] {
                let fast = solve_observed(model, &design, &rhs)?;
                let sigma = crate::covariance::dense_cov(model, &design)?;
                let dense = dense_solve(&sigma, &rhs)?;
                let diff = max_rel_diff(&fast, &dense);
                if diff > 1e-8 {
                    return Err(Error::invalid(format!(
                        "{label} path disagrees with dense solve by {diff:e} at size {target}"
                    )));
                }
            }
        }

        let mut n_obs = 0;
        let mut dense_seconds = 0.0;
        let mut ps_seconds = 0.0;
        let mut sep_seconds = 0.0;
        for m in 0..spec.n_matrices {
            let mut rng = rep_rng(spec.seed, (1000 * si + 1 + m) as u64);
            let (design, rhs) = bench_design(theta, s, t, spec.missing, &mut rng)?;
            n_obs = design.n_observed();

            let sigma = crate::covariance::dense_cov(&ps_model, &design)?;
            let start = Instant::now();
            let dense = dense_solve(&sigma, &rhs)?;
            dense_seconds += start.elapsed().as_secs_f64();

            let start = Instant::now();
            let ps = solve_observed(&ps_model, &design, &rhs)?;
            ps_seconds += start.elapsed().as_secs_f64();

            let start = Instant::now();
            let sp = solve_observed(&sep_model, &design, &rhs)?;
            sep_seconds += start.elapsed().as_secs_f64();

            // Keep the optimizer from dropping any solve as dead code.
            if !(dense.logdet.is_finite() && ps.logdet.is_finite() && sp.logdet.is_finite()) {
                return Err(Error::IndefiniteCovariance(
                    "non-finite log determinant during benchmarking".into(),
                ));
            }
        }

        let k = spec.n_matrices as f64;
        let (dense_seconds, ps_seconds, sep_seconds) =
            (dense_seconds / k, ps_seconds / k, sep_seconds / k);
        rows.push(BenchRow {
            n_target: target,
            s,
            t,
            n_obs,
            dense_seconds,
            ps_seconds,
            sep_seconds,
            ratio_ps: dense_seconds / ps_seconds,
            ratio_sep: dense_seconds / sep_seconds,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_configs_have_the_documented_components() {
        let vc2 = variance_config("vc2").unwrap();
        assert_eq!(vc2.theta.variances(), [16.0, 4.0, 16.0, 4.0, 16.0, 4.0]);
        assert_relative_eq!(vc2.theta.spatial.range(), 2.25);
        assert_relative_eq!(vc2.theta.temporal.range(), 9.0);
        let vc4 = variance_config("vc4").unwrap();
        assert_eq!(vc4.theta.variances(), [30.0, 0.1, 20.0, 0.1, 2.0, 7.8]);
        assert!(variance_config("vc5").is_err());
        assert_eq!(all_variance_configs().len(), 4);
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let cfg = variance_config("vc3").unwrap();
        let proto = SimProtocol {
            n_sites: 6,
            n_times: 5,
            n_test: 4,
            reps: 2,
            ..SimProtocol::default()
        };
        let a = simulate_dataset(&cfg.theta, &proto, 0).unwrap();
        let b = simulate_dataset(&cfg.theta, &proto, 0).unwrap();
        assert_eq!(a.y_obs, b.y_obs);
        assert_eq!(a.test_cells, b.test_cells);
        let c = simulate_dataset(&cfg.theta, &proto, 1).unwrap();
        assert_ne!(a.y_obs, c.y_obs);
        assert_eq!(a.design.n_observed(), 26);
        assert_eq!(a.test_cells.len(), 4);
    }

    #[test]
    fn simulated_variance_is_near_the_generating_total() {
        // Monte-Carlo check with a generous band; the exact variance of the
        // sample variance depends on the induced correlation.
        let cfg = variance_config("vc3").unwrap();
        let proto = SimProtocol {
            n_sites: 20,
            n_times: 20,
            n_test: 10,
            ..SimProtocol::default()
        };
        let mut pooled = 0.0;
        let reps = 8;
        for rep in 0..reps {
            let data = simulate_dataset(&cfg.theta, &proto, rep).unwrap();
            let mean = data.y_obs.mean();
            let var = data
                .y_obs
                .iter()
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / (data.y_obs.len() - 1) as f64;
            pooled += var / reps as f64;
        }
        let total = cfg.theta.total_variance();
        assert!(
            pooled > 0.4 * total && pooled < 1.6 * total,
            "pooled sample variance {pooled} vs total {total}"
        );
    }

    #[test]
    fn method_labels_round_trip_and_reject_unknowns() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert_eq!(Method::parse("ps_reml").unwrap(), Method::PsReml);
        assert_eq!(Method::parse("sep-c-wls").unwrap(), Method::SepCwls);
        assert!(Method::parse("krige").is_err());
    }

    #[test]
    fn tiny_study_aggregates_and_reproduces() {
        let cfg = variance_config("vc3").unwrap();
        let proto = SimProtocol {
            n_sites: 6,
            n_times: 5,
            n_test: 4,
            reps: 3,
            seed: 7,
            ..SimProtocol::default()
        };
        let methods = [Method::IreOls];
        let opts = FitOptions::default();
        let a = run_study(&cfg, &proto, &methods, &opts, 1).unwrap();
        assert_eq!(a.summaries.len(), 1);
        let s = &a.summaries[0];
        assert_eq!(s.reps_used, 3);
        assert!(s.coverage >= 0.0 && s.coverage <= 1.0);
        assert!(s.rmspe > 0.0);

        let b = run_study(&cfg, &proto, &methods, &opts, 1).unwrap();
        let strip_timing = |csv: &str| -> String {
            csv.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip_timing(&a.to_csv()), strip_timing(&b.to_csv()));
        assert_eq!(a.file_name(), "study_vc3_7.csv");
        assert!(a.render_text().contains("IRE_OLS"));
    }

    #[test]
    fn benchmark_grids_hit_their_targets() {
        for target in [500, 1000, 3000, 5000] {
            let (s, t) = bench_grid(target, 0.05);
            let n = (s * t) as f64 * 0.95;
            assert!(
                (n - target as f64).abs() / target as f64 <= 0.06,
                "target {target}: {s} x {t} gives {n}"
            );
        }
    }

    #[test]
    fn benchmark_smoke_run_produces_finite_ratios() {
        let cfg = variance_config("vc3").unwrap();
        let sep = ThetaSep::new(
            cfg.theta.total_variance(),
            0.2,
            0.2,
            cfg.theta.spatial,
            cfg.theta.temporal,
        )
        .unwrap();
        let spec = BenchSpec {
            sizes: vec![60],
            missing: 0.05,
            n_matrices: 1,
            seed: 11,
        };
        let rows = bench_inversion(&cfg.theta, &sep, &spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].ratio_ps.is_finite() && rows[0].ratio_ps > 0.0);
        assert!(rows[0].ratio_sep.is_finite() && rows[0].ratio_sep > 0.0);
        assert!(bench_csv(&rows).starts_with("n_target,"));
    }
}

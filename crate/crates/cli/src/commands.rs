//! The five subcommands, sharing one model-selection and fit pipeline.

use crate::config::Config;
use crate::data::{
    build_prediction_grid, load_observations, write_dataset, ColumnManifest, ObservationTable,
};
use crate::error::{CliError, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use stlmm::{
    blup, empirical_sv, fit_cwls, fit_ols, fit_reml, harness, wald_test, BinsSpec, FitOptions,
    FitResult, KernelKind, Method, ModelSpec, ModelTheta, SimProtocol, StDesign, ThetaSep,
};

/// Covariance family named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    ProductSum,
    Separable,
    /// Independent random errors: a pure-nugget baseline.
    Ire,
}

/// Estimation principle named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principle {
    Reml,
    Cwls,
    Ols,
}

/// A validated model/method selection plus estimation options.
pub struct RunConfig {
    pub family: Family,
    pub principle: Principle,
    pub spatial_kernel: KernelKind,
    pub temporal_kernel: KernelKind,
    pub options: FitOptions,
    pub allow_nonconverged: bool,
}

impl RunConfig {
    /// Reads and validates the selection. Only five combinations exist:
    /// product_sum and separable each pair with reml or cwls, and ire
    /// pairs only with ols.
    pub fn from_config(cfg: &Config) -> Result<RunConfig> {
        let family = match cfg.string("model", "product_sum").to_ascii_lowercase().as_str() {
            "product_sum" => Family::ProductSum,
            "separable" => Family::Separable,
            "ire" => Family::Ire,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown model '{other}' (expected product_sum, separable, or ire)"
                )))
            }
        };
        let default_method = if family == Family::Ire { "ols" } else { "reml" };
        let principle = match cfg.string("method", default_method).to_ascii_lowercase().as_str() {
            "reml" => Principle::Reml,
            "cwls" => Principle::Cwls,
            "ols" => Principle::Ols,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown method '{other}' (expected reml, cwls, or ols)"
                )))
            }
        };
        match (family, principle) {
            (Family::Ire, Principle::Ols) => {}
            (Family::Ire, _) => {
                return Err(CliError::Usage(
                    "model ire supports only method = ols".into(),
                ))
            }
            (_, Principle::Ols) => {
                return Err(CliError::Usage(
                    "method ols requires model = ire".into(),
                ))
            }
            _ => {}
        }

        let kernel = |key: &str| -> Result<KernelKind> {
            cfg.string(key, "exponential")
                .parse()
                .map_err(|e: stlmm::Error| CliError::Usage(e.to_string()))
        };

        Ok(RunConfig {
            family,
            principle,
            spatial_kernel: kernel("spatial_kernel")?,
            temporal_kernel: kernel("temporal_kernel")?,
            options: fit_options(cfg)?,
            allow_nonconverged: cfg.bool_or("allow_nonconverged", false)?,
        })
    }

    pub fn label(&self) -> &'static str {
        match (self.family, self.principle) {
            (Family::ProductSum, Principle::Reml) => "PS_REML",
            (Family::ProductSum, Principle::Cwls) => "PS_C-WLS",
            (Family::Separable, Principle::Reml) => "SEP_REML",
            (Family::Separable, Principle::Cwls) => "SEP_C-WLS",
            (Family::Ire, Principle::Ols) => "IRE_OLS",
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn fit(&self, design: &StDesign, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult> {
        let spec = match self.family {
            Family::ProductSum => ModelSpec::ProductSum {
                spatial: self.spatial_kernel,
                temporal: self.temporal_kernel,
            },
            Family::Separable => ModelSpec::Separable {
                spatial: self.spatial_kernel,
                temporal: self.temporal_kernel,
            },
            Family::Ire => return Ok(fit_ols(design, x, y)?),
        };
        let fit = match self.principle {
            Principle::Reml => fit_reml(spec, design, x, y, &self.options)?,
            Principle::Cwls => fit_cwls(spec, design, x, y, &self.options)?,
            Principle::Ols => unreachable!("validated at construction"),
        };
        Ok(fit)
    }

    /// Exits with a numerical failure unless the fit converged or the user
    /// explicitly allowed non-converged fits. Output files are written
    /// before this runs, so a failed run still leaves its diagnostics.
    pub fn convergence_gate(&self, fit: &FitResult) -> Result<()> {
        if fit.converged || self.allow_nonconverged {
            Ok(())
        } else {
            Err(CliError::Numeric(format!(
                "{} did not converge in {} evaluations; raise max_evals or pass --allow-nonconverged",
                self.label(),
                fit.evaluations
            )))
        }
    }
}

fn fit_options(cfg: &Config) -> Result<FitOptions> {
    let mut options = FitOptions::default();
    if let Some(max_evals) = cfg.usize_opt("max_evals")? {
        options.optimizer.max_evals = max_evals;
    }
    options.fgls_passes = cfg.usize_or("fgls_passes", options.fgls_passes)?;
    options.bins = BinsSpec {
        n_spatial_bins: cfg.usize_or("n_spatial_bins", options.bins.n_spatial_bins)?,
        max_spatial: cfg.f64_opt("max_spatial")?,
        max_temporal_lag: cfg.usize_opt("max_temporal_lag")?,
    };
    Ok(options)
}

/// Parameter names and values in the canonical reporting order.
fn param_rows(family: Family, model: &ModelTheta) -> Vec<(&'static str, f64)> {
    match (family, model) {
        (Family::Ire, ModelTheta::ProductSum(t)) => vec![("sigma2_epsilon", t.sigma2_epsilon)],
        (_, ModelTheta::ProductSum(t)) => vec![
            ("sigma2_delta", t.sigma2_delta),
            ("sigma2_gamma", t.sigma2_gamma),
            ("sigma2_tau", t.sigma2_tau),
            ("sigma2_eta", t.sigma2_eta),
            ("sigma2_omega", t.sigma2_omega),
            ("sigma2_epsilon", t.sigma2_epsilon),
            ("phi", t.temporal.range()),
            ("kappa", t.spatial.range()),
        ],
        (_, ModelTheta::Separable(t)) => vec![
            ("sigma2_omega", t.sigma2_omega),
            ("v_s", t.v_s),
            ("v_t", t.v_t),
            ("phi", t.temporal.range()),
            ("kappa", t.spatial.range()),
        ],
    }
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_params_csv(path: &Path, family: Family, model: &ModelTheta) -> Result<()> {
    let mut out = create_file(path)?;
    writeln!(out, "parameter,estimate")?;
    for (name, value) in param_rows(family, model) {
        writeln!(out, "{name},{value}")?;
    }
    Ok(())
}

fn coefficient_names(covariates: &[String]) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend(covariates.iter().cloned());
    names
}

fn write_coefficients_csv(path: &Path, fit: &FitResult, names: &[String]) -> Result<()> {
    let mut out = create_file(path)?;
    writeln!(out, "term,estimate,std_error,statistic,p_value")?;
    for (k, name) in names.iter().enumerate() {
        let w = wald_test(fit, k)?;
        writeln!(
            out,
            "{name},{},{},{},{}",
            w.estimate, w.se, w.statistic, w.p_value
        )?;
    }
    Ok(())
}

fn print_fit_summary(rc: &RunConfig, fit: &FitResult, names: &[String], design: &StDesign) {
    println!(
        "{}: {} sites x {} times, {} observed, {} missing",
        rc.label(),
        design.s(),
        design.t(),
        design.n_observed(),
        design.n_cells() - design.n_observed()
    );
    println!(
        "objective {:.6}, converged {}, {} evaluations, {:.2}s total",
        fit.objective, fit.converged, fit.evaluations, fit.timing.total
    );
    println!("{:<16} {:>14}", "parameter", "estimate");
    for (name, value) in param_rows(rc.family, &fit.model) {
        println!("{name:<16} {value:>14.6}");
    }
    println!(
        "{:<16} {:>12} {:>12} {:>10} {:>10}",
        "term", "estimate", "std_error", "statistic", "p_value"
    );
    for (k, name) in names.iter().enumerate() {
        if let Ok(w) = wald_test(fit, k) {
            println!(
                "{name:<16} {:>12.5} {:>12.5} {:>10.4} {:>10.4}",
                w.estimate, w.se, w.statistic, w.p_value
            );
        }
    }
}

pub fn cmd_fit(cfg: &Config) -> Result<()> {
    let manifest = ColumnManifest::from_config(cfg);
    let data = cfg.require_path("data")?;
    let (table, loaded) = load_observations(&data, &manifest)?;
    let rc = RunConfig::from_config(cfg)?;
    let fit = rc.fit(&loaded.design, &loaded.x, &loaded.y)?;

    let params_path = cfg.path("out_params").unwrap_or_else(|| "params.csv".into());
    let coef_path = cfg
        .path("out_coefficients")
        .unwrap_or_else(|| "coefficients.csv".into());
    write_params_csv(&params_path, rc.family, &fit.model)?;
    let names = coefficient_names(&table.covariate_names);
    write_coefficients_csv(&coef_path, &fit, &names)?;
    print_fit_summary(&rc, &fit, &names, &loaded.design);
    println!(
        "wrote {} and {}",
        params_path.display(),
        coef_path.display()
    );
    rc.convergence_gate(&fit)
}

/// Splits one table into train and target parts by a seeded shuffle.
fn split_rows(table: &ObservationTable, fraction: f64, seed: u64) -> Result<(ObservationTable, ObservationTable)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "split_fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = table.rows.len();
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut test_idx = order[..n_test].to_vec();
    test_idx.sort_unstable();
    let in_test = |i: usize| test_idx.binary_search(&i).is_ok();

    let pick = |keep_test: bool| ObservationTable {
        covariate_names: table.covariate_names.clone(),
        rows: table
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| in_test(*i) == keep_test)
            .map(|(_, r)| r.clone())
            .collect(),
    };
    Ok((pick(false), pick(true)))
}

pub fn cmd_predict(cfg: &Config) -> Result<()> {
    let manifest = ColumnManifest::from_config(cfg);
    let data = cfg.require_path("data")?;
    let rc = RunConfig::from_config(cfg)?;

    let (train, targets) = match cfg.path("test_data") {
        Some(path) => {
            let train = ObservationTable::read(&data, &manifest, true)?;
            let targets = ObservationTable::read(&path, &manifest, false)?;
            (train, targets)
        }
        None => {
            let Some(fraction) = cfg.f64_opt("split_fraction")? else {
                return Err(CliError::Usage(
                    "predict needs either test_data or split_fraction".into(),
                ));
            };
            let table = ObservationTable::read(&data, &manifest, true)?;
            split_rows(&table, fraction, cfg.u64_or("seed", 0)?)?
        }
    };

    let grid = build_prediction_grid(&train, &targets)?;
    let fit = rc.fit(&grid.design, &grid.x_obs, &grid.y_obs)?;
    let result = blup(
        &fit,
        &grid.design,
        &grid.x_obs,
        &grid.y_obs,
        &grid.x_targets,
        &grid.target_cells,
    )?;

    let out_path = cfg.path("out").unwrap_or_else(|| "predictions.csv".into());
    let mut out = create_file(&out_path)?;
    writeln!(out, "site_id,time,prediction,variance,lower,upper")?;
    for j in 0..grid.target_cells.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            grid.target_site_ids[j],
            grid.target_times[j],
            result.predictions[j],
            result.variances[j],
            result.lower[j],
            result.upper[j]
        )?;
    }
    println!(
        "{}: predicted {} cells, wrote {}",
        rc.label(),
        grid.target_cells.len(),
        out_path.display()
    );
    rc.convergence_gate(&fit)
}

pub fn cmd_semivariogram(cfg: &Config) -> Result<()> {
    let manifest = ColumnManifest::from_config(cfg);
    let data = cfg.require_path("data")?;
    let (_, loaded) = load_observations(&data, &manifest)?;
    let rc = RunConfig::from_config(cfg)?;
    let fit = rc.fit(&loaded.design, &loaded.x, &loaded.y)?;

    let residuals = &loaded.y - &loaded.x * &fit.beta;
    let sv = empirical_sv(&loaded.design, &residuals, &rc.options.bins)?;

    let emp_path = cfg
        .path("out_empirical")
        .unwrap_or_else(|| "semivariogram_empirical.csv".into());
    let mut out = create_file(&emp_path)?;
    writeln!(
        out,
        "spatial_lower,spatial_upper,spatial_center,temporal_lag,count,gamma"
    )?;
    for (si, ti, count, gamma) in sv.nonempty() {
        let bin = &sv.spatial_classes[si];
        writeln!(
            out,
            "{},{},{},{},{count},{gamma}",
            bin.lower, bin.upper, bin.center, sv.temporal_lags[ti]
        )?;
    }

    let max_spatial = cfg.f64_or(
        "sv_max_spatial",
        sv.spatial_classes.last().map(|b| b.upper).unwrap_or(1.0),
    )?;
    let n_spatial = cfg.usize_or("sv_n_spatial", 41)?.max(2);
    let max_lag = cfg.usize_or(
        "sv_max_temporal_lag",
        sv.temporal_lags.last().map(|&l| l as usize).unwrap_or(0),
    )?;

    let fit_path = cfg
        .path("out_fitted")
        .unwrap_or_else(|| "semivariogram_fitted.csv".into());
    let mut out = create_file(&fit_path)?;
    writeln!(out, "h_s,h_t,gamma")?;
    for lag in 0..=max_lag {
        for i in 0..n_spatial {
            let h_s = max_spatial * i as f64 / (n_spatial - 1) as f64;
            let gamma = fit.model.theoretical_sv(h_s, lag as f64)?;
            writeln!(out, "{h_s},{lag},{gamma}")?;
        }
    }

    println!(
        "{}: wrote {} empirical classes to {} and a {} x {} fitted surface to {}",
        rc.label(),
        sv.nonempty().count(),
        emp_path.display(),
        n_spatial,
        max_lag + 1,
        fit_path.display()
    );
    rc.convergence_gate(&fit)
}

fn protocol_from_config(cfg: &Config) -> Result<SimProtocol> {
    let d = SimProtocol::default();
    Ok(SimProtocol {
        n_sites: cfg.usize_or("n_sites", d.n_sites)?,
        n_times: cfg.usize_or("n_times", d.n_times)?,
        n_test: cfg.usize_or("n_test", d.n_test)?,
        domain: d.domain,
        reps: cfg.usize_or("reps", d.reps)?,
        seed: cfg.u64_or("seed", d.seed)?,
        beta: d.beta,
    })
}

pub fn cmd_simulate(cfg: &Config) -> Result<()> {
    let name = cfg.string("sim_config", "vc3");
    let vc = harness::variance_config(&name).map_err(|e| CliError::Usage(e.to_string()))?;
    let proto = protocol_from_config(cfg)?;

    if let Some(path) = cfg.path("emit_data") {
        let rep = cfg.usize_or("rep", 0)?;
        let data = stlmm::simulate_dataset(&vc.theta, &proto, rep)?;
        write_dataset(&path, &data)?;
        println!(
            "wrote replicate {rep} of {}: {} training rows ({} sites x {} times, {} held out) to {}",
            vc.name,
            data.design.n_observed(),
            data.design.s(),
            data.design.t(),
            data.test_cells.len(),
            path.display()
        );
        return Ok(());
    }

    let methods: Vec<Method> = match cfg.list("methods") {
        Some(names) => names
            .iter()
            .map(|n| Method::parse(n).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let options = fit_options(cfg)?;
    let workers = cfg.workers()?;
    let result = harness::run_study(&vc, &proto, &methods, &options, workers)?;

    let out_path = cfg
        .path("out")
        .unwrap_or_else(|| PathBuf::from(result.file_name()));
    let mut out = create_file(&out_path)?;
    out.write_all(result.to_csv().as_bytes())?;
    print!("{}", result.render_text());
    println!("wrote {}", out_path.display());
    Ok(())
}

pub fn cmd_bench(cfg: &Config) -> Result<()> {
    let name = cfg.string("sim_config", "vc3");
    let vc = harness::variance_config(&name).map_err(|e| CliError::Usage(e.to_string()))?;
    let default = harness::BenchSpec::default();
    let sizes = match cfg.list("sizes") {
        Some(raw) => raw
            .iter()
            .map(|s| {
                s.parse::<usize>().map_err(|_| {
                    CliError::Usage(format!("sizes: cannot parse '{s}' as a count"))
                })
            })
            .collect::<Result<_>>()?,
        None => default.sizes.clone(),
    };
    let spec = harness::BenchSpec {
        sizes,
        missing: cfg.f64_or("missing", default.missing)?,
        n_matrices: cfg.usize_or("n_matrices", default.n_matrices)?,
        seed: cfg.u64_or("seed", default.seed)?,
    };
    let sep = ThetaSep::new(
        vc.theta.total_variance(),
        0.2,
        0.2,
        vc.theta.spatial,
        vc.theta.temporal,
    )?;
    let rows = harness::bench_inversion(&vc.theta, &sep, &spec)?;

    let out_path = cfg
        .path("out")
        .unwrap_or_else(|| PathBuf::from(harness::bench_file_name(&vc.name)));
    let mut out = create_file(&out_path)?;
    out.write_all(harness::bench_csv(&rows).as_bytes())?;

    println!(
        "{:>8} {:>5} {:>5} {:>7} {:>12} {:>12} {:>12} {:>9} {:>9}",
        "n_target", "s", "t", "n_obs", "dense_sec", "ps_sec", "sep_sec", "ratio_ps", "ratio_sep"
    );
    for r in &rows {
        println!(
            "{:>8} {:>5} {:>5} {:>7} {:>12.4} {:>12.4} {:>12.4} {:>9.2} {:>9.2}",
            r.n_target,
            r.s,
            r.t,
            r.n_obs,
            r.dense_seconds,
            r.ps_seconds,
            r.sep_seconds,
            r.ratio_ps,
            r.ratio_sep
        );
    }
    println!("wrote {}", out_path.display());
    Ok(())
}

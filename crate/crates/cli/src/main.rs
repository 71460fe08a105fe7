//! `stlmm`: spatio-temporal linear mixed models from the command line.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use stlmm_cli::commands;
use stlmm_cli::config::Config;
use stlmm_cli::error::Result;

#[derive(Parser)]
#[command(
    name = "stlmm",
    version,
    about = "Fit, predict, and benchmark spatio-temporal linear mixed models",
    after_help = "Every flag has a config-file twin (flat `key = value` lines); \
flags win over the file. Exit codes: 0 success, 2 usage error, 3 data error, \
4 numerical failure."
)]
struct Cli {
    /// Flat `key = value` configuration file read before any flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the data-driven commands (fit, predict, semivariogram).
#[derive(Args, Default)]
struct ModelFlags {
    /// Training data CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Covariance family: product_sum, separable, or ire.
    #[arg(long)]
    model: Option<String>,
    /// Estimation method: reml, cwls, or ols.
    #[arg(long)]
    method: Option<String>,
    /// Spatial kernel: exponential, spherical, or gaussian.
    #[arg(long)]
    spatial_kernel: Option<String>,
    /// Temporal kernel: exponential, spherical, or gaussian.
    #[arg(long)]
    temporal_kernel: Option<String>,
    /// Column holding the site label.
    #[arg(long)]
    site_col: Option<String>,
    /// Column holding the east-west coordinate in km.
    #[arg(long)]
    x_col: Option<String>,
    /// Column holding the north-south coordinate in km.
    #[arg(long)]
    y_col: Option<String>,
    /// Column holding the time (number or ISO date).
    #[arg(long)]
    time_col: Option<String>,
    /// Column holding the response.
    #[arg(long)]
    response_col: Option<String>,
    /// Comma-separated covariate columns (default: every other column).
    #[arg(long)]
    covariate_cols: Option<String>,
    /// Positive-distance spatial bins for the empirical semivariogram.
    #[arg(long)]
    n_spatial_bins: Option<usize>,
    /// Upper edge of the last spatial bin in km.
    #[arg(long)]
    max_spatial: Option<f64>,
    /// Largest temporal lag kept in the empirical semivariogram.
    #[arg(long)]
    max_temporal_lag: Option<usize>,
    /// Optimizer evaluation budget per run.
    #[arg(long)]
    max_evals: Option<usize>,
    /// Feasible-GLS passes for the cwls method.
    #[arg(long)]
    fgls_passes: Option<usize>,
    /// Exit 0 even when the optimizer did not converge.
    #[arg(long)]
    allow_nonconverged: bool,
}

impl ModelFlags {
    fn apply(&self, cfg: &mut Config) {
        cfg.set_opt("data", self.data.as_ref().map(|p| p.display().to_string()));
        cfg.set_opt("model", self.model.clone());
        cfg.set_opt("method", self.method.clone());
        cfg.set_opt("spatial_kernel", self.spatial_kernel.clone());
        cfg.set_opt("temporal_kernel", self.temporal_kernel.clone());
        cfg.set_opt("site_col", self.site_col.clone());
        cfg.set_opt("x_col", self.x_col.clone());
        cfg.set_opt("y_col", self.y_col.clone());
        cfg.set_opt("time_col", self.time_col.clone());
        cfg.set_opt("response_col", self.response_col.clone());
        cfg.set_opt("covariate_cols", self.covariate_cols.clone());
        cfg.set_opt("n_spatial_bins", self.n_spatial_bins.map(|v| v.to_string()));
        cfg.set_opt("max_spatial", self.max_spatial.map(|v| v.to_string()));
        cfg.set_opt(
            "max_temporal_lag",
            self.max_temporal_lag.map(|v| v.to_string()),
        );
        cfg.set_opt("max_evals", self.max_evals.map(|v| v.to_string()));
        cfg.set_opt("fgls_passes", self.fgls_passes.map(|v| v.to_string()));
        if self.allow_nonconverged {
            cfg.set("allow_nonconverged", "true");
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write parameter and coefficient CSVs.
    Fit {
        #[command(flatten)]
        model: ModelFlags,
        /// Output CSV for covariance parameters (default params.csv).
        #[arg(long)]
        out_params: Option<PathBuf>,
        /// Output CSV for coefficients (default coefficients.csv).
        #[arg(long)]
        out_coefficients: Option<PathBuf>,
    },
    /// Fit, then predict held-out cells with 95% intervals.
    Predict {
        #[command(flatten)]
        model: ModelFlags,
        /// Target cells CSV (same columns, response optional).
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// Hold out this fraction of rows as targets instead.
        #[arg(long)]
        split_fraction: Option<f64>,
        /// Seed for the split shuffle.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV (default predictions.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit, then write the empirical and fitted semivariogram tables.
    Semivariogram {
        #[command(flatten)]
        model: ModelFlags,
        /// Output CSV for the empirical table.
        #[arg(long)]
        out_empirical: Option<PathBuf>,
        /// Output CSV for the fitted surface.
        #[arg(long)]
        out_fitted: Option<PathBuf>,
        /// Spatial grid points in the fitted surface.
        #[arg(long)]
        sv_n_spatial: Option<usize>,
        /// Largest spatial lag in the fitted surface.
        #[arg(long)]
        sv_max_spatial: Option<f64>,
        /// Largest temporal lag in the fitted surface.
        #[arg(long)]
        sv_max_temporal_lag: Option<usize>,
    },
    /// Run a simulation study, or emit one simulated dataset.
    Simulate {
        /// Generating model: vc1, vc2, vc3, or vc4.
        #[arg(long)]
        sim_config: Option<String>,
        /// Replicates in the study.
        #[arg(long)]
        reps: Option<usize>,
        /// Root seed; each replicate draws an independent stream.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated methods (default: all five).
        #[arg(long)]
        methods: Option<String>,
        /// Worker threads (default: STLMM_WORKERS or 1).
        #[arg(long)]
        workers: Option<usize>,
        /// Sites per replicate.
        #[arg(long)]
        n_sites: Option<usize>,
        /// Time points per replicate.
        #[arg(long)]
        n_times: Option<usize>,
        /// Held-out cells per replicate.
        #[arg(long)]
        n_test: Option<usize>,
        /// Optimizer evaluation budget per fit.
        #[arg(long)]
        max_evals: Option<usize>,
        /// Write one replicate as a CSV dataset instead of running a study.
        #[arg(long)]
        emit_data: Option<PathBuf>,
        /// Which replicate to emit.
        #[arg(long)]
        rep: Option<usize>,
        /// Output CSV for the study table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time dense versus structured covariance solves.
    Bench {
        /// Generating model: vc1, vc2, vc3, or vc4.
        #[arg(long)]
        sim_config: Option<String>,
        /// Comma-separated target observation counts.
        #[arg(long)]
        sizes: Option<String>,
        /// Fraction of grid cells left unobserved.
        #[arg(long)]
        missing: Option<f64>,
        /// Independent layouts timed per size.
        #[arg(long)]
        n_matrices: Option<usize>,
        /// Seed for layouts and right-hand sides.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Fit {
            model,
            out_params,
            out_coefficients,
        } => {
            model.apply(&mut cfg);
            cfg.set_opt(
                "out_params",
                out_params.as_ref().map(|p| p.display().to_string()),
            );
            cfg.set_opt(
                "out_coefficients",
                out_coefficients.as_ref().map(|p| p.display().to_string()),
            );
            commands::cmd_fit(&cfg)
        }
        Command::Predict {
            model,
            test_data,
            split_fraction,
            seed,
            out,
        } => {
            model.apply(&mut cfg);
            cfg.set_opt(
                "test_data",
                test_data.as_ref().map(|p| p.display().to_string()),
            );
            cfg.set_opt("split_fraction", split_fraction.map(|v| v.to_string()));
            cfg.set_opt("seed", seed.map(|v| v.to_string()));
            cfg.set_opt("out", out.as_ref().map(|p| p.display().to_string()));
            commands::cmd_predict(&cfg)
        }
        Command::Semivariogram {
            model,
            out_empirical,
            out_fitted,
            sv_n_spatial,
            sv_max_spatial,
            sv_max_temporal_lag,
        } => {
            model.apply(&mut cfg);
            cfg.set_opt(
                "out_empirical",
                out_empirical.as_ref().map(|p| p.display().to_string()),
            );
            cfg.set_opt(
                "out_fitted",
                out_fitted.as_ref().map(|p| p.display().to_string()),
            );
            cfg.set_opt("sv_n_spatial", sv_n_spatial.map(|v| v.to_string()));
            cfg.set_opt("sv_max_spatial", sv_max_spatial.map(|v| v.to_string()));
            cfg.set_opt(
                "sv_max_temporal_lag",
                sv_max_temporal_lag.map(|v| v.to_string()),
            );
            commands::cmd_semivariogram(&cfg)
        }
        Command::Simulate {
            sim_config,
            reps,
            seed,
            methods,
            workers,
            n_sites,
            n_times,
            n_test,
            max_evals,
            emit_data,
            rep,
            out,
        } => {
            cfg.set_opt("sim_config", sim_config.clone());
            cfg.set_opt("reps", reps.map(|v| v.to_string()));
            cfg.set_opt("seed", seed.map(|v| v.to_string()));
            cfg.set_opt("methods", methods.clone());
            cfg.set_opt("workers", workers.map(|v| v.to_string()));
            cfg.set_opt("n_sites", n_sites.map(|v| v.to_string()));
            cfg.set_opt("n_times", n_times.map(|v| v.to_string()));
            cfg.set_opt("n_test", n_test.map(|v| v.to_string()));
            cfg.set_opt("max_evals", max_evals.map(|v| v.to_string()));
            cfg.set_opt(
                "emit_data",
                emit_data.as_ref().map(|p| p.display().to_string()),
            );
            cfg.set_opt("rep", rep.map(|v| v.to_string()));
            cfg.set_opt("out", out.as_ref().map(|p| p.display().to_string()));
            commands::cmd_simulate(&cfg)
        }
        Command::Bench {
            sim_config,
            sizes,
            missing,
            n_matrices,
            seed,
            out,
        } => {
            cfg.set_opt("sim_config", sim_config.clone());
            cfg.set_opt("sizes", sizes.clone());
            cfg.set_opt("missing", missing.map(|v| v.to_string()));
            cfg.set_opt("n_matrices", n_matrices.map(|v| v.to_string()));
            cfg.set_opt("seed", seed.map(|v| v.to_string()));
            cfg.set_opt("out", out.as_ref().map(|p| p.display().to_string()));
            commands::cmd_bench(&cfg)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fou_core::clark_ocone::EtaRoute;

use crate::commands::{self, CliError, Context, Outcome};
use crate::config::{read_config_file, EstimatorChoice, Format, Overrides, RunConfig, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "fou", version, about = "Fractional Ornstein-Uhlenbeck path-space toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Hurst parameter in (0.5, 1)
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Mean-reversion rate (0 gives fBm)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of grid cells on [0, 1]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Monte Carlo sample size
    #[arg(long)]
    pub paths: Option<usize>,
    /// Master seed (default: $FOU_SEED, then 42)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Functional label, or `all`
    #[arg(long)]
    pub functional: Option<String>,
    /// Direction label, or `all`
    #[arg(long)]
    pub direction: Option<String>,
    /// Path dimension
    #[arg(long)]
    pub dim: Option<usize>,
    /// Report destination (stdout when absent)
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Flat key=value file; flags take precedence over it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Omit the timestamp field so reruns are byte-identical
    #[arg(long)]
    pub no_timestamp: bool,
    /// Worker thread cap
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            hurst: self.hurst,
            alpha: self.alpha,
            steps: self.steps,
            paths: self.paths,
            seed: self.seed,
            functional: self.functional.clone(),
            direction: self.direction.clone(),
            output_path: self.output.clone(),
            format: self.format,
            dim: self.dim,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RouteArg {
    Discrete,
    Regularized,
    PointwiseKernel,
}

impl From<RouteArg> for EtaRoute {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Discrete => EtaRoute::Discrete,
            RouteArg::Regularized => EtaRoute::Regularized,
            RouteArg::PointwiseKernel => EtaRoute::PointwiseKernel,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate Brownian, fBm and fOU paths (CSV by default)
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write one CSV per path into the --output directory
        #[arg(long)]
        per_path_files: bool,
    },
    /// Write the discretized kernel matrix
    KernelDump {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo check of the integration-by-parts formula
    VerifyIbp {
        #[command(flatten)]
        common: Common,
    },
    /// Residual variance of the martingale representation
    VerifyClarkOcone {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorChoice>,
        /// Polynomial degree of the regression basis
        #[arg(long)]
        basis_degree: Option<usize>,
        /// Construction of P (default: pointwise-kernel at alpha = 0, regularized otherwise)
        #[arg(long, value_enum)]
        route: Option<RouteArg>,
        /// Largest residual variance ratio counted as a pass
        #[arg(long, default_value_t = 0.10)]
        max_ratio: f64,
    },
    /// Log-Sobolev constants for one (H, alpha) or the standard lattice
    LsiConstant {
        #[command(flatten)]
        common: Common,
        /// H in {0.6, 0.75, 0.9} times alpha in {0, 0.5, 1}
        #[arg(long)]
        lattice: bool,
        /// Lattice density for the empirical C1 fit
        #[arg(long, default_value_t = 200)]
        c1_density: usize,
    },
    /// Monte Carlo check of the log-Sobolev inequality
    LsiCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        c1_density: usize,
        /// Paths for the pathwise intermediate bounds
        #[arg(long, default_value_t = 100)]
        bound_paths: usize,
    },
    /// Cheap invariants of every module
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Simulate { common, .. }
            | Self::KernelDump { common }
            | Self::VerifyIbp { common }
            | Self::VerifyClarkOcone { common, .. }
            | Self::LsiConstant { common, .. }
            | Self::LsiCheck { common, .. }
            | Self::Selftest { common } => common,
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Self::Simulate { .. } | Self::KernelDump { .. } => Format::Csv,
            _ => Format::Json,
        }
    }
}

fn resolve(cmd: &Command) -> Result<RunConfig, CliError> {
    let common = cmd.common();
    let mut flags = common.overrides();
    if let Command::VerifyClarkOcone { estimator, basis_degree, .. } = cmd {
        flags.estimator = *estimator;
        flags.basis_degree = *basis_degree;
    }
    let file = match &common.config {
        Some(p) => read_config_file(p)?,
        None => Overrides::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    Ok(RunConfig::resolve(flags.over(file), env.as_deref(), cmd.default_format())?)
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let common = cmd.common();
    let ctx = Context {
        timestamp: (!common.no_timestamp).then(crate::report::unix_timestamp),
    };
    match cmd {
        Command::Simulate { per_path_files, .. } => {
            let dir = if *per_path_files {
                let out = cfg.output_path.as_ref().ok_or_else(|| {
                    CliError::Usage(crate::config::UsageError(
                        "--per-path-files needs --output <directory>".into(),
                    ))
                })?;
                Some(PathBuf::from(out))
            } else {
                None
            };
            if let Some(d) = dir {
                // the index report goes to stdout
                let mut cfg = cfg.clone();
                cfg.format = Format::Json;
                return commands::simulate(&cfg, ctx, Some(&d));
            }
            commands::simulate(cfg, ctx, None)
        }
        Command::KernelDump { .. } => commands::kernel_dump(cfg, ctx),
        Command::VerifyIbp { .. } => commands::verify_ibp(cfg, ctx),
        Command::VerifyClarkOcone { route, max_ratio, .. } => {
            commands::verify_clark_ocone(cfg, ctx, route.map(Into::into), *max_ratio)
        }
        Command::LsiConstant { lattice, c1_density, .. } => commands::lsi_constant(cfg, ctx, *lattice, *c1_density),
        Command::LsiCheck { c1_density, bound_paths, .. } => {
            commands::lsi_check_cmd(cfg, ctx, *c1_density, *bound_paths)
        }
        Command::Selftest { .. } => commands::selftest(cfg, ctx),
    }
}

fn is_per_path(cmd: &Command) -> bool {
    matches!(cmd, Command::Simulate { per_path_files: true, .. })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 pass, 1 statistical failure, 2 usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(k) = cli.command.common().threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let outcome = resolve(&cli.command).and_then(|cfg| {
        let out = execute(&cli.command, &cfg)?;
        match &cfg.output_path {
            Some(p) if !is_per_path(&cli.command) => std::fs::write(p, &out.text)?,
            _ => std::io::stdout().write_all(out.text.as_bytes())?,
        }
        Ok(out)
    });
    match outcome {
        Ok(o) if o.passed => 0,
        Ok(_) => {
            eprintln!("one or more statistical checks failed");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

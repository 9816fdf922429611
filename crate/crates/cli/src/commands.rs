//! Subcommand bodies. Each returns the encoded report and whether every
//! statistical check in it passed.

use std::path::Path;

use fou_core::clark_ocone::{
    gradient_is_constant, map_j_to_h, representation_check, EtaRoute, Estimator,
};
use fou_core::girsanov::{girsanov_density, ibp_suite, j_from_h};
use fou_core::grid::{make_grid, sample_bm_increments, RngSpec};
use fou_core::kernel::{compute_c2, eval_kernel, kernel_matrix, DiscreteKernel, HurstParam};
use fou_core::lsi::{intermediate_bounds, lsi_check, lsi_constants, lsi_constants_for, plugin_entropy};
use fou_core::malliavin::{directional_derivative, CylindricalFunctional, Direction, FUNCTIONAL_LABELS};
use fou_core::fracops::{apply_k, apply_k_inverse_matrix};
use fou_core::simulate::{simulate_batch, simulate_bundle, ModelParams, PathBundle};
use fou_core::FouError;
use serde::Serialize;
use serde_json::Value;

use crate::config::{EstimatorChoice, Format, RunConfig, UsageError};
use crate::report::{rows_to_csv, rows_to_json, to_row, with_config, Row};

#[derive(Debug)]
pub enum CliError {
    Usage(UsageError),
    Core(FouError),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(e) => write!(f, "{e}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        Self::Usage(e)
    }
}

impl From<FouError> for CliError {
    fn from(e: FouError) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl CliError {
    /// 2 for anything the caller can fix by changing the invocation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Core(
                FouError::Domain(_)
                | FouError::Configuration(_)
                | FouError::UnknownLabel { .. }
                | FouError::InvalidGrid(_)
                | FouError::InsufficientSamples { .. }
                | FouError::Alignment { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type CmdResult = Result<Outcome, CliError>;

/// Encoded report plus pass flag.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

/// Shared per-invocation options outside the run configuration.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub timestamp: Option<u64>,
}

fn encode(cfg: &RunConfig, ctx: Context, rows: Vec<Row>, passed: bool) -> Outcome {
    let rows: Vec<Row> = rows.into_iter().map(|r| with_config(cfg, r, ctx.timestamp)).collect();
    let text = match cfg.format {
        Format::Json => rows_to_json(&rows),
        Format::Csv => rows_to_csv(&rows),
    };
    Outcome { text, passed }
}

fn hurst(cfg: &RunConfig) -> Result<HurstParam, CliError> {
    Ok(HurstParam::new(cfg.hurst)?)
}

fn params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    Ok(ModelParams::with_alpha(hurst(cfg)?, cfg.alpha, cfg.dim)?)
}

fn kernel(cfg: &RunConfig) -> Result<DiscreteKernel, CliError> {
    Ok(kernel_matrix(hurst(cfg)?, &make_grid(cfg.steps)?))
}

fn rng(cfg: &RunConfig) -> RngSpec {
    RngSpec::new(cfg.seed, 0)
}

fn functionals(cfg: &RunConfig) -> Result<Vec<CylindricalFunctional>, CliError> {
    cfg.functional_labels()
        .into_iter()
        .map(|l| Ok(CylindricalFunctional::shipped(l, cfg.dim)?))
        .collect()
}

/// `# key=value ...` line carrying the run configuration for CSV data files.
fn csv_preamble(cfg: &RunConfig, ctx: Context) -> String {
    let mut parts: Vec<String> = to_row(cfg)
        .into_iter()
        .filter(|(_, v)| !v.is_null())
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect();
    if let Some(ts) = ctx.timestamp {
        parts.push(format!("timestamp={ts}"));
    }
    format!("# {}\n", parts.join(" "))
}

fn path_columns(dim: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for name in ["bm", "fbm", "fou"] {
        cols.extend((1..=dim).map(|d| format!("{name}_{d}")));
    }
    cols.join(",")
}

fn path_rows(b: &PathBundle, prefix: Option<usize>, out: &mut String) {
    let grid = b.bm.grid();
    for k in 0..=grid.n_steps() {
        if let Some(id) = prefix {
            out.push_str(&id.to_string());
            out.push(',');
        }
        out.push_str(&grid.time(k).to_string());
        for p in [&b.bm, &b.fbm, &b.fou] {
            for v in p.at(k) {
                out.push(',');
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
}

/// Simulated paths. With `per_path_dir`, writes one CSV per path into that
/// directory and returns an index report instead.
pub fn simulate(cfg: &RunConfig, ctx: Context, per_path_dir: Option<&Path>) -> CmdResult {
    let p = params(cfg)?;
    let k = kernel(cfg)?;
    let paths = simulate_batch(&p, &k, cfg.paths, rng(cfg))?;
    if let Some(dir) = per_path_dir {
        std::fs::create_dir_all(dir)?;
        let width = (cfg.paths - 1).to_string().len();
        for (i, b) in paths.iter().enumerate() {
            let mut text = csv_preamble(cfg, ctx);
            text.push_str(&path_columns(cfg.dim));
            text.push('\n');
            path_rows(b, None, &mut text);
            std::fs::write(dir.join(format!("path_{i:0width$}.csv")), text)?;
        }
        let mut row = Row::new();
        row.insert("files_written".into(), Value::from(cfg.paths));
        row.insert("directory".into(), Value::from(dir.display().to_string()));
        return Ok(encode(cfg, ctx, vec![row], true));
    }
    let text = match cfg.format {
        Format::Csv => {
            let mut text = csv_preamble(cfg, ctx);
            text.push_str("path_id,");
            text.push_str(&path_columns(cfg.dim));
            text.push('\n');
            for (i, b) in paths.iter().enumerate() {
                path_rows(b, Some(i), &mut text);
            }
            text
        }
        Format::Json => {
            let mut row = with_config(cfg, Row::new(), ctx.timestamp);
            row.insert("t".into(), Value::from(k.grid().points()));
            let items: Vec<Value> = paths
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let mut m = Row::new();
                    m.insert("path_id".into(), Value::from(i));
                    m.insert("bm".into(), Value::from(b.bm.values().to_vec()));
                    m.insert("fbm".into(), Value::from(b.fbm.values().to_vec()));
                    m.insert("fou".into(), Value::from(b.fou.values().to_vec()));
                    Value::Object(m)
                })
                .collect();
            row.insert("paths".into(), Value::Array(items));
            rows_to_json(&[row])
        }
    };
    Ok(Outcome { text, passed: true })
}

pub fn kernel_dump(cfg: &RunConfig, ctx: Context) -> CmdResult {
    let k = kernel(cfg)?;
    let text = match cfg.format {
        Format::Csv => k.to_csv(),
        Format::Json => {
            let n = k.n();
            let matrix: Vec<Value> = (0..n)
                .map(|i| Value::from((0..n).map(|j| k.entry(i, j)).collect::<Vec<f64>>()))
                .collect();
            let mut row = with_config(cfg, Row::new(), ctx.timestamp);
            row.insert("matrix".into(), Value::Array(matrix));
            rows_to_json(&[row])
        }
    };
    Ok(Outcome { text, passed: true })
}

#[derive(Serialize)]
struct IbpRow<'a> {
    functional: &'a str,
    direction: &'a str,
    lhs: f64,
    rhs: f64,
    se_lhs: f64,
    se_rhs: f64,
    se: f64,
    z: f64,
    n_paths: usize,
    passed: bool,
}

pub const IBP_Z_MAX: f64 = 3.0;

pub fn verify_ibp(cfg: &RunConfig, ctx: Context) -> CmdResult {
    let p = params(cfg)?;
    let k = kernel(cfg)?;
    let fs = functionals(cfg)?;
    let dirs = cfg
        .direction_labels()
        .into_iter()
        .map(Direction::from_label)
        .collect::<fou_core::Result<Vec<_>>>()?;
    let reports = ibp_suite(&fs, &dirs, &p, &k, cfg.paths, rng(cfg))?;
    let passed = reports.iter().all(|r| r.passes(IBP_Z_MAX));
    let rows = reports
        .iter()
        .map(|r| {
            to_row(&IbpRow {
                functional: &r.functional,
                direction: &r.direction,
                lhs: r.lhs,
                rhs: r.rhs,
                se_lhs: r.se_lhs,
                se_rhs: r.se_rhs,
                se: r.se_diff,
                z: r.z,
                n_paths: r.n_paths,
                passed: r.passes(IBP_Z_MAX),
            })
        })
        .collect();
    Ok(encode(cfg, ctx, rows, passed))
}

/// Default route: the pointwise kernel at `α = 0`, the regularized `P` otherwise.
pub fn default_route(alpha: f64) -> EtaRoute {
    if alpha == 0.0 {
        EtaRoute::PointwiseKernel
    } else {
        EtaRoute::Regularized
    }
}

pub fn estimator_for(choice: EstimatorChoice, degree: usize, f: &CylindricalFunctional) -> Estimator {
    match choice {
        EstimatorChoice::Exact => Estimator::Exact,
        EstimatorChoice::Regression => Estimator::Regression { degree },
        EstimatorChoice::Auto if gradient_is_constant(f) => Estimator::Exact,
        EstimatorChoice::Auto => Estimator::Regression { degree },
    }
}

pub fn verify_clark_ocone(cfg: &RunConfig, ctx: Context, route: Option<EtaRoute>, max_ratio: f64) -> CmdResult {
    let p = params(cfg)?;
    let k = kernel(cfg)?;
    let route = route.unwrap_or_else(|| default_route(cfg.alpha));
    let mut rows = Vec::new();
    let mut passed = true;
    for f in functionals(cfg)? {
        if gradient_is_constant(&f) && f.grad_at(&vec![0.0; f.times.len() * f.dim]).iter().all(|g| *g == 0.0) {
            // nothing to represent
            continue;
        }
        let est = estimator_for(cfg.estimator, cfg.basis_degree, &f);
        let r = representation_check(&f, &p, &k, cfg.paths, rng(cfg), est, route)?;
        let ok = r.residual_var_ratio <= max_ratio;
        passed &= ok;
        let mut row = to_row(&r);
        row.insert("max_ratio".into(), Value::from(max_ratio));
        row.insert("passed".into(), Value::from(ok));
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(FouError::DegenerateFunctional(format!(
            "'{}' is constant; there is no integrand to check",
            cfg.functional
        ))
        .into());
    }
    Ok(encode(cfg, ctx, rows, passed))
}

pub const LATTICE_HURST: [f64; 3] = [0.6, 0.75, 0.9];
pub const LATTICE_ALPHA: [f64; 3] = [0.0, 0.5, 1.0];

pub fn lsi_constant(cfg: &RunConfig, ctx: Context, lattice: bool, c1_density: usize) -> CmdResult {
    let points: Vec<(f64, f64)> = if lattice {
        LATTICE_HURST
            .iter()
            .flat_map(|h| LATTICE_ALPHA.iter().map(move |a| (*h, *a)))
            .collect()
    } else {
        vec![(cfg.hurst, cfg.alpha)]
    };
    let mut rows = Vec::new();
    let mut cached: Option<(f64, f64, f64, f64)> = None;
    for (hv, alpha) in points {
        let h = HurstParam::new(hv)?;
        // C1 and C2 depend on H only
        let (c1, c2, ch) = match cached {
            Some((ch_h, c1, c2, ch)) if ch_h == hv => (c1, c2, ch),
            _ => {
                let k = lsi_constants_for(h, 0.0, c1_density)?;
                cached = Some((hv, k.c1, k.c2, k.c_h));
                (k.c1, k.c2, k.c_h)
            }
        };
        let mut row = to_row(&lsi_constants(h, alpha, c1, c2, ch));
        row.insert("c1_density".into(), Value::from(c1_density));
        rows.push(row);
    }
    Ok(encode(cfg, ctx, rows, true))
}

pub fn lsi_check_cmd(cfg: &RunConfig, ctx: Context, c1_density: usize, bound_paths: usize) -> CmdResult {
    let p = params(cfg)?;
    let k = kernel(cfg)?;
    let consts = lsi_constants_for(hurst(cfg)?, cfg.alpha, c1_density)?;
    let mut rows = Vec::new();
    let mut passed = true;
    for f in functionals(cfg)? {
        let r = lsi_check(&f, &p, &k, &consts, cfg.paths, rng(cfg))?;
        let b = intermediate_bounds(&f, &p, &k, &consts, bound_paths, rng(cfg))?;
        let ok = r.holds && b.holds;
        passed &= ok;
        let mut row = to_row(&r);
        row.insert("c".into(), Value::from(consts.c));
        row.insert("c_hat".into(), Value::from(consts.c_hat));
        row.insert("bound_paths".into(), Value::from(b.n_paths));
        row.insert("max_ratio_p".into(), Value::from(b.max_ratio_p));
        row.insert("max_ratio_kp".into(), Value::from(b.max_ratio_kp));
        row.insert("bounds_hold".into(), Value::from(b.holds));
        row.insert("passed".into(), Value::from(ok));
        rows.push(row);
    }
    Ok(encode(cfg, ctx, rows, passed))
}

/// Named cheap invariants across all modules.
pub fn selftest_checks() -> Vec<(&'static str, bool)> {
    fn run(f: impl FnOnce() -> Result<bool, FouError>) -> bool {
        f().unwrap_or(false)
    }
    let mut checks = Vec::new();
    checks.push((
        "grid_points",
        run(|| Ok(make_grid(4)?.points() == vec![0.0, 0.25, 0.5, 0.75, 1.0])),
    ));
    checks.push((
        "kernel_self_similarity",
        run(|| {
            let h = HurstParam::new(0.7)?;
            let (a, b) = (eval_kernel(h, 0.8, 0.3)?, eval_kernel(h, 0.4, 0.15)?);
            Ok((a - 2f64.powf(0.2) * b).abs() <= 1e-9 * a)
        }),
    ));
    checks.push((
        "kernel_domain_errors",
        run(|| {
            let h = HurstParam::new(0.7)?;
            Ok(eval_kernel(h, 0.5, 0.0).is_err() && HurstParam::new(0.5).is_err())
        }),
    ));
    let h = HurstParam::new(0.75).expect("valid H");
    let k = kernel_matrix(h, &make_grid(32).expect("valid grid"));
    checks.push((
        "operator_round_trip",
        run(|| {
            let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
            let back = apply_k_inverse_matrix(&k, &apply_k(&k, &x, 1)?, 1)?;
            Ok(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10))
        }),
    ));
    checks.push((
        "fbm_limit_matches_fbm",
        run(|| {
            let p = ModelParams::fbm_limit(h, 1)?;
            let b = simulate_bundle(&p, &k, RngSpec::new(1, 0))?;
            Ok(b.fou.values() == b.fbm.values())
        }),
    ));
    checks.push((
        "constant_functional_zero_derivative",
        run(|| {
            let p = ModelParams::new(h, 1.0, 1)?;
            let b = simulate_bundle(&p, &k, RngSpec::new(2, 0))?;
            let f = CylindricalFunctional::shipped("constant", 1)?;
            let dir = Direction::Cosine.realize(k.grid(), 1, None)?;
            Ok(directional_derivative(&f, &b.fou, &dir, &k)? == 0.0)
        }),
    ));
    checks.push((
        "zero_direction_unit_density",
        run(|| {
            let incr = sample_bm_increments(k.grid(), 1, RngSpec::new(3, 0));
            let j = j_from_h(&vec![0.0; 32], 1, 1.0, &k)?;
            Ok(girsanov_density(&j, &incr, 1, 0.5, k.grid().dt())?.terminal() == 1.0)
        }),
    ));
    checks.push((
        "j_to_h_round_trip",
        run(|| {
            let hv: Vec<f64> = (0..32).map(|i| 1.0 + 0.1 * i as f64).collect();
            let back = map_j_to_h(&j_from_h(&hv, 1, 1.0, &k)?, 1, 1.0, &k)?;
            Ok(back.iter().zip(&hv).all(|(a, b)| (a - b).abs() < 1e-8))
        }),
    ));
    checks.push((
        "lsi_factor_without_drift",
        run(|| {
            let c2 = compute_c2(h)?;
            Ok(lsi_constants(h, 0.0, 0.5, c2, fou_core::kernel::c_h(h)).lsi_factor == 4.0)
        }),
    ));
    checks.push((
        "entropy_of_constant_is_zero",
        run(|| Ok(plugin_entropy(&[1.7; 8])?.entropy == 0.0)),
    ));
    checks.push((
        "entropy_homogeneity",
        run(|| {
            let g: Vec<f64> = (1..20).map(|i| i as f64 * 0.1).collect();
            let a = plugin_entropy(&g)?.entropy;
            let b = plugin_entropy(&g.iter().map(|v| 2.5 * v).collect::<Vec<_>>())?.entropy;
            Ok((b - 2.5 * a).abs() <= 1e-12 * b)
        }),
    ));
    checks.push((
        "shipped_labels_resolve",
        run(|| {
            for l in FUNCTIONAL_LABELS {
                CylindricalFunctional::shipped(l, 2)?;
            }
            Ok(CylindricalFunctional::shipped("cubic", 1).is_err())
        }),
    ));
    checks
}

pub fn selftest(cfg: &RunConfig, ctx: Context) -> CmdResult {
    let checks = selftest_checks();
    let passed = checks.iter().all(|c| c.1);
    let rows = checks
        .into_iter()
        .map(|(name, ok)| {
            let mut r = Row::new();
            r.insert("check".into(), Value::from(name));
            r.insert("passed".into(), Value::from(ok));
            r
        })
        .collect();
    Ok(encode(cfg, ctx, rows, passed))
}

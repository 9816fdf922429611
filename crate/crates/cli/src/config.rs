//! Run configuration: command-line flags over a `key=value` file over
//! defaults, validated once before any work starts.

use std::fmt;
use std::path::Path;

use fou_core::malliavin::{DIRECTION_LABELS, FUNCTIONAL_LABELS};
use serde::Serialize;

pub const DEFAULT_HURST: f64 = 0.75;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_STEPS: usize = 256;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "FOU_SEED";

/// Bad flags, config files or parameter values: exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    fn parse(s: &str) -> Result<Self, UsageError> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(UsageError(format!("unknown format `{s}`; expected json or csv"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    /// Exact for constant-gradient functionals, regression otherwise.
    Auto,
    Exact,
    Regression,
}

impl EstimatorChoice {
    fn parse(s: &str) -> Result<Self, UsageError> {
        match s {
            "auto" => Ok(Self::Auto),
            "exact" => Ok(Self::Exact),
            "regression" => Ok(Self::Regression),
            _ => Err(UsageError(format!("unknown estimator `{s}`; expected auto, exact or regression"))),
        }
    }
}

/// Values that may come from flags or from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub hurst: Option<f64>,
    pub alpha: Option<f64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub functional: Option<String>,
    pub direction: Option<String>,
    pub output_path: Option<String>,
    pub format: Option<Format>,
    pub dim: Option<usize>,
    pub estimator: Option<EstimatorChoice>,
    pub basis_degree: Option<usize>,
}

impl Overrides {
    /// Fields set here win over `other`.
    pub fn over(self, other: Overrides) -> Overrides {
        Overrides {
            hurst: self.hurst.or(other.hurst),
            alpha: self.alpha.or(other.alpha),
            steps: self.steps.or(other.steps),
            paths: self.paths.or(other.paths),
            seed: self.seed.or(other.seed),
            functional: self.functional.or(other.functional),
            direction: self.direction.or(other.direction),
            output_path: self.output_path.or(other.output_path),
            format: self.format.or(other.format),
            dim: self.dim.or(other.dim),
            estimator: self.estimator.or(other.estimator),
            basis_degree: self.basis_degree.or(other.basis_degree),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| UsageError(format!("invalid value `{value}` for `{key}`")))
}

/// Parses a flat `key=value` file. Blank lines and `#` comments are ignored;
/// keys use the report field names (`output` is accepted for `output_path`).
pub fn parse_config_text(text: &str) -> Result<Overrides, UsageError> {
    let mut o = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key.replace('-', "_").as_str() {
            "hurst" => o.hurst = Some(parse_num(key, value)?),
            "alpha" => o.alpha = Some(parse_num(key, value)?),
            "steps" => o.steps = Some(parse_num(key, value)?),
            "paths" => o.paths = Some(parse_num(key, value)?),
            "seed" => o.seed = Some(parse_num(key, value)?),
            "functional" => o.functional = Some(value.to_string()),
            "direction" => o.direction = Some(value.to_string()),
            "output" | "output_path" => o.output_path = Some(value.to_string()),
            "format" => o.format = Some(Format::parse(value)?),
            "dim" => o.dim = Some(parse_num(key, value)?),
            "estimator" => o.estimator = Some(EstimatorChoice::parse(value)?),
            "basis_degree" => o.basis_degree = Some(parse_num(key, value)?),
            _ => {
                return Err(UsageError(format!("config line {}: unknown key `{key}`", lineno + 1)));
            }
        }
    }
    Ok(o)
}

pub fn read_config_file(path: &Path) -> Result<Overrides, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Fully resolved settings, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub hurst: f64,
    pub alpha: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub functional: String,
    pub direction: String,
    pub output_path: Option<String>,
    pub format: Format,
    pub dim: usize,
    pub estimator: EstimatorChoice,
    pub basis_degree: usize,
}

impl RunConfig {
    /// Applies defaults, the `FOU_SEED` value (if any) and validation.
    pub fn resolve(o: Overrides, env_seed: Option<&str>, default_format: Format) -> Result<Self, UsageError> {
        let env_seed = env_seed.map(|s| parse_num::<u64>(SEED_ENV, s.trim())).transpose()?;
        let cfg = RunConfig {
            hurst: o.hurst.unwrap_or(DEFAULT_HURST),
            alpha: o.alpha.unwrap_or(DEFAULT_ALPHA),
            steps: o.steps.unwrap_or(DEFAULT_STEPS),
            paths: o.paths.unwrap_or(DEFAULT_PATHS),
            seed: o.seed.or(env_seed).unwrap_or(DEFAULT_SEED),
            functional: o.functional.unwrap_or_else(|| "linear".into()),
            direction: o.direction.unwrap_or_else(|| "const1".into()),
            output_path: o.output_path,
            format: o.format.unwrap_or(default_format),
            dim: o.dim.unwrap_or(1),
            estimator: o.estimator.unwrap_or(EstimatorChoice::Auto),
            basis_degree: o.basis_degree.unwrap_or(3),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(UsageError(format!("hurst must lie in (0.5, 1), got {}", self.hurst)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(UsageError(format!("alpha must be a finite nonnegative number, got {}", self.alpha)));
        }
        if self.steps < 16 {
            return Err(UsageError(format!("steps must be at least 16, got {}", self.steps)));
        }
        if self.paths < 100 {
            return Err(UsageError(format!("paths must be at least 100, got {}", self.paths)));
        }
        if self.dim == 0 {
            return Err(UsageError("dim must be at least 1".into()));
        }
        if self.functional != "all" && !FUNCTIONAL_LABELS.contains(&self.functional.as_str()) {
            return Err(UsageError(format!(
                "unknown functional `{}`; expected all or one of {}",
                self.functional,
                FUNCTIONAL_LABELS.join(", ")
            )));
        }
        if self.direction != "all" && !DIRECTION_LABELS.contains(&self.direction.as_str()) {
            return Err(UsageError(format!(
                "unknown direction `{}`; expected all or one of {}",
                self.direction,
                DIRECTION_LABELS.join(", ")
            )));
        }
        Ok(())
    }

    /// Selected functional labels (`all` expands to the shipped library).
    pub fn functional_labels(&self) -> Vec<&str> {
        if self.functional == "all" {
            FUNCTIONAL_LABELS.to_vec()
        } else {
            vec![self.functional.as_str()]
        }
    }

    pub fn direction_labels(&self) -> Vec<&str> {
        if self.direction == "all" {
            DIRECTION_LABELS.to_vec()
        } else {
            vec![self.direction.as_str()]
        }
    }
}

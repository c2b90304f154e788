//! JSON config files. `//` and `/* */` comments are allowed, unknown keys are
//! rejected and values are validated while parsing, so errors point at a line.

use std::path::{Path, PathBuf};

use koopman_pe_core::dictionary::DictionarySpec;
use koopman_pe_core::doe::{DesignConfig, Region};
use koopman_pe_core::edmd::{FitOptions, RolloutMode};
use koopman_pe_core::eval::{ErrorMode, ExperimentConfig};
use koopman_pe_core::ode_sim::{LinearField, QuadraticField, Repressilator, RepressilatorParams, SimConfig, VectorField};
use koopman_pe_core::pe_analysis::PeConfig;
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::CliError;

/// Blanks out comments while keeping every newline, so parser positions still
/// match the original file.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_string = false;
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            if c == '\\' {
                if let Some(n) = chars.next() {
                    out.push(n);
                }
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match (c, chars.peek()) {
            ('"', _) => {
                in_string = true;
                out.push(c);
            }
            ('/', Some('/')) => {
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            ('/', Some('*')) => {
                chars.next();
                let mut prev = ' ';
                for n in chars.by_ref() {
                    if n == '\n' {
                        out.push('\n');
                    }
                    if prev == '*' && n == '/' {
                        break;
                    }
                    prev = n;
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// `presets/fig1` resolves to `presets/fig1.json` when only the latter exists.
pub fn resolve_path(path: &Path) -> PathBuf {
    if !path.exists() {
        let with_ext = path.with_extension("json");
        if path.extension().is_none() && with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

const CHECK_FAILED: &str = "check failed: ";

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    let stripped = strip_comments(text);
    let mut de = serde_json::Deserializer::from_str(&stripped);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        match strip_position(&inner).strip_prefix(CHECK_FAILED) {
            // serde_json places these at the end of the enclosing object,
            // so point at the offending key instead
            Some(check) => {
                let line = key_line(&stripped, &field).unwrap_or(inner.line());
                CliError::input(path, format!("line {line}: `{field}`: {check}"))
            }
            None => json_error(path, &inner),
        }
    })?;
    de.end().map_err(|e| json_error(path, &e))?;
    Ok(value)
}

/// serde_json appends " at line L column C"; the position is restated up front.
fn strip_position(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split(" at line ").next().unwrap_or(&msg).to_string()
}

fn json_error(path: &Path, e: &serde_json::Error) -> CliError {
    CliError::input(path, format!("line {}, column {}: {}", e.line(), e.column(), strip_position(e)))
}

/// Line of the last key in a dotted path such as `design.sim`, found by
/// searching for each key after the previous one.
fn key_line(text: &str, field: &str) -> Option<usize> {
    let mut from = 0;
    for key in field.split('.').filter(|k| !k.is_empty() && !k.starts_with('[') && *k != "?") {
        let key = key.split('[').next().unwrap_or(key);
        let needle = format!("\"{key}\"");
        let mut search = from;
        loop {
            let at = search + text[search..].find(&needle)?;
            let after = at + needle.len();
            if text[after..].trim_start().starts_with(':') {
                from = after;
                break;
            }
            search = after;
        }
    }
    (from > 0).then(|| text[..from].matches('\n').count() + 1)
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf), CliError> {
    let resolved = resolve_path(path);
    let text = std::fs::read_to_string(&resolved).map_err(|e| CliError::io(&resolved, e))?;
    Ok((parse(&text, &resolved)?, resolved))
}

pub trait Validate {
    fn check(&self) -> Result<(), String>;
}

/// A config value that has passed [`Validate::check`] during parsing.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Checked<T>(pub T);

impl<'de, T: Deserialize<'de> + Validate> Deserialize<'de> for Checked<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = T::deserialize(d)?;
        v.check().map_err(|m| D::Error::custom(format!("{CHECK_FAILED}{m}")))?;
        Ok(Checked(v))
    }
}

fn core<T>(r: koopman_pe_core::Result<T>) -> Result<(), String> {
    r.map(|_| ()).map_err(|e| e.to_string())
}

impl Validate for SimConfig {
    fn check(&self) -> Result<(), String> {
        core(self.substeps())?;
        core(self.sample_count())
    }
}

impl Validate for PeConfig {
    fn check(&self) -> Result<(), String> {
        core(self.validate())
    }
}

impl Validate for RepressilatorParams {
    fn check(&self) -> Result<(), String> {
        core(self.validate())
    }
}

impl Validate for Region {
    fn check(&self) -> Result<(), String> {
        core(self.validate())
    }
}

impl Validate for FitOptions {
    fn check(&self) -> Result<(), String> {
        if !(self.svd_tol > 0.0 && self.svd_tol < 1.0) {
            return Err("svd_tol must lie in (0, 1)".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err("ridge must be non-negative".into());
        }
        Ok(())
    }
}

impl Validate for DesignConfig {
    fn check(&self) -> Result<(), String> {
        if self.batch == 0 || self.max_iter == 0 || self.order == 0 {
            return Err("batch, max_iter and order must be at least 1".into());
        }
        self.sim.check()?;
        self.pe.check()
    }
}

impl Validate for ExperimentConfig {
    fn check(&self) -> Result<(), String> {
        core(self.validate())
    }
}

/// Dynamical system selected by a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Repressilator {
        #[serde(default)]
        params: RepressilatorParams,
    },
    /// `x' = A x`, rows of `A`.
    Linear { a: Vec<Vec<f64>> },
    /// `x_i' = c x_i^2`.
    Quadratic { dim: usize, coefficient: f64 },
}

impl Validate for SystemSpec {
    fn check(&self) -> Result<(), String> {
        match self {
            SystemSpec::Repressilator { params } => params.check(),
            SystemSpec::Linear { a } => {
                if a.is_empty() || a.iter().any(|r| r.len() != a.len()) {
                    Err("a must be a non-empty square matrix".into())
                } else {
                    Ok(())
                }
            }
            SystemSpec::Quadratic { dim, .. } if *dim == 0 => Err("dim must be at least 1".into()),
            SystemSpec::Quadratic { .. } => Ok(()),
        }
    }
}

pub enum System {
    Repressilator(Repressilator),
    Linear(LinearField),
    Quadratic(QuadraticField),
}

impl SystemSpec {
    pub fn build(&self) -> koopman_pe_core::Result<System> {
        Ok(match self {
            SystemSpec::Repressilator { params } => System::Repressilator(Repressilator::new(*params)?),
            SystemSpec::Linear { a } => {
                let n = a.len();
                System::Linear(LinearField::new(nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]))?)
            }
            SystemSpec::Quadratic { dim, coefficient } => {
                System::Quadratic(QuadraticField { dim: *dim, coefficient: *coefficient })
            }
        })
    }
}

impl VectorField for System {
    fn dim(&self) -> usize {
        match self {
            System::Repressilator(f) => f.dim(),
            System::Linear(f) => f.dim(),
            System::Quadratic(f) => f.dim(),
        }
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match self {
            System::Repressilator(f) => f.eval_into(x, t, out),
            System::Linear(f) => f.eval_into(x, t, out),
            System::Quadratic(f) => f.eval_into(x, t, out),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub system: Checked<SystemSpec>,
    pub initial_conditions: Vec<Vec<f64>>,
    #[serde(default)]
    pub sim: Checked<SimConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    /// Trajectory CSVs, relative to the config file.
    pub trajectories: Vec<PathBuf>,
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub fit: Checked<FitOptions>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictFile {
    pub model: PathBuf,
    /// When set, the model file must have this digest.
    #[serde(default)]
    pub model_sha256: Option<String>,
    /// Predict from the first sample of each truth trajectory over its grid
    /// and report the error.
    #[serde(default)]
    pub truth: Vec<PathBuf>,
    #[serde(default)]
    pub initial_conditions: Vec<Vec<f64>>,
    #[serde(default)]
    pub steps: usize,
    #[serde(default)]
    pub rollout: RolloutMode,
    #[serde(default)]
    pub error_mode: ErrorMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeFile {
    pub signals: Vec<PathBuf>,
    /// Lift the signals first; without it the CSV columns are used as they are.
    #[serde(default)]
    pub dictionary: Option<DictionarySpec>,
    #[serde(default = "one")]
    pub order: usize,
    #[serde(default)]
    pub pe: Checked<PeConfig>,
    #[serde(default = "sixteen")]
    pub rank_curve_points: usize,
}

fn one() -> usize {
    1
}

fn sixteen() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub system: Checked<SystemSpec>,
    pub dictionary: DictionarySpec,
    pub region: Checked<Region>,
    #[serde(default)]
    pub design: Checked<DesignConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub experiment: Checked<ExperimentConfig>,
    /// CSV of training initial conditions (for instance a design output);
    /// overrides sampling from the training region.
    #[serde(default)]
    pub train_ics_csv: Option<PathBuf>,
    #[serde(default)]
    pub test_ics_csv: Option<PathBuf>,
}

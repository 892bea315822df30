//! Run configuration: defaults, `key = value` files and validation.
//!
//! Keys are kebab-case; `_` is accepted in place of `-`. The same names are
//! used for command-line flags, so [`TrainConfig::set`] is the single parser
//! for both sources.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetOptions, FormatOptions, MIN_USER_INTERACTIONS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gyrovector::Curvature;
use crate::model::{InitConfig, Variant};
use crate::objective::LossConfig;
use crate::optimizer::{OptimConfig, OptimizerKind, RescaleMode};

/// Optimizer selection; `Auto` picks RSGD for the hyperbolic variant and SGD otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    #[default]
    Auto,
    Rsgd,
    Sgd,
    Adagrad,
    Adam,
}

impl OptimizerChoice {
    pub fn resolve(self, variant: Variant) -> OptimizerKind {
        match self {
            OptimizerChoice::Auto => OptimizerKind::default_for(variant),
            OptimizerChoice::Rsgd => OptimizerKind::Rsgd,
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
            OptimizerChoice::Adagrad => OptimizerKind::Adagrad,
            OptimizerChoice::Adam => OptimizerKind::Adam,
        }
    }
}

impl FromStr for OptimizerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(OptimizerChoice::Auto);
        }
        Ok(match s.parse::<OptimizerKind>()? {
            OptimizerKind::Rsgd => OptimizerChoice::Rsgd,
            OptimizerKind::Sgd => OptimizerChoice::Sgd,
            OptimizerKind::Adagrad => OptimizerChoice::Adagrad,
            OptimizerKind::Adam => OptimizerChoice::Adam,
        })
    }
}

impl fmt::Display for OptimizerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerChoice::Auto => "auto",
            OptimizerChoice::Rsgd => "rsgd",
            OptimizerChoice::Sgd => "sgd",
            OptimizerChoice::Adagrad => "adagrad",
            OptimizerChoice::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainConfig {
    pub variant: Variant,
    pub c: f64,
    pub dim: usize,
    pub margin: f64,
    pub gamma: f64,
    pub lr: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub k: usize,
    pub n_negatives: usize,
    pub seed: u64,
    pub min_interactions: usize,
    /// 0 disables k-core filtering.
    pub k_core: usize,
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub optimizer: OptimizerChoice,
    pub rescale: RescaleMode,
    pub grad_clip: Option<f64>,
    /// Per-coordinate drop probability; 0 disables dropout.
    pub dropout: f64,
    pub distortion_epsilon: f64,
    pub delimiter: String,
    pub header: bool,
    pub timestamp_column: Option<usize>,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Hyper,
            c: 1.0,
            dim: 64,
            margin: 0.5,
            gamma: 0.75,
            lr: 0.01,
            beta: 0.01,
            batch_size: 512,
            epochs: 100,
            eval_every: 50,
            k: 10,
            n_negatives: 100,
            seed: 0,
            min_interactions: MIN_USER_INTERACTIONS,
            k_core: 0,
            input: None,
            output_dir: None,
            optimizer: OptimizerChoice::Auto,
            rescale: RescaleMode::Unit,
            grad_clip: None,
            dropout: 0.0,
            distortion_epsilon: 1e-9,
            delimiter: "\t".into(),
            header: false,
            timestamp_column: None,
            parallel: true,
        }
    }
}

/// Every key accepted by [`TrainConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "variant",
    "c",
    "dim",
    "margin",
    "gamma",
    "lr",
    "beta",
    "batch-size",
    "epochs",
    "eval-every",
    "k",
    "n-negatives",
    "seed",
    "min-interactions",
    "k-core",
    "input",
    "output-dir",
    "optimizer",
    "rescale",
    "grad-clip",
    "dropout",
    "distortion-epsilon",
    "delimiter",
    "header",
    "timestamp-column",
    "parallel",
];

fn normalize_key(key: &str) -> String {
    let k = key.trim().trim_start_matches("--").replace('_', "-").to_ascii_lowercase();
    match k.as_str() {
        "m" => "margin".into(),
        "learning-rate" | "eta" => "lr".into(),
        "curvature" => "c".into(),
        "d" => "dim".into(),
        "b" => "batch-size".into(),
        "negatives" => "n-negatives".into(),
        _ => k,
    }
}

fn parse_num<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::config(field, format!("invalid value `{value}`")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(field, format!("invalid boolean `{value}`"))),
    }
}

fn parse_optional<T: FromStr>(field: &str, value: &str) -> Result<Option<T>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "none" | "off" => Ok(None),
        _ => parse_num(field, value).map(Some),
    }
}

fn with_field(field: &str, e: Error) -> Error {
    match e {
        Error::Config { msg, .. } => Error::config(field, msg),
        other => Error::config(field, other.to_string()),
    }
}

impl TrainConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let f = key.as_str();
        let v = value.trim();
        match f {
            "variant" => self.variant = v.parse().map_err(|e| with_field(f, e))?,
            "c" => self.c = parse_num(f, v)?,
            "dim" => self.dim = parse_num(f, v)?,
            "margin" => self.margin = parse_num(f, v)?,
            "gamma" => self.gamma = parse_num(f, v)?,
            "lr" => self.lr = parse_num(f, v)?,
            "beta" => self.beta = parse_num(f, v)?,
            "batch-size" => self.batch_size = parse_num(f, v)?,
            "epochs" => self.epochs = parse_num(f, v)?,
            "eval-every" => self.eval_every = parse_num(f, v)?,
            "k" => self.k = parse_num(f, v)?,
            "n-negatives" => self.n_negatives = parse_num(f, v)?,
            "seed" => self.seed = parse_num(f, v)?,
            "min-interactions" => self.min_interactions = parse_num(f, v)?,
            "k-core" => self.k_core = parse_num(f, v)?,
            "input" => self.input = Some(PathBuf::from(v)),
            "output-dir" => self.output_dir = Some(PathBuf::from(v)),
            "optimizer" => self.optimizer = v.parse().map_err(|e| with_field(f, e))?,
            "rescale" => self.rescale = v.parse().map_err(|e| with_field(f, e))?,
            "grad-clip" => self.grad_clip = parse_optional(f, v)?,
            "dropout" => self.dropout = parse_num(f, v)?,
            "distortion-epsilon" => self.distortion_epsilon = parse_num(f, v)?,
            "delimiter" => self.delimiter = FormatOptions::parse_delimiter(value)?,
            "header" => self.header = parse_bool(f, v)?,
            "timestamp-column" => self.timestamp_column = parse_optional(f, v)?,
            "parallel" => self.parallel = parse_bool(f, v)?,
            _ => return Err(Error::config(f, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document. Blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    "config",
                    format!("line {}: expected `key = value`", idx + 1),
                ));
            };
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(value);
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Checks every field range. Paths are checked by the runner.
    pub fn validate(&self) -> Result<()> {
        let curvature = Curvature::new(self.c).map_err(|e| with_field("c", e))?;
        if self.variant == Variant::HyperTs && curvature.is_euclidean() {
            return Err(Error::config("c", "the hyperts variant needs c > 0"));
        }
        let positive_int = [
            ("dim", self.dim),
            ("batch-size", self.batch_size),
            ("epochs", self.epochs),
            ("eval-every", self.eval_every),
            ("k", self.k),
            ("n-negatives", self.n_negatives),
        ];
        for (name, v) in positive_int {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config("beta", format!("must be > 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("must be in [0, 1), got {}", self.dropout)));
        }
        if self.min_interactions < MIN_USER_INTERACTIONS {
            return Err(Error::config(
                "min-interactions",
                format!("must be >= {MIN_USER_INTERACTIONS}"),
            ));
        }
        if self.delimiter.is_empty() {
            return Err(Error::config("delimiter", "must not be empty"));
        }
        self.loss_config()?.validate()?;
        self.optim_config()?.validate(self.variant)?;
        Ok(())
    }

    pub fn curvature(&self) -> Result<Curvature> {
        Curvature::new(self.c).map_err(|e| with_field("c", e))
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        Ok(LossConfig {
            margin: self.margin,
            gamma: self.gamma,
            curvature: self.curvature()?,
            distortion_epsilon: self.distortion_epsilon,
            variant: self.variant,
        })
    }

    pub fn optim_config(&self) -> Result<OptimConfig> {
        Ok(OptimConfig {
            learning_rate: self.lr,
            curvature: self.curvature()?,
            grad_clip: self.grad_clip,
            rescale: self.rescale,
            kind: self.optimizer.resolve(self.variant),
        })
    }

    pub fn init_config(&self) -> InitConfig {
        InitConfig {
            beta: self.beta,
            dim: self.dim,
            seed: self.seed,
        }
    }

    pub fn format_options(&self) -> FormatOptions {
        FormatOptions {
            delimiter: self.delimiter.clone(),
            has_header: self.header,
            timestamp_column: self.timestamp_column,
        }
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            min_interactions: self.min_interactions,
            k_core: (self.k_core > 0).then_some(self.k_core),
        }
    }

    pub fn execution(&self) -> Execution {
        Execution::from_flag(self.parallel)
    }
}

/// Hyperparameter that a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    C,
    Gamma,
    Margin,
    Lr,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::C => "c",
            SweepParam::Gamma => "gamma",
            SweepParam::Margin => "margin",
            SweepParam::Lr => "lr",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::C => cfg.c = value,
            SweepParam::Gamma => cfg.gamma = value,
            SweepParam::Margin => cfg.margin = value,
            SweepParam::Lr => cfg.lr = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize_key(s).as_str() {
            "c" => Ok(SweepParam::C),
            "gamma" => Ok(SweepParam::Gamma),
            "margin" => Ok(SweepParam::Margin),
            "lr" => Ok(SweepParam::Lr),
            other => Err(Error::config(
                "sweep",
                format!("cannot sweep `{other}` (expected c, gamma, margin or lr)"),
            )),
        }
    }
}

/// Grid over one or two hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<(SweepParam, Vec<f64>)>,
    pub repeats: usize,
}

impl SweepSpec {
    /// Parses axes of the form `gamma=0,0.5,1`.
    pub fn parse(axes: &[String], repeats: usize) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("sweep", "no parameters to sweep"));
        }
        if axes.len() > 2 {
            return Err(Error::config("sweep", "at most two parameters may be swept"));
        }
        if repeats == 0 {
            return Err(Error::config("repeats", "must be >= 1"));
        }
        let mut out: Vec<(SweepParam, Vec<f64>)> = Vec::new();
        for axis in axes {
            let Some((name, values)) = axis.split_once('=') else {
                return Err(Error::config("sweep", format!("expected `name=v1,v2,...`, got `{axis}`")));
            };
            let param: SweepParam = name.parse()?;
            if out.iter().any(|(p, _)| *p == param) {
                return Err(Error::config("sweep", format!("`{}` listed twice", param.name())));
            }
            let values = values
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_num::<f64>(param.name(), s))
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                return Err(Error::config(param.name(), "no values given"));
            }
            out.push((param, values));
        }
        Ok(SweepSpec { axes: out, repeats })
    }

    /// Grid points in row-major order (first axis outermost).
    pub fn points(&self) -> Vec<Vec<(SweepParam, f64)>> {
        let mut points: Vec<Vec<(SweepParam, f64)>> = vec![Vec::new()];
        for (param, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((*param, v));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

//! Projected Riemannian SGD and the alternative update rules.
//!
//! A step converts each Euclidean row gradient into an update direction,
//! applies the first-order retraction `θ - η h` and projects the row back into
//! the admissible region. The three new rows are computed before any is
//! written, so a non-finite update leaves the store untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{from_tangent, to_tangent};
use crate::data::Triplet;
use crate::error::{Error, Result};
use crate::gyrovector::{check_in_ball, clip_norm_in_place, norm, norm_sq, project_in_place, Curvature};
use crate::model::{EmbeddingStore, Variant};
use crate::objective::TripletGrad;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Riemannian rescale then additive retraction (hyperbolic variant only).
    Rsgd,
    /// Plain gradient step.
    Sgd,
    Adagrad,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Rsgd => "rsgd",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
        }
    }

    /// Default rule for a variant.
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Hyper => OptimizerKind::Rsgd,
            Variant::HyperTs | Variant::Cml => OptimizerKind::Sgd,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsgd" => Ok(OptimizerKind::Rsgd),
            "sgd" => Ok(OptimizerKind::Sgd),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config("optimizer", format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Metric tensor used to turn Euclidean into Riemannian gradients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RescaleMode {
    /// `(1 - |θ|²)²/4`, the unit-ball tensor. Falls back to the curvature
    /// form when `c < 1`, where rows may leave the unit ball.
    #[default]
    Unit,
    /// `(1 - c|θ|²)²/4`.
    Curvature,
}

impl FromStr for RescaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unit" => Ok(RescaleMode::Unit),
            "curvature" | "generalized" => Ok(RescaleMode::Curvature),
            other => Err(Error::config("rescale", format!("unknown rescale mode `{other}`"))),
        }
    }
}

impl fmt::Display for RescaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RescaleMode::Unit => "unit",
            RescaleMode::Curvature => "curvature",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub curvature: Curvature,
    pub grad_clip: Option<f64>,
    pub rescale: RescaleMode,
    pub kind: OptimizerKind,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.01,
            curvature: Curvature::UNIT,
            grad_clip: None,
            rescale: RescaleMode::Unit,
            kind: OptimizerKind::Rsgd,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self, variant: Variant) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(
                "lr",
                format!("must be > 0, got {}", self.learning_rate),
            ));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(Error::config("grad-clip", format!("must be > 0, got {clip}")));
            }
        }
        if self.kind == OptimizerKind::Rsgd && variant != Variant::Hyper {
            return Err(Error::config(
                "optimizer",
                format!("rsgd applies to the hyper variant only, not {variant}"),
            ));
        }
        Ok(())
    }

    fn effective_rescale(&self) -> RescaleMode {
        if self.curvature.value() < 1.0 {
            RescaleMode::Curvature
        } else {
            self.rescale
        }
    }
}

/// `((1 - |θ|²)²/4) · g`, the inverse unit-ball metric applied to `g`.
pub fn riemannian_rescale(theta: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: g.len(),
        });
    }
    let f = rescale_factor(theta, Curvature::UNIT)?;
    Ok(g.iter().map(|v| f * v).collect())
}

/// `(1 - c|θ|²)²/4`; errors when `θ` is outside the ball for `c`.
pub fn rescale_factor(theta: &[f64], c: Curvature) -> Result<f64> {
    check_in_ball(theta, c)?;
    let a = 1.0 - c.value() * norm_sq(theta);
    Ok(a * a / 4.0)
}

/// Stateless RSGD / SGD update of the three rows of `t`.
pub fn rsgd_step(store: &mut EmbeddingStore, t: Triplet, grads: &TripletGrad, cfg: &OptimConfig) -> Result<()> {
    apply_step(store, t, grads, cfg)
}

/// Applies `grads` with the stateless rule for `cfg.kind` (adaptive kinds
/// degrade to a plain step; use [`Optimizer`] to keep their state).
pub fn apply_step(store: &mut EmbeddingStore, t: Triplet, grads: &TripletGrad, cfg: &OptimConfig) -> Result<()> {
    Optimizer::step_rows(store, t, grads, cfg, &mut |_, _, g| g.to_vec())
}

/// Row identity inside an [`EmbeddingStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    User(usize),
    Item(usize),
}

#[derive(Debug, Clone)]
struct Table {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: Vec<u64>,
}

impl Table {
    fn new(rows: usize, dim: usize) -> Self {
        Table {
            first: vec![0.0; rows * dim],
            second: vec![0.0; rows * dim],
            steps: vec![0; rows],
        }
    }
}

/// Stateful optimizer: per-row accumulators for Adam and AdaGrad.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimConfig,
    dim: usize,
    users: Table,
    items: Table,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig, store: &EmbeddingStore) -> Result<Self> {
        cfg.validate(store.variant())?;
        let adaptive = matches!(cfg.kind, OptimizerKind::Adam | OptimizerKind::Adagrad);
        let (nu, ni) = if adaptive {
            (store.n_users(), store.n_items())
        } else {
            (0, 0)
        };
        Ok(Optimizer {
            cfg,
            dim: store.dim(),
            users: Table::new(nu, store.dim()),
            items: Table::new(ni, store.dim()),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn step(&mut self, store: &mut EmbeddingStore, t: Triplet, grads: &TripletGrad) -> Result<()> {
        let cfg = self.cfg;
        let dim = self.dim;
        let (users, items) = (&mut self.users, &mut self.items);
        let mut adapt = |row: Row, commit: bool, h: &[f64]| -> Vec<f64> {
            let (table, idx) = match row {
                Row::User(i) => (&mut *users, i),
                Row::Item(i) => (&mut *items, i),
            };
            adapt_direction(cfg.kind, table, idx, dim, h, commit)
        };
        Self::step_rows(store, t, grads, &cfg, &mut |row, commit, h| adapt(row, commit, h))
    }

    /// Shared update path. `direction(row, commit, h)` maps the (rescaled)
    /// gradient to the step direction; it is called once per row with
    /// `commit = false` and, if every row is finite, again with `commit = true`.
    fn step_rows(
        store: &mut EmbeddingStore,
        t: Triplet,
        grads: &TripletGrad,
        cfg: &OptimConfig,
        direction: &mut dyn FnMut(Row, bool, &[f64]) -> Vec<f64>,
    ) -> Result<()> {
        let variant = store.variant();
        let c = store.curvature();
        let rows = [
            (Row::User(t.user as usize), &grads.g_user),
            (Row::Item(t.pos_item as usize), &grads.g_pos),
            (Row::Item(t.neg_item as usize), &grads.g_neg),
        ];
        let mut updated: Vec<(Row, Vec<f64>, Vec<f64>)> = Vec::with_capacity(3);
        for (row, g) in rows {
            let current = match row {
                Row::User(i) => store.user(i)?,
                Row::Item(i) => store.item(i)?,
            };
            if g.len() != current.len() {
                return Err(Error::DimensionMismatch {
                    expected: current.len(),
                    got: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient for triplet {t:?}")));
            }
            let mut g = g.to_vec();
            if let Some(clip) = cfg.grad_clip {
                clip_norm_in_place(&mut g, clip);
            }
            let h = match (variant, cfg.kind) {
                (Variant::Hyper, OptimizerKind::Sgd) => g,
                (Variant::Hyper, _) => {
                    let f = match cfg.effective_rescale() {
                        RescaleMode::Unit => rescale_factor(current, Curvature::UNIT)?,
                        RescaleMode::Curvature => rescale_factor(current, c)?,
                    };
                    g.iter().map(|v| f * v).collect()
                }
                _ => g,
            };
            let step = direction(row, false, &h);
            let eta = cfg.learning_rate;
            let new_row = match variant {
                Variant::Hyper => {
                    let mut r: Vec<f64> = current.iter().zip(&step).map(|(x, s)| x - eta * s).collect();
                    if r.iter().all(|v| v.is_finite()) {
                        project_in_place(&mut r, c);
                    }
                    r
                }
                Variant::Cml => {
                    let mut r: Vec<f64> = current.iter().zip(&step).map(|(x, s)| x - eta * s).collect();
                    if r.iter().all(|v| v.is_finite()) {
                        clip_norm_in_place(&mut r, 1.0);
                    }
                    r
                }
                Variant::HyperTs => {
                    let a = to_tangent(current, c)?;
                    let moved: Vec<f64> = a.iter().zip(&step).map(|(x, s)| x - eta * s).collect();
                    if moved.iter().all(|v| v.is_finite()) {
                        from_tangent(&moved, c)?
                    } else {
                        moved
                    }
                }
            };
            if new_row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("update for triplet {t:?}")));
            }
            updated.push((row, h, new_row));
        }
        for (row, h, new_row) in updated {
            direction(row, true, &h);
            let dst = match row {
                Row::User(i) => store.user_mut(i)?,
                Row::Item(i) => store.item_mut(i)?,
            };
            dst.copy_from_slice(&new_row);
        }
        Ok(())
    }
}

fn adapt_direction(kind: OptimizerKind, table: &mut Table, idx: usize, dim: usize, h: &[f64], commit: bool) -> Vec<f64> {
    let span = idx * dim..(idx + 1) * dim;
    match kind {
        OptimizerKind::Rsgd | OptimizerKind::Sgd => h.to_vec(),
        OptimizerKind::Adagrad => {
            let acc = &mut table.second[span];
            let out = h
                .iter()
                .zip(acc.iter())
                .map(|(g, a)| g / ((a + g * g).sqrt() + ADAGRAD_EPS))
                .collect();
            if commit {
                for (a, g) in acc.iter_mut().zip(h) {
                    *a += g * g;
                }
            }
            out
        }
        OptimizerKind::Adam => {
            let step = table.steps[idx] + 1;
            let b1t = 1.0 - ADAM_BETA1.powi(step as i32);
            let b2t = 1.0 - ADAM_BETA2.powi(step as i32);
            let mut out = Vec::with_capacity(dim);
            let (m, v) = (&mut table.first[span.clone()], &mut table.second[span]);
            for k in 0..dim {
                let mk = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * h[k];
                let vk = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * h[k] * h[k];
                out.push((mk / b1t) / ((vk / b2t).sqrt() + ADAM_EPS));
                if commit {
                    m[k] = mk;
                    v[k] = vk;
                }
            }
            if commit {
                table.steps[idx] = step;
            }
            out
        }
    }
}

/// Euclidean norm of a gradient row, for logging.
pub fn grad_norm(g: &TripletGrad) -> f64 {
    (norm(&g.g_user).powi(2) + norm(&g.g_pos).powi(2) + norm(&g.g_neg).powi(2)).sqrt()
}

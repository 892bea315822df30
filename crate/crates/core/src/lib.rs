//! Hyperbolic metric learning for implicit-feedback recommendation.
//!
//! Users and items live in a Poincaré ball of curvature scale `c`. Training
//! minimizes a squared-distance triplet hinge plus a weighted distortion
//! penalty with projected Riemannian SGD. A Euclidean metric-learning baseline
//! and a tangent-space variant share the same storage, objective and
//! evaluation code.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gyrovector;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod runner;
pub mod synthetic;

pub use config::{OptimizerChoice, SweepParam, SweepSpec, TrainConfig};
pub use data::{Dataset, Interaction, Split, Triplet};
pub use error::{Error, Result};
pub use eval::EvalResult;
pub use exec::Execution;
pub use gyrovector::Curvature;
pub use model::{EmbeddingStore, Variant};
pub use objective::{LossConfig, TripletGrad};
pub use optimizer::{OptimConfig, OptimizerKind};

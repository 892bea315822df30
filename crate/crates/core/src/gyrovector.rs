//! Poincaré ball kernel: Möbius gyrovector operations, exponential and
//! logarithmic maps, and the induced distances.
//!
//! Points are plain `&[f64]` slices so that rows of an embedding matrix can be
//! passed without copying. Every public operation validates its inputs
//! (finite components, strict ball membership) and reports violations through
//! [`Error`]. For `c = 0` each operation falls back to its Euclidean limit.
//!
//! ```text
//! x ⊕_c y = ((1 + 2c<x,y> + c|y|²) x + (1 - c|x|²) y) / (1 + 2c<x,y> + c²|x|²|y|²)
//! d_c(x, y) = (2/√c) atanh(√c |(-x) ⊕_c y|)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary margin kept by [`project_to_ball`].
pub const BALL_EPS: f64 = 1e-5;

/// Largest argument passed to `atanh`.
const ATANH_MAX: f64 = 1.0 - 1e-15;

/// Denominators smaller than this are reported as degenerate.
const MIN_DENOM: f64 = 1e-15;

/// Curvature scale `c ≥ 0`. The ball has radius `1/√c`; `c = 0` is Euclidean space.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub const UNIT: Curvature = Curvature(1.0);
    pub const EUCLIDEAN: Curvature = Curvature(0.0);

    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidInput(format!(
                "curvature must be finite and non-negative, got {c}"
            )));
        }
        Ok(Curvature(c))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_euclidean(self) -> bool {
        self.0 == 0.0
    }

    /// Largest norm a projected point may have: `(1 - BALL_EPS)/√c`.
    pub fn max_norm(self) -> f64 {
        if self.is_euclidean() {
            f64::INFINITY
        } else {
            (1.0 - BALL_EPS) / self.0.sqrt()
        }
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        Curvature::new(c)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Euclidean distance `|x - y|`.
#[inline]
pub fn euclidean_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn check_same_dim(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Validates that `x` is finite and strictly inside the ball for `c`.
pub fn check_in_ball(x: &[f64], c: Curvature) -> Result<()> {
    check_finite(x, "point")?;
    if c.is_euclidean() {
        return Ok(());
    }
    let value = c.value() * norm_sq(x);
    if value >= 1.0 {
        return Err(Error::OutOfBall { value });
    }
    Ok(())
}

#[inline]
fn clamped_atanh(t: f64) -> f64 {
    t.clamp(0.0, ATANH_MAX).atanh()
}

/// Unchecked Möbius addition; callers validate inputs.
pub(crate) fn mobius_add_raw(x: &[f64], y: &[f64], c: f64) -> Result<Vec<f64>> {
    if c == 0.0 {
        return Ok(x.iter().zip(y).map(|(a, b)| a + b).collect());
    }
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let denom = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    if denom.abs() < MIN_DENOM {
        return Err(Error::Degenerate(format!(
            "Möbius addition denominator {denom:e}"
        )));
    }
    let sx = (1.0 + 2.0 * c * xy + c * y2) / denom;
    let sy = (1.0 - c * x2) / denom;
    Ok(x.iter().zip(y).map(|(a, b)| sx * a + sy * b).collect())
}

/// `|(-x) ⊕_c y|` without allocating.
fn mobius_diff_norm(x: &[f64], y: &[f64], c: f64) -> Result<f64> {
    let xy = -dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let denom = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    if denom.abs() < MIN_DENOM {
        return Err(Error::Degenerate(format!(
            "Möbius addition denominator {denom:e}"
        )));
    }
    let sx = -(1.0 + 2.0 * c * xy + c * y2) / denom;
    let sy = (1.0 - c * x2) / denom;
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| {
            let v = sx * a + sy * b;
            v * v
        })
        .sum::<f64>()
        .sqrt())
}

/// Möbius addition `x ⊕_c y`.
pub fn mobius_add(x: &[f64], y: &[f64], c: Curvature) -> Result<Vec<f64>> {
    check_same_dim(x, y)?;
    check_in_ball(x, c)?;
    check_in_ball(y, c)?;
    mobius_add_raw(x, y, c.value())
}

/// Möbius subtraction `x ⊖_c y = x ⊕_c (-y)`.
pub fn mobius_sub(x: &[f64], y: &[f64], c: Curvature) -> Result<Vec<f64>> {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    mobius_add(x, &neg, c)
}

/// Möbius scalar multiplication `r ⊗_c x`. At `c = 0` this is `r·x`.
pub fn mobius_scalar_mul(r: f64, x: &[f64], c: Curvature) -> Result<Vec<f64>> {
    if !r.is_finite() {
        return Err(Error::InvalidInput(format!("scalar must be finite, got {r}")));
    }
    check_in_ball(x, c)?;
    if c.is_euclidean() {
        return Ok(x.iter().map(|v| r * v).collect());
    }
    let n = norm(x);
    if n == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let sc = c.value().sqrt();
    let scale = (r * clamped_atanh(sc * n)).tanh() / (sc * n);
    Ok(x.iter().map(|v| scale * v).collect())
}

/// Conformal factor `λ_x^c = 2/(1 - c|x|²)`.
pub fn conformal_factor(x: &[f64], c: Curvature) -> Result<f64> {
    check_in_ball(x, c)?;
    Ok(2.0 / (1.0 - c.value() * norm_sq(x)))
}

/// Exponential map `exp_x^c(v)`; `exp_x(0) = x`.
pub fn exp_map(x: &[f64], v: &[f64], c: Curvature) -> Result<Vec<f64>> {
    check_same_dim(x, v)?;
    check_in_ball(x, c)?;
    check_finite(v, "tangent vector")?;
    let vn = norm(v);
    if vn == 0.0 {
        return Ok(x.to_vec());
    }
    if c.is_euclidean() {
        return Ok(x.iter().zip(v).map(|(a, b)| a + b).collect());
    }
    let cv = c.value();
    let sc = cv.sqrt();
    let lambda = 2.0 / (1.0 - cv * norm_sq(x));
    let scale = (sc * lambda * vn / 2.0).tanh() / (sc * vn);
    let step: Vec<f64> = v.iter().map(|a| scale * a).collect();
    mobius_add_raw(x, &step, cv)
}

/// Logarithmic map `log_x^c(y)`; returns the zero vector when `y` coincides with `x`.
pub fn log_map(x: &[f64], y: &[f64], c: Curvature) -> Result<Vec<f64>> {
    check_same_dim(x, y)?;
    check_in_ball(x, c)?;
    check_in_ball(y, c)?;
    if c.is_euclidean() {
        return Ok(y.iter().zip(x).map(|(a, b)| a - b).collect());
    }
    let cv = c.value();
    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let w = mobius_add_raw(&neg_x, y, cv)?;
    let wn = norm(&w);
    if wn < MIN_DENOM {
        return Ok(vec![0.0; x.len()]);
    }
    let sc = cv.sqrt();
    let lambda = 2.0 / (1.0 - cv * norm_sq(x));
    let scale = 2.0 / (lambda * sc) * clamped_atanh(sc * wn) / wn;
    Ok(w.iter().map(|a| scale * a).collect())
}

/// Generalized gyrovector distance `d_c(x, y)`. At `c = 0` returns `2|x - y|`.
pub fn dist_c(x: &[f64], y: &[f64], c: Curvature) -> Result<f64> {
    check_same_dim(x, y)?;
    check_in_ball(x, c)?;
    check_in_ball(y, c)?;
    dist_c_raw(x, y, c.value())
}

pub(crate) fn dist_c_raw(x: &[f64], y: &[f64], c: f64) -> Result<f64> {
    if c == 0.0 {
        return Ok(2.0 * euclidean_dist(x, y));
    }
    let sc = c.sqrt();
    let wn = mobius_diff_norm(x, y, c)?;
    Ok(2.0 / sc * clamped_atanh(sc * wn))
}

/// Poincaré distance on the unit ball,
/// `acosh(1 + 2|x - y|² / ((1 - |x|²)(1 - |y|²)))`.
pub fn dist_poincare(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_dim(x, y)?;
    check_in_ball(x, Curvature::UNIT)?;
    check_in_ball(y, Curvature::UNIT)?;
    let delta = 2.0 * norm_sq_diff(x, y) / ((1.0 - norm_sq(x)) * (1.0 - norm_sq(y)));
    Ok(acosh1p(delta))
}

#[inline]
pub(crate) fn norm_sq_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `acosh(1 + δ)` without forming `1 + δ`.
#[inline]
pub(crate) fn acosh1p(delta: f64) -> f64 {
    (delta + (delta * (delta + 2.0)).sqrt()).ln_1p()
}

/// Rescales `x` onto the ball of radius `(1 - BALL_EPS)/√c` if it lies outside it.
pub fn project_to_ball(x: &[f64], c: Curvature) -> Result<Vec<f64>> {
    check_finite(x, "point to project")?;
    let mut out = x.to_vec();
    project_in_place(&mut out, c);
    Ok(out)
}

/// In-place projection for already-validated finite rows.
pub(crate) fn project_in_place(x: &mut [f64], c: Curvature) {
    let max = c.max_norm();
    clip_norm_in_place(x, max);
}

/// Rescales `x` so that `|x| ≤ max`, guaranteeing the bound after rounding.
pub(crate) fn clip_norm_in_place(x: &mut [f64], max: f64) {
    if !max.is_finite() {
        return;
    }
    let n = norm(x);
    if n < max {
        return;
    }
    let mut scale = max / n;
    loop {
        let scaled: f64 = x.iter().map(|v| (v * scale) * (v * scale)).sum::<f64>().sqrt();
        if scaled <= max {
            break;
        }
        scale *= 1.0 - f64::EPSILON;
    }
    for v in x.iter_mut() {
        *v *= scale;
    }
}

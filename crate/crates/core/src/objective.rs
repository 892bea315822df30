//! Triplet objective: squared-distance pull-push hinge plus the distortion
//! penalty, with closed-form Euclidean gradients.
//!
//! For `c > 0` the gradients differentiate the equivalent closed form
//! `d_c(x, y) = acosh(1 + δ)/√c` with `δ = 2c|x - y|² / ((1 - c|x|²)(1 - c|y|²))`.
//! Non-differentiable points (hinge at zero, `|·|` at zero) get subgradient 0.

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::gyrovector::{acosh1p, check_in_ball, dist_c_raw, euclidean_dist, norm_sq, Curvature};
use crate::model::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    pub gamma: f64,
    pub curvature: Curvature,
    pub distortion_epsilon: f64,
    pub variant: Variant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin: 0.5,
            gamma: 0.75,
            curvature: Curvature::UNIT,
            distortion_epsilon: 1e-9,
            variant: Variant::Hyper,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(Error::config("margin", format!("must be > 0, got {}", self.margin)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if !(self.distortion_epsilon.is_finite() && self.distortion_epsilon > 0.0) {
            return Err(Error::config("distortion-epsilon", "must be > 0"));
        }
        if self.variant == Variant::HyperTs && self.curvature.is_euclidean() {
            return Err(Error::config("c", "the tangent-space variant needs c > 0"));
        }
        Ok(())
    }
}

/// Euclidean gradients of the total loss for one triplet.
///
/// For [`Variant::HyperTs`] the gradients are taken with respect to the
/// tangent coordinates at the origin, which is where that variant steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub g_user: Vec<f64>,
    pub g_pos: Vec<f64>,
    pub g_neg: Vec<f64>,
}

impl TripletGrad {
    pub fn zeros(dim: usize) -> Self {
        TripletGrad {
            g_user: vec![0.0; dim],
            g_pos: vec![0.0; dim],
            g_neg: vec![0.0; dim],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.g_user
            .iter()
            .chain(&self.g_pos)
            .chain(&self.g_neg)
            .all(|v| *v == 0.0)
    }

    fn check_finite(&self) -> Result<()> {
        for (name, g) in [("user", &self.g_user), ("positive", &self.g_pos), ("negative", &self.g_neg)] {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} gradient")));
            }
        }
        Ok(())
    }
}

/// Loss value split into its two terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub pull_push: f64,
    pub distortion: f64,
    pub total: f64,
}

fn validate_points(u: &[f64], vp: &[f64], vn: &[f64], cfg: &LossConfig) -> Result<()> {
    let d = u.len();
    for x in [vp, vn] {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    let c = match cfg.variant {
        Variant::Cml => Curvature::EUCLIDEAN,
        _ => cfg.curvature,
    };
    check_in_ball(u, c)?;
    check_in_ball(vp, c)?;
    check_in_ball(vn, c)?;
    Ok(())
}

/// `max(0, m + d²(u, vp) - d²(u, vn))` in the variant's geometry.
pub fn pull_push_loss(u: &[f64], vp: &[f64], vn: &[f64], cfg: &LossConfig) -> Result<f64> {
    validate_points(u, vp, vn, cfg)?;
    match cfg.variant {
        Variant::Hyper => {
            let c = cfg.curvature.value();
            let dp = dist_c_raw(u, vp, c)?;
            let dn = dist_c_raw(u, vn, c)?;
            Ok((cfg.margin + dp * dp - dn * dn).max(0.0))
        }
        Variant::Cml => Ok(baselines::euclidean_triplet_loss(u, vp, vn, cfg.margin)),
        Variant::HyperTs => {
            let (a, b, e) = baselines::tangent_triplet(u, vp, vn, cfg.curvature)?;
            Ok(baselines::euclidean_triplet_loss(&a, &b, &e, cfg.margin))
        }
    }
}

/// Relative distortion `|d_D - d_E| / d_E` summed over the (u, vp) and (u, vn)
/// pairs, with the identity as the embedding map. Only the hyperbolic variant
/// has a non-trivial distortion; the others measure with the Euclidean metric
/// on both sides and return 0.
pub fn distortion_loss(u: &[f64], vp: &[f64], vn: &[f64], cfg: &LossConfig) -> Result<f64> {
    validate_points(u, vp, vn, cfg)?;
    if cfg.variant != Variant::Hyper {
        return Ok(0.0);
    }
    let c = cfg.curvature.value();
    let mut total = 0.0;
    for v in [vp, vn] {
        let de = euclidean_dist(u, v);
        if de < cfg.distortion_epsilon {
            continue;
        }
        let dd = dist_c_raw(u, v, c)?;
        total += (dd - de).abs() / de;
    }
    Ok(total)
}

/// `pull_push + γ·distortion`.
pub fn total_loss(u: &[f64], vp: &[f64], vn: &[f64], cfg: &LossConfig) -> Result<f64> {
    Ok(loss_parts(u, vp, vn, cfg)?.total)
}

pub fn loss_parts(u: &[f64], vp: &[f64], vn: &[f64], cfg: &LossConfig) -> Result<LossParts> {
    let pull_push = pull_push_loss(u, vp, vn, cfg)?;
    let distortion = if cfg.gamma == 0.0 {
        0.0
    } else {
        distortion_loss(u, vp, vn, cfg)?
    };
    Ok(LossParts {
        pull_push,
        distortion,
        total: pull_push + cfg.gamma * distortion,
    })
}

/// Exact Euclidean gradient of [`total_loss`] with respect to the three embeddings.
pub fn triplet_grad(u: &[f64], vp: &[f64], vn: &[f64], cfg: &LossConfig) -> Result<TripletGrad> {
    Ok(loss_and_grad(u, vp, vn, cfg)?.1)
}

/// Loss terms and gradient in one pass.
pub fn loss_and_grad(
    u: &[f64],
    vp: &[f64],
    vn: &[f64],
    cfg: &LossConfig,
) -> Result<(LossParts, TripletGrad)> {
    validate_points(u, vp, vn, cfg)?;
    let out = match cfg.variant {
        Variant::Hyper => hyper_loss_and_grad(u, vp, vn, cfg)?,
        Variant::Cml => {
            let (loss, g) = baselines::euclidean_triplet_loss_and_grad(u, vp, vn, cfg.margin);
            (LossParts { pull_push: loss, distortion: 0.0, total: loss }, g)
        }
        Variant::HyperTs => {
            let (a, b, e) = baselines::tangent_triplet(u, vp, vn, cfg.curvature)?;
            let (loss, g) = baselines::euclidean_triplet_loss_and_grad(&a, &b, &e, cfg.margin);
            (LossParts { pull_push: loss, distortion: 0.0, total: loss }, g)
        }
    };
    out.1.check_finite()?;
    if !out.0.total.is_finite() {
        return Err(Error::NonFinite("triplet loss".into()));
    }
    Ok(out)
}

/// Distance, and the gradient of `d` and `d²` with respect to both arguments.
struct PairGeometry {
    dist: f64,
    /// ∂d/∂x, ∂d/∂y; `None` when the points coincide.
    grad_dist: Option<(Vec<f64>, Vec<f64>)>,
    grad_sq_x: Vec<f64>,
    grad_sq_y: Vec<f64>,
}

fn pair_geometry(x: &[f64], y: &[f64], c: f64, need_dist_grad: bool) -> Result<PairGeometry> {
    let dim = x.len();
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n2 = norm_sq(&diff);
    let dist = dist_c_raw(x, y, c)?;

    if c == 0.0 {
        // d = 2|x - y|
        let grad_sq_x: Vec<f64> = diff.iter().map(|v| 8.0 * v).collect();
        let grad_sq_y: Vec<f64> = grad_sq_x.iter().map(|v| -v).collect();
        let grad_dist = (need_dist_grad && n2 > 0.0).then(|| {
            let n = n2.sqrt();
            let gx: Vec<f64> = diff.iter().map(|v| 2.0 * v / n).collect();
            let gy = gx.iter().map(|v| -v).collect();
            (gx, gy)
        });
        return Ok(PairGeometry { dist, grad_dist, grad_sq_x, grad_sq_y });
    }

    let alpha = 1.0 - c * norm_sq(x);
    let beta = 1.0 - c * norm_sq(y);
    let delta = 2.0 * c * n2 / (alpha * beta);
    // ∂δ/∂x = k [ (x - y) + (c n2/α) x ],  ∂δ/∂y = k [ (y - x) + (c n2/β) y ]
    let k = 4.0 * c / (alpha * beta);
    let ax = c * n2 / alpha;
    let by = c * n2 / beta;
    let mut ddx = vec![0.0; dim];
    let mut ddy = vec![0.0; dim];
    for i in 0..dim {
        ddx[i] = k * (diff[i] + ax * x[i]);
        ddy[i] = k * (-diff[i] + by * y[i]);
    }
    // ∂d²/∂δ = (2/c) acosh(1+δ)/√(δ(δ+2)), which tends to 2/c as δ → 0.
    let root = (delta * (delta + 2.0)).sqrt();
    let ratio = if delta < 1e-8 {
        1.0 - delta / 3.0
    } else {
        acosh1p(delta) / root
    };
    let s2 = 2.0 / c * ratio;
    let grad_sq_x = ddx.iter().map(|v| s2 * v).collect();
    let grad_sq_y = ddy.iter().map(|v| s2 * v).collect();
    let grad_dist = (need_dist_grad && root > 0.0).then(|| {
        let s1 = 1.0 / (c.sqrt() * root);
        (
            ddx.iter().map(|v| s1 * v).collect(),
            ddy.iter().map(|v| s1 * v).collect(),
        )
    });
    Ok(PairGeometry { dist, grad_dist, grad_sq_x, grad_sq_y })
}

fn hyper_loss_and_grad(
    u: &[f64],
    vp: &[f64],
    vn: &[f64],
    cfg: &LossConfig,
) -> Result<(LossParts, TripletGrad)> {
    let c = cfg.curvature.value();
    let dim = u.len();
    let with_distortion = cfg.gamma != 0.0;
    let pos = pair_geometry(u, vp, c, with_distortion)?;
    let neg = pair_geometry(u, vn, c, with_distortion)?;
    let mut grad = TripletGrad::zeros(dim);

    let hinge = cfg.margin + pos.dist * pos.dist - neg.dist * neg.dist;
    let pull_push = hinge.max(0.0);
    if hinge > 0.0 {
        for i in 0..dim {
            grad.g_user[i] += pos.grad_sq_x[i] - neg.grad_sq_x[i];
            grad.g_pos[i] += pos.grad_sq_y[i];
            grad.g_neg[i] -= neg.grad_sq_y[i];
        }
    }

    let mut distortion = 0.0;
    if with_distortion {
        for (geo, v, g_item) in [(&pos, vp, &mut grad.g_pos), (&neg, vn, &mut grad.g_neg)] {
            let de = euclidean_dist(u, v);
            if de < cfg.distortion_epsilon {
                continue;
            }
            let dd = geo.dist;
            distortion += (dd - de).abs() / de;
            let sign = if dd > de {
                1.0
            } else if dd < de {
                -1.0
            } else {
                0.0
            };
            let Some((gdx, gdy)) = geo.grad_dist.as_ref() else {
                continue;
            };
            if sign == 0.0 {
                continue;
            }
            // ∂/∂x [(d_D - d_E)/d_E] = (∂d_D - (d_D/d_E) ∂d_E) / d_E,  ∂d_E/∂u = (u - v)/d_E
            let w = cfg.gamma * sign / de;
            let r = dd / de;
            for i in 0..dim {
                let de_du = (u[i] - v[i]) / de;
                grad.g_user[i] += w * (gdx[i] - r * de_du);
                g_item[i] += w * (gdy[i] + r * de_du);
            }
        }
    }

    let parts = LossParts {
        pull_push,
        distortion,
        total: pull_push + cfg.gamma * distortion,
    };
    Ok((parts, grad))
}

/// Squared Poincaré distance `d_c²` and its gradient, exposed for the
/// optimizer and benchmarks.
pub fn sq_dist_grad(x: &[f64], y: &[f64], c: Curvature) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_in_ball(x, c)?;
    check_in_ball(y, c)?;
    let g = pair_geometry(x, y, c.value(), false)?;
    Ok((g.dist * g.dist, g.grad_sq_x, g.grad_sq_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gyrovector;

    fn hyper(margin: f64, gamma: f64, c: f64) -> LossConfig {
        LossConfig {
            margin,
            gamma,
            curvature: Curvature::new(c).unwrap(),
            distortion_epsilon: 1e-9,
            variant: Variant::Hyper,
        }
    }

    #[test]
    fn hinge_clamps_when_negative_is_far() {
        // d(u, vp) = 0.3 and d(u, vn) = 1.0 at c = 1, via d(0, t) = 2 atanh(t).
        let cfg = hyper(0.2, 0.0, 1.0);
        let u = [0.0, 0.0];
        let vp = [(0.15f64).tanh(), 0.0];
        let vn = [0.0, (0.5f64).tanh()];
        assert_eq!(pull_push_loss(&u, &vp, &vn, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn hinge_equals_margin_for_equal_distances() {
        let cfg = hyper(0.5, 0.0, 1.0);
        let u = [0.1, -0.2];
        let v = [0.3, 0.3];
        assert_eq!(pull_push_loss(&u, &v, &v, &cfg).unwrap(), 0.5);
    }

    #[test]
    fn pull_push_from_origin() {
        let cfg = hyper(0.1, 0.0, 1.0);
        let l = pull_push_loss(&[0.0, 0.0], &[0.5, 0.0], &[0.1, 0.0], &cfg).unwrap();
        assert!((l - 1.266_680_232_795_318_6).abs() < 1e-13, "{l}");
    }

    #[test]
    fn distortion_examples() {
        let cfg = hyper(0.5, 1.0, 1.0);
        let p = [0.2, 0.1];
        assert_eq!(distortion_loss(&p, &p, &p, &cfg).unwrap(), 0.0);
        let l = distortion_loss(&[0.0, 0.0], &[0.5, 0.0], &[0.9, 0.0], &cfg).unwrap();
        assert!((l - 3.468_823_443_076_708_8).abs() < 1e-13, "{l}");
        // c = 0: d_D = 2 d_E, so each pair contributes exactly 1.
        let cfg0 = hyper(0.5, 1.0, 0.0);
        let l = distortion_loss(&[0.1, 0.2], &[-0.4, 0.3], &[2.0, -1.0], &cfg0).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn total_loss_examples() {
        let u = [0.0, 0.0];
        let vp = [0.5, 0.0];
        let vn = [0.9, 0.0];
        let c0 = hyper(0.1, 0.0, 1.0);
        assert_eq!(
            total_loss(&u, &vp, &vn, &c0).unwrap(),
            pull_push_loss(&u, &vp, &vn, &c0).unwrap()
        );
        let c1 = hyper(0.1, 1.0, 1.0);
        let sum = pull_push_loss(&u, &vp, &vn, &c1).unwrap() + distortion_loss(&u, &vp, &vn, &c1).unwrap();
        assert_eq!(total_loss(&u, &vp, &vn, &c1).unwrap(), sum);
        let p = [0.3, -0.1];
        assert_eq!(total_loss(&p, &p, &p, &hyper(0.5, 0.75, 1.0)).unwrap(), 0.5);
    }

    #[test]
    fn gamma_linearity() {
        let (u, vp, vn) = ([0.1, 0.2, -0.1], [0.4, -0.3, 0.2], [-0.2, 0.1, 0.5]);
        let base = hyper(0.5, 0.0, 1.0);
        let d = distortion_loss(&u, &vp, &vn, &base).unwrap();
        let l0 = total_loss(&u, &vp, &vn, &base).unwrap();
        for g in [0.0, 0.5, 1.0] {
            let l = total_loss(&u, &vp, &vn, &hyper(0.5, g, 1.0)).unwrap();
            assert!((l - (l0 + g * d)).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_region_has_zero_gradient() {
        let cfg = hyper(0.1, 0.0, 1.0);
        let g = triplet_grad(&[0.0, 0.0], &[0.1, 0.0], &[0.0, 0.8], &cfg).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn descent_direction_for_positive_item() {
        let cfg = hyper(0.5, 0.75, 1.0);
        let (u, vp, vn) = ([0.1, 0.05], [0.4, -0.3], [0.2, 0.1]);
        let before = total_loss(&u, &vp, &vn, &cfg).unwrap();
        let g = triplet_grad(&u, &vp, &vn, &cfg).unwrap();
        let norm = gyrovector::norm(&g.g_pos);
        let moved: Vec<f64> = vp.iter().zip(&g.g_pos).map(|(x, d)| x - 1e-4 * d / norm).collect();
        assert!(total_loss(&u, &moved, &vn, &cfg).unwrap() < before);
    }

    #[test]
    fn coincident_points_have_finite_gradient() {
        let cfg = hyper(0.5, 0.75, 1.0);
        let p = [0.3, -0.2];
        let g = triplet_grad(&p, &p, &p, &cfg).unwrap();
        assert!(g.g_user.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn out_of_ball_input_is_rejected() {
        let cfg = hyper(0.5, 0.75, 1.0);
        assert!(triplet_grad(&[1.0, 0.0], &[0.0, 0.0], &[0.1, 0.0], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(hyper(0.0, 0.1, 1.0).validate().is_err());
        assert!(hyper(0.1, -0.1, 1.0).validate().is_err());
        assert!(hyper(0.1, 0.1, 1.0).validate().is_ok());
    }
}

#![allow(dead_code)]

use hyperml::baselines::from_tangent;
use hyperml::objective::{total_loss, triplet_grad, LossConfig};
use hyperml::{Curvature, Variant};
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute floor for components that are zero up to rounding.
pub const FD_ABS_FLOOR: f64 = 1e-8;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Uniform direction scaled to a uniform radius in `[0, max_norm)`.
pub fn random_point<R: Rng>(rng: &mut R, dim: usize, max_norm: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = norm(&dir).max(1e-12);
    let r = rng.gen_range(0.0..max_norm);
    dir.iter().map(|v| v / n * r).collect()
}

pub fn loss_config(variant: Variant, gamma: f64, c: f64, margin: f64) -> LossConfig {
    LossConfig {
        margin,
        gamma,
        curvature: Curvature::new(c).unwrap(),
        distortion_epsilon: 1e-9,
        variant,
    }
}

/// Loss as a function of the coordinates the variant differentiates:
/// ball points for Hyper and CML, tangent vectors at the origin for HyperTS.
pub fn loss_in_grad_coords(p: &[Vec<f64>; 3], cfg: &LossConfig) -> f64 {
    match cfg.variant {
        Variant::HyperTs => {
            let m = |a: &Vec<f64>| from_tangent(a, cfg.curvature).unwrap();
            total_loss(&m(&p[0]), &m(&p[1]), &m(&p[2]), cfg).unwrap()
        }
        _ => total_loss(&p[0], &p[1], &p[2], cfg).unwrap(),
    }
}

/// Hinge argument `m + d²(u,vp) - d²(u,vn)` in the variant's geometry.
pub fn hinge_argument(p: &[Vec<f64>; 3], cfg: &LossConfig) -> f64 {
    let mut zero_gamma = *cfg;
    zero_gamma.gamma = 0.0;
    let mut big_margin = zero_gamma;
    big_margin.margin = 1e6;
    loss_in_grad_coords(p, &big_margin) - 1e6 + cfg.margin
}

#[derive(Debug, Clone)]
pub struct FdMismatch {
    pub row: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares analytic gradients with central differences at `p`, which holds
/// the gradient coordinates (tangent vectors for HyperTS).
pub fn fd_check(p: &[Vec<f64>; 3], cfg: &LossConfig) -> Vec<FdMismatch> {
    let grads = match cfg.variant {
        Variant::HyperTs => {
            let m = |a: &Vec<f64>| from_tangent(a, cfg.curvature).unwrap();
            triplet_grad(&m(&p[0]), &m(&p[1]), &m(&p[2]), cfg).unwrap()
        }
        _ => triplet_grad(&p[0], &p[1], &p[2], cfg).unwrap(),
    };
    let analytic = [grads.g_user, grads.g_pos, grads.g_neg];
    let mut out = Vec::new();
    for row in 0..3 {
        for coord in 0..p[row].len() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[row][coord] += FD_STEP;
            minus[row][coord] -= FD_STEP;
            let numeric = (loss_in_grad_coords(&plus, cfg) - loss_in_grad_coords(&minus, cfg)) / (2.0 * FD_STEP);
            let a = analytic[row][coord];
            if (a - numeric).abs() > FD_REL_TOL * a.abs().max(numeric.abs()) + FD_ABS_FLOOR {
                out.push(FdMismatch {
                    row,
                    coord,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    out
}

/// A random triplet with norms `<= max_norm`, in gradient coordinates, whose
/// hinge argument is at least `kink_gap` away from zero.
pub fn random_triplet<R: Rng>(rng: &mut R, dim: usize, max_norm: f64, cfg: &LossConfig, kink_gap: f64) -> [Vec<f64>; 3] {
    loop {
        let pts = [
            random_point(rng, dim, max_norm),
            random_point(rng, dim, max_norm),
            random_point(rng, dim, max_norm),
        ];
        let p = match cfg.variant {
            Variant::HyperTs => pts.map(|x| hyperml::baselines::to_tangent(&x, cfg.curvature).unwrap()),
            _ => pts,
        };
        if hinge_argument(&p, cfg).abs() > kink_gap {
            return p;
        }
    }
}

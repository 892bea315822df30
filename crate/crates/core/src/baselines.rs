//! Euclidean CML baseline and the HyperTS tangent-space variant.

use crate::data::Triplet;
use crate::error::Result;
use crate::gyrovector::{exp_map, log_map, project_in_place, Curvature};
use crate::model::{EmbeddingStore, Variant};
use crate::objective::{loss_and_grad, LossConfig, LossParts, TripletGrad};
use crate::optimizer::{apply_step, OptimConfig};

/// `max(0, m + |u - vp|² - |u - vn|²)`.
pub fn euclidean_triplet_loss(u: &[f64], vp: &[f64], vn: &[f64], margin: f64) -> f64 {
    let mut h = margin;
    for i in 0..u.len() {
        let a = u[i] - vp[i];
        let b = u[i] - vn[i];
        h += a * a - b * b;
    }
    h.max(0.0)
}

/// Loss and analytic gradients of [`euclidean_triplet_loss`].
pub fn euclidean_triplet_loss_and_grad(
    u: &[f64],
    vp: &[f64],
    vn: &[f64],
    margin: f64,
) -> (f64, TripletGrad) {
    let loss = euclidean_triplet_loss(u, vp, vn, margin);
    let mut g = TripletGrad::zeros(u.len());
    if loss > 0.0 {
        for i in 0..u.len() {
            g.g_user[i] = 2.0 * (vn[i] - vp[i]);
            g.g_pos[i] = -2.0 * (u[i] - vp[i]);
            g.g_neg[i] = 2.0 * (u[i] - vn[i]);
        }
    }
    (loss, g)
}

/// `log_0^c(p)`.
pub fn to_tangent(p: &[f64], c: Curvature) -> Result<Vec<f64>> {
    log_map(&vec![0.0; p.len()], p, c)
}

/// `exp_0^c(v)`, projected so the result is strictly inside the ball even
/// when `tanh` rounds to 1.
pub fn from_tangent(v: &[f64], c: Curvature) -> Result<Vec<f64>> {
    let mut p = exp_map(&vec![0.0; v.len()], v, c)?;
    project_in_place(&mut p, c);
    Ok(p)
}

pub(crate) fn tangent_triplet(
    u: &[f64],
    vp: &[f64],
    vn: &[f64],
    c: Curvature,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    Ok((to_tangent(u, c)?, to_tangent(vp, c)?, to_tangent(vn, c)?))
}

/// One HyperTS update: gradients of the Euclidean triplet loss in tangent
/// coordinates at the origin, a plain SGD step there, and the map back.
pub fn hyperts_step(
    store: &mut EmbeddingStore,
    t: Triplet,
    loss: &LossConfig,
    optim: &OptimConfig,
) -> Result<LossParts> {
    debug_assert_eq!(store.variant(), Variant::HyperTs);
    let (parts, grads) = {
        let (u, vp, vn) = store.lookup_triplet(t)?;
        loss_and_grad(u, vp, vn, loss)?
    };
    apply_step(store, t, &grads, optim)?;
    Ok(parts)
}

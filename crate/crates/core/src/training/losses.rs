//! Loss terms recorded on a graph, plus value-only wrappers.
//!
//! Poses enter as `[n, d]` matrices of flattened parameters. Flow-side
//! terms take annotations in the flow's standardized space together with
//! the [`PoseScaler`] that maps them back, so the reported likelihoods and
//! log-determinants are those of the map into pose space.

use diffcore::{Graph, Tensor, Var};

use super::PoseScaler;
use crate::error::Result;
use crate::flow::{graph_standard_normal_log_density, BoundFlow, ConditionedFlow};
use crate::handmodel::{graph_forward_kinematics, graph_project, rotation_columns};
use crate::handmodel::{Camera, HandSkeleton, PoseLayout};

/// Depths are clamped here before projection; such keypoints are masked.
const MIN_DEPTH: f64 = 1e-6;

pub fn rows_tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::matrix(rows.len(), rows[0].len(), rows.concat())
}

/// `mean + std * x` for every row of `x`.
pub fn graph_decode(g: &mut Graph, x: Var, scaler: &PoseScaler) -> Var {
    let n = g.value(x).rows();
    let d = scaler.dim();
    let std = g.constant(Tensor::matrix(1, d, scaler.std.clone()));
    let mean = g.constant(Tensor::matrix(1, d, scaler.mean.clone()));
    let std = g.repeat_rows(std, n);
    let mean = g.repeat_rows(mean, n);
    let scaled = g.mul(x, std);
    g.add(scaled, mean)
}

/// Mean over annotations of `-log p(psi* | v)`.
pub fn graph_loss_nll(
    g: &mut Graph,
    flow: &BoundFlow,
    annotations: Var,
    v: Var,
    scaler: &PoseScaler,
) -> Result<Var> {
    let (z, ld) = flow.inverse(g, annotations, v)?;
    let base = graph_standard_normal_log_density(g, z);
    let lp = g.add(base, ld);
    let mean = g.mean(lp);
    let nll = g.neg(mean);
    Ok(g.add_scalar(nll, scaler.log_det()))
}

/// Mean over annotations of `-log|det df_v/dz|` at `z* = f_v^{-1}(psi*)`.
/// The conditioning passes through a gradient barrier.
pub fn graph_loss_detmag(
    g: &mut Graph,
    flow: &BoundFlow,
    annotations: Var,
    v: Var,
    scaler: &PoseScaler,
) -> Result<Var> {
    let frozen = g.stop_gradient(v);
    let (_, ld_inverse) = flow.inverse(g, annotations, frozen)?;
    let mean = g.mean(ld_inverse);
    Ok(g.add_scalar(mean, -scaler.log_det()))
}

/// Mean over the rows of `latents` of `-log|det df_v/dz|`, with the same
/// gradient barrier on the conditioning.
pub fn graph_loss_detmag_at_latents(
    g: &mut Graph,
    flow: &BoundFlow,
    latents: Var,
    v: Var,
    scaler: &PoseScaler,
) -> Result<Var> {
    let frozen = g.stop_gradient(v);
    let (_, ld) = flow.forward(g, latents, frozen)?;
    let mean = g.mean(ld);
    let neg = g.neg(mean);
    Ok(g.add_scalar(neg, -scaler.log_det()))
}

/// `||mode - target||^2` for a `[1, d]` mode row.
pub fn graph_loss_mode(g: &mut Graph, mode: Var, target: &[f64]) -> Var {
    let t = g.constant(Tensor::matrix(1, target.len(), target.to_vec()));
    let diff = g.sub(mode, t);
    g.sum_sq(diff)
}

/// Mean over rows of `sum_i ||J(psi)_i - P_i||^2` (mm^2).
pub fn graph_loss_j3d(
    g: &mut Graph,
    psi: Var,
    joints3d: &[[f64; 3]],
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> Var {
    let n = g.value(psi).rows();
    let j = graph_forward_kinematics(g, psi, skeleton, cam);
    let target: Vec<f64> = joints3d.iter().flatten().copied().collect();
    let t = g.constant(Tensor::matrix(1, target.len(), target));
    let t = g.repeat_rows(t, n);
    let diff = g.sub(j, t);
    let total = g.sum_sq(diff);
    g.scale(total, 1.0 / n as f64)
}

/// Mean over rows of `sum_i eta_i ||Pi(J(psi)_i) - p_i||^2` (px^2).
/// Keypoints behind the camera are left out with a warning.
pub fn graph_loss_j2d(
    g: &mut Graph,
    psi: Var,
    joints2d: &[[f64; 2]],
    visible: &[bool],
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> Var {
    let n = g.value(psi).rows();
    let k = joints2d.len();
    let j = graph_forward_kinematics(g, psi, skeleton, cam);
    let mut mask = Vec::with_capacity(n * k);
    let mut behind = 0;
    for r in 0..n {
        for (i, &vis) in visible.iter().enumerate() {
            let z = g.value(j).data()[r * 3 * k + 3 * i + 2];
            let in_front = z > MIN_DEPTH;
            if vis && !in_front {
                behind += 1;
            }
            mask.push(if vis && in_front { 1.0 } else { 0.0 });
        }
    }
    if behind > 0 {
        log::warn!("{behind} visible keypoints behind the camera left out of the 2D loss");
    }
    let (u, v) = graph_project(g, j, cam, MIN_DEPTH);
    let mask = g.constant(Tensor::matrix(n, k, mask));
    let axis_loss = |g: &mut Graph, pred: Var, axis: usize| {
        let target: Vec<f64> = joints2d.iter().map(|p| p[axis]).collect();
        let t = g.constant(Tensor::matrix(1, k, target));
        let t = g.repeat_rows(t, n);
        let diff = g.sub(pred, t);
        let masked = g.mul(diff, mask);
        g.sum_sq(masked)
    };
    let lu = axis_loss(g, u, 0);
    let lv = axis_loss(g, v, 1);
    let total = g.add(lu, lv);
    g.scale(total, 1.0 / n as f64)
}

/// Mean over rows of `sum_blocks ||A^T A - I||_F^2`.
pub fn graph_loss_theta(g: &mut Graph, psi: Var, layout: &PoseLayout) -> Var {
    let n = g.value(psi).rows();
    let mut total: Option<Var> = None;
    for h in 0..layout.hands {
        let (a1, a2) = rotation_columns(g, psi, layout, h);
        let sq1 = g.square(a1);
        let n1 = g.row_sums(sq1);
        let sq2 = g.square(a2);
        let n2 = g.row_sums(sq2);
        let p = g.mul(a1, a2);
        let dot = g.row_sums(p);
        let e1 = g.add_scalar(n1, -1.0);
        let e2 = g.add_scalar(n2, -1.0);
        let t1 = g.sum_sq(e1);
        let t2 = g.sum_sq(e2);
        let t3 = g.sum_sq(dot);
        let t3 = g.scale(t3, 2.0);
        let s = g.add(t1, t2);
        let s = g.add(s, t3);
        total = Some(match total {
            None => s,
            Some(acc) => g.add(acc, s),
        });
    }
    let total = total.expect("at least one hand");
    g.scale(total, 1.0 / n as f64)
}

fn single(g: &mut Graph, v: &[f64]) -> Var {
    g.constant(Tensor::matrix(1, v.len(), v.to_vec()))
}

/// Value of [`graph_loss_nll`] for pose-space annotations.
pub fn loss_nll(
    annotations: &[Vec<f64>],
    v: &[f64],
    flow: &ConditionedFlow,
    scaler: &PoseScaler,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = flow.bind(&mut g, false);
    let enc: Vec<Vec<f64>> = annotations.iter().map(|a| scaler.encode(a)).collect();
    let a = g.constant(rows_tensor(&enc));
    let vv = single(&mut g, v);
    let l = graph_loss_nll(&mut g, &bound, a, vv, scaler)?;
    Ok(g.value(l).item())
}

/// Value of [`graph_loss_detmag`] for pose-space annotations.
pub fn loss_detmag(
    annotations: &[Vec<f64>],
    v: &[f64],
    flow: &ConditionedFlow,
    scaler: &PoseScaler,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = flow.bind(&mut g, false);
    let enc: Vec<Vec<f64>> = annotations.iter().map(|a| scaler.encode(a)).collect();
    let a = g.constant(rows_tensor(&enc));
    let vv = single(&mut g, v);
    let l = graph_loss_detmag(&mut g, &bound, a, vv, scaler)?;
    Ok(g.value(l).item())
}

/// Value of [`graph_loss_detmag_at_latents`].
pub fn loss_detmag_at_latents(
    latents: &[Vec<f64>],
    v: &[f64],
    flow: &ConditionedFlow,
    scaler: &PoseScaler,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = flow.bind(&mut g, false);
    let z = g.constant(rows_tensor(latents));
    let vv = single(&mut g, v);
    let l = graph_loss_detmag_at_latents(&mut g, &bound, z, vv, scaler)?;
    Ok(g.value(l).item())
}

/// `||f_v(0) - psi*||^2` in pose space.
pub fn loss_mode(
    mode_annotation: &[f64],
    v: &[f64],
    flow: &ConditionedFlow,
    scaler: &PoseScaler,
) -> Result<f64> {
    let mode = scaler.decode(&flow.mode(v)?);
    Ok(mode
        .iter()
        .zip(mode_annotation)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

pub fn loss_j3d(
    psi_set: &[Vec<f64>],
    joints3d: &[[f64; 3]],
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> f64 {
    let mut g = Graph::new();
    let p = g.constant(rows_tensor(psi_set));
    let l = graph_loss_j3d(&mut g, p, joints3d, skeleton, cam);
    g.value(l).item()
}

pub fn loss_j2d(
    psi_set: &[Vec<f64>],
    joints2d: &[[f64; 2]],
    visible: &[bool],
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> f64 {
    let mut g = Graph::new();
    let p = g.constant(rows_tensor(psi_set));
    let l = graph_loss_j2d(&mut g, p, joints2d, visible, skeleton, cam);
    g.value(l).item()
}

pub fn loss_theta(psi_set: &[Vec<f64>], layout: &PoseLayout) -> f64 {
    let mut g = Graph::new();
    let p = g.constant(rows_tensor(psi_set));
    let l = graph_loss_theta(&mut g, p, layout);
    g.value(l).item()
}

//! Ray occlusion against proxy spheres, and inter-hand collision.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{pose_state, Camera, GaussianProxy, HandSkeleton, PoseParams, PoseState};
use crate::error::{Error, Result};

/// Default depth clearance (mm) a sphere must have in front of a keypoint
/// to occlude it.
pub const DEFAULT_DELTA_OCC: f64 = 5.0;

/// A scene sphere that is not part of either hand, in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Distance along the unit ray `dir` from the camera center to the first
/// intersection with the sphere, if the ray passes strictly within it and
/// the entry point lies in front of the camera.
pub fn ray_sphere_entry(dir: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    let b = dir.dot(center);
    let disc = b * b - center.norm_squared() + radius * radius;
    if disc <= 0.0 {
        return None;
    }
    let entry = b - disc.sqrt();
    (entry > 0.0).then_some(entry)
}

fn adjacent(skeleton: &HandSkeleton, proxy: &GaussianProxy, hand: usize, k: usize) -> bool {
    proxy.hand == hand
        && (proxy.bone == k || skeleton.hands[hand].keypoints[proxy.bone].parent == Some(k))
}

/// Visibility flags for every keypoint (hands concatenated).
///
/// A keypoint is occluded when its camera ray enters a proxy sphere (radius
/// one std) or an occluder at least `delta_occ` before reaching it. Proxies
/// on the bones that meet at the keypoint are ignored.
pub fn visibility_state(
    state: &PoseState,
    skeleton: &HandSkeleton,
    proxies: &[GaussianProxy],
    occluders: &[Occluder],
    delta_occ: f64,
) -> Result<Vec<bool>> {
    let spheres: Vec<(Vector3<f64>, f64)> = proxies
        .iter()
        .map(|p| (state.proxy_center(skeleton, p), p.std))
        .collect();
    let mut out = Vec::with_capacity(skeleton.total_keypoints());
    for (h, hand) in state.hands.iter().enumerate() {
        for (k, p) in hand.positions.iter().enumerate() {
            if !(p.z > 0.0) {
                return Err(Error::BehindCamera(p.z));
            }
            let dist = p.norm();
            let dir = p / dist;
            let limit = dist - delta_occ;
            let blocked_by_proxy = proxies.iter().zip(&spheres).any(|(proxy, (c, r))| {
                !adjacent(skeleton, proxy, h, k)
                    && ray_sphere_entry(&dir, c, *r).is_some_and(|t| t <= limit)
            });
            let blocked = blocked_by_proxy
                || occluders.iter().any(|o| {
                    ray_sphere_entry(&dir, &Vector3::from(o.center), o.radius)
                        .is_some_and(|t| t <= limit)
                });
            out.push(!blocked);
        }
    }
    Ok(out)
}

pub fn visibility(
    psi: &PoseParams,
    skeleton: &HandSkeleton,
    proxies: &[GaussianProxy],
    cam: &Camera,
    occluders: &[Occluder],
    delta_occ: f64,
) -> Result<Vec<bool>> {
    let state = pose_state(psi, skeleton, cam)?;
    visibility_state(&state, skeleton, proxies, occluders, delta_occ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collision {
    pub colliding: bool,
    /// Offending proxy index pairs `(a, b)` with `a` on the lower hand index.
    pub pairs: Vec<(usize, usize)>,
}

/// One-std spheres intersect when center distance is strictly below the
/// sum of the radii.
pub fn spheres_intersect(a: &Vector3<f64>, ra: f64, b: &Vector3<f64>, rb: f64) -> bool {
    (a - b).norm() < ra + rb
}

/// Inter-hand proxy pairs whose centers are closer than the sum of their
/// standard deviations (strict).
pub fn collision_state(
    state: &PoseState,
    skeleton: &HandSkeleton,
    proxies: &[GaussianProxy],
) -> Collision {
    let centers: Vec<Vector3<f64>> = proxies
        .iter()
        .map(|p| state.proxy_center(skeleton, p))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..proxies.len() {
        for b in 0..proxies.len() {
            if proxies[a].hand >= proxies[b].hand {
                continue;
            }
            if spheres_intersect(&centers[a], proxies[a].std, &centers[b], proxies[b].std) {
                pairs.push((a, b));
            }
        }
    }
    Collision {
        colliding: !pairs.is_empty(),
        pairs,
    }
}

/// Collision test for a pose. The camera intrinsics place the hand roots.
pub fn collision(
    psi: &PoseParams,
    skeleton: &HandSkeleton,
    proxies: &[GaussianProxy],
    cam: &Camera,
) -> Result<Collision> {
    Ok(collision_state(&pose_state(psi, skeleton, cam)?, skeleton, proxies))
}

//! Second implementation of the plausibility criteria, written separately
//! from [`super::Reference`] so the two can be checked against each other.
//! Only forward kinematics is shared.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::{AnnotationSet, PlausibilityConfig, Scene};
use crate::handmodel::{pose_state, HandSkeleton, ModelAssets, PoseParams, PoseState};

struct Frame {
    pixels: Vec<Option<[f64; 2]>>,
    hidden: Vec<bool>,
}

fn pinhole(scene: &Scene, p: &Vector3<f64>) -> Option<[f64; 2]> {
    let c = &scene.camera;
    (p.z > 0.0).then(|| [c.focal[0] * p.x / p.z + c.principal_point[0], c.focal[1] * p.y / p.z + c.principal_point[1]])
}

/// Occluded iff some sphere, not on a bone touching the keypoint, is
/// pierced by the ray and entered at least `delta` before the keypoint.
fn hidden_flags(state: &PoseState, skel: &HandSkeleton, assets: &ModelAssets, scene: &Scene) -> Vec<bool> {
    let mut spheres: Vec<(Vector3<f64>, f64, Option<(usize, usize, Option<usize>)>)> = Vec::new();
    for proxy in &assets.proxies {
        let centre = state.proxy_center(skel, proxy);
        let parent = skel.hands[proxy.hand].keypoints[proxy.bone].parent;
        spheres.push((centre, proxy.std, Some((proxy.hand, proxy.bone, parent))));
    }
    for o in &scene.occluders {
        spheres.push((Vector3::new(o.center[0], o.center[1], o.center[2]), o.radius, None));
    }
    let mut out = Vec::new();
    for (h, hand) in state.hands.iter().enumerate() {
        for (k, p) in hand.positions.iter().enumerate() {
            let reach = p.norm();
            let unit = p / reach;
            let blocked = spheres.iter().any(|(c, r, owner)| {
                if let Some((oh, bone, parent)) = owner {
                    if *oh == h && (*bone == k || *parent == Some(k)) {
                        return false;
                    }
                }
                let along = unit.dot(c);
                let perp2 = c.norm_squared() - along * along;
                if perp2 >= r * r {
                    return false;
                }
                let entry = along - (r * r - perp2).sqrt();
                entry > 0.0 && entry + assets.delta_occ <= reach
            });
            out.push(blocked);
        }
    }
    out
}

fn frame_of(psi: &[f64], assets: &ModelAssets, scene: &Scene) -> Option<(PoseParams, PoseState, Frame)> {
    let skel = &assets.skeleton;
    let params = PoseParams::from_flat(&skel.layout(), psi).ok()?;
    if params.hands.iter().any(|h| !(h.s > 0.0)) {
        return None;
    }
    let state = pose_state(&params, skel, &scene.camera).ok()?;
    if state.keypoints().iter().any(|p| !(p.z > 0.0)) {
        return None;
    }
    let frame = Frame {
        pixels: state.keypoints().iter().map(|p| pinhole(scene, p)).collect(),
        hidden: hidden_flags(&state, skel, assets, scene),
    };
    Some((params, state, frame))
}

fn rotation_of(a: &[f64; 6]) -> Option<Matrix3<f64>> {
    let x = Vector3::new(a[0], a[2], a[4]).try_normalize(1e-12)?;
    let second = Vector3::new(a[1], a[3], a[5]);
    let y = (second - x * x.dot(&second)).try_normalize(1e-12)?;
    Some(Matrix3::from_columns(&[x, y, x.cross(&y)]))
}

fn prior_distance(params: &PoseParams, assets: &ModelAssets, hand: usize) -> Option<f64> {
    let mut art = Vec::new();
    for a in &params.hands[hand].theta[1..] {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation_of(a)?));
        let w = q.scaled_axis();
        art.extend([w.x, w.y, w.z]);
    }
    let pca = &assets.prior.hands[hand];
    let centred: Vec<f64> = art.iter().zip(&pca.mean).map(|(x, m)| x - m).collect();
    let mut total = 0.0;
    for (axis, var) in pca.axes.iter().zip(&pca.variances) {
        let mut c = 0.0;
        for i in 0..centred.len() {
            c += axis[i] * centred[i];
        }
        total += c * c / var;
    }
    Some(total)
}

fn collides(state: &PoseState, assets: &ModelAssets) -> bool {
    let skel = &assets.skeleton;
    let centres: Vec<Vector3<f64>> = assets.proxies.iter().map(|p| state.proxy_center(skel, p)).collect();
    for (i, a) in assets.proxies.iter().enumerate() {
        for (j, b) in assets.proxies.iter().enumerate().skip(i + 1) {
            if a.hand == b.hand {
                continue;
            }
            let reach = a.std + b.std;
            if (centres[i] - centres[j]).norm_squared() < reach * reach {
                return true;
            }
        }
    }
    false
}

/// True iff every member of `set` satisfies all four criteria against
/// `psi_gt`. An empty set passes.
pub fn verify_set(set: &AnnotationSet, psi_gt: &[f64], scene: &Scene, assets: &ModelAssets, cfg: &PlausibilityConfig) -> bool {
    if set.annotations.is_empty() {
        return true;
    }
    let Some((_, _, truth)) = frame_of(psi_gt, assets, scene) else {
        return false;
    };
    let bound = cfg.pca_threshold_for(assets);
    set.annotations.iter().all(|psi| {
        let Some((params, state, frame)) = frame_of(psi, assets, scene) else {
            return false;
        };
        for i in 0..truth.hidden.len() {
            if truth.hidden[i] != frame.hidden[i] {
                return false;
            }
            if !truth.hidden[i] {
                let (Some(a), Some(b)) = (truth.pixels[i], frame.pixels[i]) else {
                    return false;
                };
                let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
                if d2 > cfg.pixel_threshold * cfg.pixel_threshold {
                    return false;
                }
            }
        }
        (0..params.hands.len()).all(|h| prior_distance(&params, assets, h).is_some_and(|d| d <= bound))
            && !collides(&state, assets)
    })
}

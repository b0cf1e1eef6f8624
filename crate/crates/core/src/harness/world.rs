//! Synthetic two-hand scenes seen by a ring of cameras.
//!
//! Hands are posed in a world frame centered on the rig and re-expressed
//! per camera as pose parameters, 2D observations and 3D joints.

use nalgebra::{Matrix3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annotate::Scene;
use crate::error::{Error, Result};
use crate::handmodel::{
    collision_state, matrix_to_rot6d, pose_state, visibility_state, Camera, HandParams, ModelAssets,
    Occluder, PoseParams, PoseState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub frames: usize,
    /// The last `test_frames` frames are held out from training.
    pub test_frames: usize,
    pub cameras: usize,
    /// The last `test_cameras` cameras are held out from training.
    pub test_cameras: usize,
    /// Distance of every camera from the rig center (mm).
    pub rig_radius: f64,
    /// Cameras alternate between this height above and below the hands
    /// (mm).
    pub rig_height: f64,
    pub focal: f64,
    pub width: f64,
    pub height: f64,
    /// Scale of the Gaussian in the prior's PCA space that articulations
    /// are drawn from.
    pub prior_scale: f64,
    pub beta_std: f64,
    /// Nominal distance between the two roots (mm).
    pub hand_spacing: f64,
    /// Per-axis Gaussian jitter of each root (mm).
    pub root_std: f64,
    /// Per-axis Gaussian axis-angle jitter (rad) of each hand's global
    /// rotation about the rest orientation (fingers up, palms along the
    /// world z axis); `inf` draws uniform rotations.
    pub rotation_std: f64,
    /// Mean number of occluder spheres per frame.
    pub occluder_density: f64,
    pub occluder_radius_min: f64,
    pub occluder_radius_max: f64,
    /// Largest radius (mm) of the static spheres halfway along each
    /// camera's line of sight. Each camera gets a fixed fraction of it, so
    /// the rig ranges from clear to obstructed views; `0` disables them.
    pub view_occluder_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            frames: 12,
            test_frames: 4,
            cameras: 8,
            test_cameras: 2,
            rig_radius: 600.0,
            rig_height: 150.0,
            focal: 500.0,
            width: 640.0,
            height: 480.0,
            prior_scale: 1.0,
            beta_std: 0.3,
            hand_spacing: 120.0,
            root_std: 15.0,
            rotation_std: 0.4,
            occluder_density: 1.0,
            occluder_radius_min: 30.0,
            occluder_radius_max: 60.0,
            view_occluder_radius: 80.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.cameras == 0 {
            return Err(Error::Config("world needs at least one frame and one camera".into()));
        }
        if self.test_frames > self.frames || self.test_cameras > self.cameras {
            return Err(Error::Config("more held-out frames or cameras than exist".into()));
        }
        let positive = [self.rig_radius, self.focal, self.width, self.height, self.occluder_radius_min];
        if positive.iter().any(|v| !(*v > 0.0)) || self.occluder_radius_max < self.occluder_radius_min {
            return Err(Error::Config("rig, image and occluder sizes must be positive".into()));
        }
        if !(self.prior_scale >= 0.0) || !(self.beta_std >= 0.0) || !(self.occluder_density >= 0.0) || !(self.hand_spacing >= 0.0) || !(self.root_std >= 0.0) || !(self.rotation_std >= 0.0) || !(self.view_occluder_radius >= 0.0) {
            return Err(Error::Config("world scales and densities must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_test_camera(&self, cam: usize) -> bool {
        cam >= self.cameras - self.test_cameras
    }

    pub fn is_test_frame(&self, frame: usize) -> bool {
        frame >= self.frames - self.test_frames
    }
}

pub fn camera_id(index: usize) -> String {
    format!("cam{index}")
}

pub fn frame_id(index: usize) -> String {
    format!("f{index:04}")
}

/// Camera at `center` looking at the world origin with world +y as up.
pub fn look_at(center: Vector3<f64>, focal: f64, principal_point: [f64; 2]) -> Camera {
    let z = (-center).normalize();
    let up = if z.cross(&Vector3::y()).norm() < 1e-6 { Vector3::x() } else { Vector3::y() };
    // image y points down
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Camera::new([focal, focal], principal_point).with_extrinsics(&r, &(-(r * center)))
}

/// Cameras evenly spaced on a ring around the vertical axis, alternating
/// above and below the hands.
pub fn camera_rig(cfg: &WorldConfig) -> Vec<Camera> {
    (0..cfg.cameras)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / cfg.cameras as f64;
            let h = if i % 2 == 0 { cfg.rig_height } else { -cfg.rig_height };
            let horizontal = (cfg.rig_radius * cfg.rig_radius - h * h).max(0.0).sqrt();
            let center = Vector3::new(horizontal * a.sin(), h, -horizontal * a.cos());
            look_at(center, cfg.focal, [cfg.width / 2.0, cfg.height / 2.0])
        })
        .collect()
}

/// One hand in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldHand {
    /// Row-major global rotation.
    pub rotation: [[f64; 3]; 3],
    /// Non-global 6D rotations.
    pub articulation: Vec<[f64; 6]>,
    pub beta: Vec<f64>,
    pub root: [f64; 3],
}

impl WorldHand {
    fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::from_fn(|i, j| r[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFrame {
    pub frame_id: String,
    pub hands: Vec<WorldHand>,
    /// World-frame spheres.
    pub occluders: Vec<Occluder>,
}

/// Pose parameters of `frame` as seen by `cam`.
pub fn camera_pose(frame: &WorldFrame, cam: &Camera, assets: &ModelAssets) -> Result<PoseParams> {
    let r_cam = cam.rotation_matrix();
    let hands = frame
        .hands
        .iter()
        .map(|h| {
            let root = cam.world_to_camera(&Vector3::from(h.root));
            if !(root.z > 0.0) {
                return Err(Error::BehindCamera(root.z));
            }
            let t = cam.project(&root)?;
            let mut theta = vec![matrix_to_rot6d(&(r_cam * h.rotation_matrix()))];
            theta.extend(h.articulation.iter().copied());
            Ok(HandParams {
                theta,
                beta: h.beta.clone(),
                t,
                s: assets.skeleton.reference_focal / root.z,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PoseParams { hands })
}

/// Occluders moved into `cam`'s frame.
pub fn camera_occluders(frame: &WorldFrame, cam: &Camera) -> Vec<Occluder> {
    frame
        .occluders
        .iter()
        .map(|o| {
            let c = cam.world_to_camera(&Vector3::from(o.center));
            Occluder {
                center: [c.x, c.y, c.z],
                radius: o.radius,
            }
        })
        .collect()
}

pub fn camera_scene(frame: &WorldFrame, cam: &Camera) -> Scene {
    Scene {
        camera: cam.clone(),
        occluders: camera_occluders(frame, cam),
    }
}

fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    // uniform via a normalized Gaussian quaternion
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_hand<R: Rng>(hand: usize, cfg: &WorldConfig, assets: &ModelAssets, rng: &mut R) -> WorldHand {
    let layout = assets.skeleton.layout();
    let pca = &assets.prior.hands[hand];
    let coeffs: Vec<f64> = pca.variances.iter().map(|v| cfg.prior_scale * v.sqrt() * gaussian(rng)).collect();
    let mut params = HandParams::identity(&layout, [0.0; 2], 1.0);
    crate::handmodel::set_articulation(&mut params, &pca.reconstruct(&coeffs));
    let side = if hand == 0 { -0.5 } else { 0.5 };
    let root: [f64; 3] = std::array::from_fn(|k| {
        let base = if k == 0 { side * cfg.hand_spacing } else { 0.0 };
        base + cfg.root_std * gaussian(rng)
    });
    let rot = if cfg.rotation_std.is_finite() {
        let w = Vector3::from_fn(|_, _| cfg.rotation_std * gaussian(rng));
        crate::handmodel::axis_angle_to_matrix(&w)
    } else {
        random_rotation(rng)
    };
    WorldHand {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| rot[(i, j)])),
        articulation: params.theta[1..].to_vec(),
        beta: (0..layout.betas).map(|_| cfg.beta_std * gaussian(rng)).collect(),
        root,
    }
}

/// World-frame keypoints of a frame (via the first camera).
pub fn world_state(frame: &WorldFrame, cams: &[Camera], assets: &ModelAssets) -> Result<(PoseState, Vec<Vector3<f64>>)> {
    let cam = &cams[0];
    let state = pose_state(&camera_pose(frame, cam, assets)?, &assets.skeleton, cam)?;
    let world = state.keypoints().iter().map(|p| cam.camera_to_world(p)).collect();
    Ok((state, world))
}

/// Closest any keypoint may come to a camera (mm).
const NEAR_PLANE: f64 = 50.0;

/// Attempts before giving up on placing hands or an occluder.
const MAX_ATTEMPTS: usize = 200;

/// Hands from the prior that do not collide, lie within the prior bound
/// and sit in front of every camera; resampled until they do.
pub fn sample_hands<R: Rng>(cfg: &WorldConfig, cams: &[Camera], assets: &ModelAssets, pca_threshold: f64, rng: &mut R) -> Result<Vec<WorldHand>> {
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let hands: Vec<WorldHand> = (0..assets.skeleton.hands.len()).map(|h| sample_hand(h, cfg, assets, rng)).collect();
        let frame = WorldFrame {
            frame_id: String::new(),
            hands,
            occluders: Vec::new(),
        };
        for cam in cams {
            let Ok(params) = camera_pose(&frame, cam, assets) else { continue 'attempt };
            let Ok(state) = pose_state(&params, &assets.skeleton, cam) else { continue 'attempt };
            if state.keypoints().iter().any(|p| p.z < NEAR_PLANE) {
                continue 'attempt;
            }
        }
        let params = camera_pose(&frame, &cams[0], assets)?;
        let state = pose_state(&params, &assets.skeleton, &cams[0])?;
        if collision_state(&state, &assets.skeleton, &assets.proxies).colliding {
            continue;
        }
        let within = params.hands.iter().enumerate().all(|(h, hp)| {
            crate::handmodel::articulation(hp).is_ok_and(|a| assets.prior.mahalanobis(h, &a) <= pca_threshold)
        });
        if within {
            return Ok(frame.hands);
        }
    }
    Err(Error::Config(format!(
        "could not place valid hands in front of every camera in {MAX_ATTEMPTS} attempts"
    )))
}

/// Occluder spheres around the hands: none touches a keypoint or contains
/// a camera.
pub fn sample_occluders<R: Rng>(
    cfg: &WorldConfig,
    cams: &[Camera],
    keypoints: &[Vector3<f64>],
    rng: &mut R,
) -> Vec<Occluder> {
    let count = if cfg.occluder_density > 0.0 {
        Poisson::new(cfg.occluder_density).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    let centroid = keypoints.iter().sum::<Vector3<f64>>() / keypoints.len() as f64;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..MAX_ATTEMPTS {
            let radius = rng.random_range(cfg.occluder_radius_min..=cfg.occluder_radius_max);
            let dir = Unit::new_normalize(Vector3::from_fn(|_, _| gaussian(rng)));
            let dist = radius + rng.random_range(40.0..160.0);
            let center = centroid + dir.into_inner() * dist;
            let clear_of_hands = keypoints.iter().all(|k| (k - center).norm() > radius + 10.0);
            let clear_of_cams = cams.iter().all(|c| (c.center() - center).norm() > radius + NEAR_PLANE);
            if clear_of_hands && clear_of_cams {
                out.push(Occluder {
                    center: [center.x, center.y, center.z],
                    radius,
                });
                break;
            }
        }
    }
    out
}

pub fn sample_frame<R: Rng>(
    index: usize,
    cfg: &WorldConfig,
    cams: &[Camera],
    assets: &ModelAssets,
    pca_threshold: f64,
    rng: &mut R,
) -> Result<WorldFrame> {
    let hands = sample_hands(cfg, cams, assets, pca_threshold, rng)?;
    let mut frame = WorldFrame {
        frame_id: frame_id(index),
        hands,
        occluders: Vec::new(),
    };
    let (_, world) = world_state(&frame, cams, assets)?;
    frame.occluders = sample_occluders(cfg, cams, &world, rng);
    frame.occluders.extend(view_occluders(cfg, cams));
    Ok(frame)
}

/// Static world-frame spheres halfway between each camera and the rig
/// center. Radii step through `0..=view_occluder_radius` in a strided
/// order so held-out cameras do not all land at one end.
pub fn view_occluders(cfg: &WorldConfig, cams: &[Camera]) -> Vec<Occluder> {
    let n = cams.len();
    if cfg.view_occluder_radius <= 0.0 || n < 2 {
        return Vec::new();
    }
    let stride = (2..n.saturating_sub(1)).find(|k| gcd(*k, n) == 1).unwrap_or(1);
    cams.iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let radius = cfg.view_occluder_radius * ((i * stride) % n) as f64 / (n - 1) as f64;
            let center = c.center() * 0.5;
            (radius > 0.0).then_some(Occluder {
                center: [center.x, center.y, center.z],
                radius,
            })
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Occluders (camera frame) halfway between `cam` and each hand, sized to
/// hide every keypoint of that hand with `margin` mm to spare at the hand.
pub fn covering_occluders(state: &PoseState, margin: f64) -> Vec<Occluder> {
    state
        .hands
        .iter()
        .map(|h| {
            let c = h.positions.iter().sum::<Vector3<f64>>() / h.positions.len() as f64;
            let ray = c.normalize();
            // widest keypoint distance from the centroid's ray, scaled to
            // the sphere's depth
            let spread = h
                .positions
                .iter()
                .map(|p| {
                    let along = p.dot(&ray);
                    (p - ray * along).norm() * c.norm() / along.max(1e-9)
                })
                .fold(0.0, f64::max);
            let center = c * 0.5;
            Occluder {
                center: [center.x, center.y, center.z],
                radius: 0.5 * (spread + margin),
            }
        })
        .collect()
}

/// Fraction of keypoints hidden over every camera of `frame`.
pub fn occluded_fraction(frame: &WorldFrame, cams: &[Camera], assets: &ModelAssets) -> Result<f64> {
    let mut hidden = 0usize;
    let mut total = 0usize;
    for cam in cams {
        let state = pose_state(&camera_pose(frame, cam, assets)?, &assets.skeleton, cam)?;
        let vis = visibility_state(&state, &assets.skeleton, &assets.proxies, &camera_occluders(frame, cam), assets.delta_occ)?;
        hidden += vis.iter().filter(|v| !**v).count();
        total += vis.len();
    }
    Ok(hidden as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handmodel::{forward_kinematics, CorpusConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assets() -> ModelAssets {
        ModelAssets::default_with(500.0, &CorpusConfig { samples: 500, noise: 0.12 }, 3).unwrap()
    }

    #[test]
    fn rig_cameras_face_the_origin() {
        let cfg = WorldConfig::default();
        let cams = camera_rig(&cfg);
        assert_eq!(cams.len(), 8);
        for c in &cams {
            c.validate().unwrap();
            assert!((c.center().norm() - cfg.rig_radius).abs() < 1e-9);
            let o = c.world_to_camera(&Vector3::zeros());
            assert!(o.x.abs() < 1e-9 && o.y.abs() < 1e-9 && (o.z - cfg.rig_radius).abs() < 1e-9);
        }
    }

    #[test]
    fn camera_poses_agree_in_the_world_frame() {
        let a = assets();
        let cfg = WorldConfig::default();
        let cams = camera_rig(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = sample_frame(0, &cfg, &cams, &a, 69.96, &mut rng).unwrap();
        let (_, world) = world_state(&frame, &cams, &a).unwrap();
        for cam in &cams {
            let kp = forward_kinematics(&camera_pose(&frame, cam, &a).unwrap(), &a.skeleton, cam).unwrap();
            for (p, w) in kp.iter().zip(&world) {
                assert!((cam.camera_to_world(p) - w).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn covering_occluders_hide_everything() {
        let a = assets();
        let cfg = WorldConfig::default();
        let cams = camera_rig(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frame = sample_frame(0, &cfg, &cams, &a, 69.96, &mut rng).unwrap();
        let state = pose_state(&camera_pose(&frame, &cams[0], &a).unwrap(), &a.skeleton, &cams[0]).unwrap();
        let occ = covering_occluders(&state, 20.0);
        let vis = visibility_state(&state, &a.skeleton, &a.proxies, &occ, a.delta_occ).unwrap();
        assert!(vis.iter().all(|v| !v));
    }

    #[test]
    fn unreachable_rig_is_rejected() {
        let a = assets();
        let cfg = WorldConfig {
            rig_radius: 30.0,
            rig_height: 0.0,
            ..WorldConfig::default()
        };
        let cams = camera_rig(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(sample_hands(&cfg, &cams, &a, 69.96, &mut rng), Err(Error::Config(_))));
    }
}

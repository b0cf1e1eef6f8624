//! Plausible pose annotations for a ground-truth pose.
//!
//! A candidate is plausible when the joints visible in the ground truth
//! stay visible and project within a pixel threshold of their ground-truth
//! positions, the occluded joints stay occluded, both hands lie inside the
//! PCA prior bound, and the hands do not collide. [`generate_annotations`]
//! grows a set of such poses by perturbation and rejection;
//! [`verify_set`] re-checks a set with an independently written checker.

mod generate;
mod plausibility;
mod verify;

pub use generate::{generate_annotations, perturb, AnnotationSet};
pub use plausibility::{check_plausibility, PlausibilityConfig, PlausibilityReport, Reference, Scene};
pub use verify::verify_set;

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::handmodel::{
        curl_articulation, mirror_articulation, set_articulation, Camera, CorpusConfig, HandParams,
        ModelAssets, Occluder, PoseParams,
    };

    pub fn assets() -> ModelAssets {
        ModelAssets::default_with(500.0, &CorpusConfig::default(), 17).unwrap()
    }

    pub fn camera() -> Camera {
        Camera::new([500.0, 500.0], [320.0, 240.0])
    }

    /// Two relaxed hands side by side, 500 mm in front of the camera.
    pub fn two_hands_apart(assets: &ModelAssets) -> Vec<f64> {
        let layout = assets.skeleton.layout();
        let art = curl_articulation(&[0.3; 5], &[0.0, 0.1, 0.0, -0.08, -0.15]);
        let mut right = HandParams::identity(&layout, [220.0, 200.0], 1.0);
        let mut left = HandParams::identity(&layout, [420.0, 200.0], 1.0);
        set_articulation(&mut right, &art);
        set_articulation(&mut left, &mirror_articulation(&art));
        PoseParams { hands: vec![right, left] }.flatten()
    }

    /// Sphere 150 mm in front of the right hand's fingers.
    pub fn finger_occluder() -> Occluder {
        // fingers extend along +y from the root at (-50, -20, 500)
        Occluder {
            center: [-50.0 * 0.7, 40.0 * 0.7, 350.0],
            radius: 45.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::handmodel::{forward_kinematics, PoseParams};

    fn small_cfg() -> PlausibilityConfig {
        PlausibilityConfig {
            iterations: 3,
            population_cap: 20,
            proposals_per_seed: 4,
            ..PlausibilityConfig::default()
        }
    }

    #[test]
    fn ground_truth_is_plausible() {
        let assets = assets();
        let scene = Scene::new(camera());
        let gt = two_hands_apart(&assets);
        let r = check_plausibility(&gt, &gt, &scene, &assets, &PlausibilityConfig::default()).unwrap();
        assert!(r.plausible(), "{r:?}");
        assert_eq!(r.max_pixel_error, 0.0);
    }

    #[test]
    fn displaced_joint_fails_pixel_criterion() {
        let assets = assets();
        let scene = Scene::new(camera());
        let gt = two_hands_apart(&assets);
        let layout = assets.skeleton.layout();
        let mut psi = gt.clone();
        // swing the right index base joint sideways
        let base = layout.theta_index(0, 4, 0);
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), 1.2);
        psi[base..base + 6].copy_from_slice(&crate::handmodel::matrix_to_rot6d(r.matrix()));
        let cam = camera();
        let project = |p: &[f64]| {
            let params = PoseParams::from_flat(&layout, p).unwrap();
            cam.project_all(&forward_kinematics(&params, &assets.skeleton, &cam).unwrap()).unwrap()
        };
        let (a, b) = (project(&gt), project(&psi));
        let moved = a.iter().zip(&b).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).fold(0.0, f64::max);
        assert!(moved > 50.0, "oracle displacement {moved}");
        let report = check_plausibility(&psi, &gt, &scene, &assets, &PlausibilityConfig::default()).unwrap();
        assert!(!report.pixels_ok);
        assert!(!report.plausible());
        assert!((report.max_pixel_error - moved).abs() < 1e-9 || report.newly_hidden > 0);
    }

    #[test]
    fn interpenetrating_hands_fail_collision_criterion() {
        let assets = assets();
        let scene = Scene::new(camera());
        let gt = two_hands_apart(&assets);
        let layout = assets.skeleton.layout();
        let mut psi = gt.clone();
        psi[layout.t_index(1)] = psi[layout.t_index(0)] + 10.0;
        let r = check_plausibility(&psi, &gt, &scene, &assets, &PlausibilityConfig::default()).unwrap();
        assert!(!r.collision_free);
        assert!(r.colliding_pairs > 0);
        assert!(!r.plausible());
    }

    #[test]
    fn generation_is_deterministic_and_verified() {
        let assets = assets();
        let mut scene = Scene::new(camera());
        scene.occluders.push(finger_occluder());
        let gt = two_hands_apart(&assets);
        let cfg = small_cfg();
        let a = generate_annotations(&gt, &scene, &assets, &cfg, "f0", 3).unwrap();
        let b = generate_annotations(&gt, &scene, &assets, &cfg, "f0", 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.annotations[0], gt);
        assert!(a.len() > 1 && a.len() <= cfg.population_cap);
        assert!(!a.warning);
        assert!(verify_set(&a, &gt, &scene, &assets, &cfg));
        let reference = Reference::new(&gt, &scene, &assets, &cfg).unwrap();
        assert!(a.annotations.iter().all(|p| reference.check(p).plausible()));
    }

    #[test]
    fn verify_rejects_doubled_scale_and_accepts_empty() {
        let assets = assets();
        let scene = Scene::new(camera());
        let gt = two_hands_apart(&assets);
        let cfg = small_cfg();
        let mut set = generate_annotations(&gt, &scene, &assets, &cfg, "f1", 4).unwrap();
        assert!(verify_set(&set, &gt, &scene, &assets, &cfg));
        let layout = assets.skeleton.layout();
        let last = set.annotations.len() - 1;
        set.annotations[last][layout.s_index(0)] *= 2.0;
        assert!(!verify_set(&set, &gt, &scene, &assets, &cfg));
        set.annotations.clear();
        assert!(verify_set(&set, &gt, &scene, &assets, &cfg));
    }

    #[test]
    fn implausible_ground_truth_is_refused() {
        let assets = assets();
        let scene = Scene::new(camera());
        let layout = assets.skeleton.layout();
        let mut gt = two_hands_apart(&assets);
        gt[layout.t_index(1)] = gt[layout.t_index(0)];
        assert!(generate_annotations(&gt, &scene, &assets, &small_cfg(), "bad", 0).is_err());
    }

    #[test]
    fn impossible_threshold_returns_ground_truth_with_warning() {
        let assets = assets();
        let scene = Scene::new(camera());
        let gt = two_hands_apart(&assets);
        let cfg = PlausibilityConfig {
            pixel_threshold: 1e-9,
            ..small_cfg()
        };
        let set = generate_annotations(&gt, &scene, &assets, &cfg, "tight", 1).unwrap();
        assert!(set.warning);
        assert_eq!(set.annotations, vec![gt]);
    }
}

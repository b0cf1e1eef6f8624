use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::handmodel::{
    articulation, collision_state, pose_state, visibility_state, Camera, ModelAssets, Occluder,
    PoseParams,
};

/// Thresholds and search settings for plausible-annotation generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityConfig {
    /// Maximum 2D deviation (camera pixels) of a visible joint.
    pub pixel_threshold: f64,
    /// Squared-Mahalanobis bound per hand; `None` uses the prior's 0.99
    /// chi-square quantile.
    pub pca_threshold: Option<f64>,
    pub iterations: usize,
    pub population_cap: usize,
    pub proposals_per_seed: usize,
    /// Articulation rotations of one hand changed by each proposal.
    pub rotations_per_proposal: usize,
    /// Gaussian noise on every articulation 6D entry.
    pub perturb_std_rot: f64,
    /// Relative Gaussian noise on the perspective scale `s`.
    pub perturb_std_scale: f64,
}

impl Default for PlausibilityConfig {
    fn default() -> Self {
        PlausibilityConfig {
            pixel_threshold: 5.0,
            pca_threshold: None,
            iterations: 20,
            population_cap: 100,
            proposals_per_seed: 8,
            rotations_per_proposal: 3,
            perturb_std_rot: 0.1,
            perturb_std_scale: 0.02,
        }
    }
}

impl PlausibilityConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.pixel_threshold, self.perturb_std_rot, self.perturb_std_scale]
            .iter()
            .all(|x| *x > 0.0 && x.is_finite());
        if !positive || self.pca_threshold.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("plausibility thresholds and noise levels must be positive".into()));
        }
        if self.population_cap == 0 || self.proposals_per_seed == 0 || self.rotations_per_proposal == 0 {
            return Err(Error::Config("population_cap, proposals_per_seed and rotations_per_proposal must be positive".into()));
        }
        Ok(())
    }

    pub fn pca_threshold_for(&self, assets: &ModelAssets) -> f64 {
        self.pca_threshold
            .unwrap_or_else(|| assets.prior.chi2_threshold(0.99))
    }

    /// Hex SHA-256 of the serialized settings.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Scene a pose is observed in: the camera and any non-hand occluders
/// (camera frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: Camera,
    pub occluders: Vec<Occluder>,
}

impl Scene {
    pub fn new(camera: Camera) -> Self {
        Scene {
            camera,
            occluders: Vec::new(),
        }
    }
}

/// Outcome of the four plausibility criteria for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityReport {
    /// False when the candidate is not a usable pose at all (degenerate
    /// rotation, non-positive scale, keypoint behind the camera).
    pub valid: bool,
    pub pixels_ok: bool,
    pub occlusion_ok: bool,
    pub prior_ok: bool,
    pub collision_free: bool,
    /// Largest 2D deviation over joints visible in the ground truth.
    pub max_pixel_error: f64,
    /// Ground-truth-visible joints that became occluded.
    pub newly_hidden: usize,
    /// Ground-truth-occluded joints that became visible.
    pub newly_visible: usize,
    pub mahalanobis: Vec<f64>,
    pub colliding_pairs: usize,
}

impl PlausibilityReport {
    pub fn plausible(&self) -> bool {
        self.valid && self.pixels_ok && self.occlusion_ok && self.prior_ok && self.collision_free
    }

    fn invalid() -> Self {
        PlausibilityReport {
            valid: false,
            pixels_ok: false,
            occlusion_ok: false,
            prior_ok: false,
            collision_free: false,
            max_pixel_error: f64::INFINITY,
            newly_hidden: 0,
            newly_visible: 0,
            mahalanobis: Vec::new(),
            colliding_pairs: 0,
        }
    }
}

/// Ground-truth projections and visibility, computed once and reused for
/// every candidate.
pub struct Reference<'a> {
    pub assets: &'a ModelAssets,
    pub scene: &'a Scene,
    pub psi_gt: Vec<f64>,
    pub pixels: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
    pca_threshold: f64,
    pixel_threshold: f64,
}

impl<'a> Reference<'a> {
    pub fn new(psi_gt: &[f64], scene: &'a Scene, assets: &'a ModelAssets, cfg: &PlausibilityConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = assets.skeleton.layout();
        let params = PoseParams::from_flat(&layout, psi_gt)?;
        params.validate()?;
        let state = pose_state(&params, &assets.skeleton, &scene.camera)?;
        let pixels = scene.camera.project_all(&state.keypoints())?;
        let visible = visibility_state(&state, &assets.skeleton, &assets.proxies, &scene.occluders, assets.delta_occ)?;
        Ok(Reference {
            assets,
            scene,
            psi_gt: psi_gt.to_vec(),
            pixels,
            visible,
            pca_threshold: cfg.pca_threshold_for(assets),
            pixel_threshold: cfg.pixel_threshold,
        })
    }

    pub fn check(&self, psi: &[f64]) -> PlausibilityReport {
        self.try_check(psi).unwrap_or_else(|_| PlausibilityReport::invalid())
    }

    fn try_check(&self, psi: &[f64]) -> Result<PlausibilityReport> {
        let skel = &self.assets.skeleton;
        let params = PoseParams::from_flat(&skel.layout(), psi)?;
        params.validate()?;
        let state = pose_state(&params, skel, &self.scene.camera)?;
        let visible = visibility_state(&state, skel, &self.assets.proxies, &self.scene.occluders, self.assets.delta_occ)?;
        let pixels = self.scene.camera.project_all(&state.keypoints())?;

        let mut max_err: f64 = 0.0;
        let (mut hidden, mut revealed) = (0, 0);
        for i in 0..pixels.len() {
            if self.visible[i] {
                let du = pixels[i][0] - self.pixels[i][0];
                let dv = pixels[i][1] - self.pixels[i][1];
                max_err = max_err.max(du.hypot(dv));
                if !visible[i] {
                    hidden += 1;
                }
            } else if visible[i] {
                revealed += 1;
            }
        }
        let mahalanobis = params
            .hands
            .iter()
            .enumerate()
            .map(|(h, hand)| Ok(self.assets.prior.mahalanobis(h, &articulation(hand)?)))
            .collect::<Result<Vec<f64>>>()?;
        let coll = collision_state(&state, skel, &self.assets.proxies);
        Ok(PlausibilityReport {
            valid: true,
            pixels_ok: max_err <= self.pixel_threshold && hidden == 0,
            occlusion_ok: revealed == 0,
            prior_ok: mahalanobis.iter().all(|m| *m <= self.pca_threshold),
            collision_free: !coll.colliding,
            max_pixel_error: max_err,
            newly_hidden: hidden,
            newly_visible: revealed,
            mahalanobis,
            colliding_pairs: coll.pairs.len(),
        })
    }
}

/// Evaluate the four criteria for `psi` against `psi_gt`:
/// visible joints stay visible and within the pixel threshold, occluded
/// joints stay occluded, each hand lies inside the prior bound, and the
/// hands do not collide.
pub fn check_plausibility(
    psi: &[f64],
    psi_gt: &[f64],
    scene: &Scene,
    assets: &ModelAssets,
    cfg: &PlausibilityConfig,
) -> Result<PlausibilityReport> {
    Ok(Reference::new(psi_gt, scene, assets, cfg)?.check(psi))
}

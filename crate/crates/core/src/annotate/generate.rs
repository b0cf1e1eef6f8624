use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PlausibilityConfig, Reference, Scene};
use crate::error::{Error, Result};
use crate::handmodel::{canonical_rot6d, ModelAssets, PoseLayout};

/// Plausible annotations of one frame. The ground truth is always the
/// first member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub frame_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub annotations: Vec<Vec<f64>>,
    /// Set when no proposal was ever accepted.
    pub warning: bool,
}

impl AnnotationSet {
    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }
}

/// Gaussian proposal around `seed`. One hand is chosen; noise is added to
/// every 6D entry of `rotations_per_proposal` of its articulation rotations
/// (re-orthonormalized afterwards) and its scale changes by a relative
/// Gaussian step. Global rotation, shape and root pixel position are kept.
pub fn perturb<R: Rng>(seed: &[f64], layout: &PoseLayout, cfg: &PlausibilityConfig, rng: &mut R) -> Option<Vec<f64>> {
    let mut psi = seed.to_vec();
    let h = rng.random_range(0..layout.hands);
    let count = cfg.rotations_per_proposal.min(layout.rotations - 1);
    let mut chosen = sample_indices(rng, layout.rotations - 1, count).into_vec();
    chosen.sort_unstable();
    for r in chosen {
        let base = layout.theta_index(h, r + 1, 0);
        let mut a = [0.0; 6];
        for (k, ak) in a.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(rng);
            *ak = psi[base + k] + cfg.perturb_std_rot * e;
        }
        psi[base..base + 6].copy_from_slice(&canonical_rot6d(&a).ok()?);
    }
    let e: f64 = StandardNormal.sample(rng);
    let s = &mut psi[layout.s_index(h)];
    *s *= 1.0 + cfg.perturb_std_scale * e;
    (*s > 0.0).then_some(psi)
}

/// Grow a population of plausible poses from `psi_gt` by repeated
/// perturbation and rejection.
///
/// Every iteration draws `proposals_per_seed` proposals around each member
/// of the population, keeps those that pass the plausibility check, and
/// merges them into the population, which is then thinned uniformly to
/// `population_cap` (the ground truth is never dropped).
pub fn generate_annotations(
    psi_gt: &[f64],
    scene: &Scene,
    assets: &ModelAssets,
    cfg: &PlausibilityConfig,
    frame_id: &str,
    seed: u64,
) -> Result<AnnotationSet> {
    let reference = Reference::new(psi_gt, scene, assets, cfg)?;
    let own = reference.check(psi_gt);
    if !own.plausible() {
        return Err(Error::InvalidPose(format!(
            "frame {frame_id}: ground truth fails its own plausibility check ({own:?})"
        )));
    }
    let layout = assets.skeleton.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut population: Vec<Vec<f64>> = vec![psi_gt.to_vec()];
    let mut accepted = 0usize;
    for _ in 0..cfg.iterations {
        let mut fresh = Vec::new();
        for member in &population {
            for _ in 0..cfg.proposals_per_seed {
                if let Some(p) = perturb(member, &layout, cfg, &mut rng) {
                    if reference.check(&p).plausible() {
                        fresh.push(p);
                    }
                }
            }
        }
        accepted += fresh.len();
        let mut rest: Vec<Vec<f64>> = population.drain(1..).chain(fresh).collect();
        let room = cfg.population_cap - 1;
        if rest.len() > room {
            let mut keep = sample_indices(&mut rng, rest.len(), room).into_vec();
            keep.sort_unstable();
            rest = keep.into_iter().map(|i| std::mem::take(&mut rest[i])).collect();
        }
        population.extend(rest);
    }
    if accepted == 0 {
        log::warn!("frame {frame_id}: no plausible proposal accepted; keeping the ground truth only");
    }
    Ok(AnnotationSet {
        frame_id: frame_id.into(),
        config_hash: cfg.hash(),
        seed,
        annotations: population,
        warning: accepted == 0,
    })
}

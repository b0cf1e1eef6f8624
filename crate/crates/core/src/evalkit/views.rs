use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{aligned_ambiguity_std, mpjpe, Alignment, JointLayout, JointSet};
use crate::error::{Error, Result};
use crate::handmodel::Camera;

/// One frame as seen from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub samples: Vec<JointSet>,
    pub mode: JointSet,
    pub gt: JointSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewFrames {
    pub camera_id: String,
    pub frames: Vec<FrameEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub camera_id: String,
    /// Mean over frames of the sample ambiguity (mm).
    pub ambiguity: f64,
    /// Mean over frames of the mode's MPJPE (mm).
    pub mode_mpjpe: f64,
    /// `mode_mpjpe` minus the lowest `mode_mpjpe` over cameras.
    pub regret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSelectConfig {
    /// Alignment applied to samples before measuring their spread.
    pub ambiguity_alignment: Alignment,
    pub regret_alignment: Alignment,
}

impl Default for ViewSelectConfig {
    fn default() -> Self {
        ViewSelectConfig {
            ambiguity_alignment: Alignment::RightRootRelative,
            regret_alignment: Alignment::RightRootRelative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSelection {
    /// In input order.
    pub scores: Vec<ViewScore>,
    /// Camera indices by ascending ambiguity; ties keep input order.
    pub ranking: Vec<usize>,
}

impl ViewSelection {
    pub fn best(&self) -> &ViewScore {
        &self.scores[self.ranking[0]]
    }

    pub fn worst(&self) -> &ViewScore {
        &self.scores[*self.ranking.last().expect("at least two cameras")]
    }

    pub fn mean_regret(&self) -> f64 {
        self.scores.iter().map(|s| s.regret).sum::<f64>() / self.scores.len() as f64
    }
}

/// Rank cameras by how ambiguous their samples are and report the regret
/// of each camera's mode estimate.
pub fn select_view(views: &[ViewFrames], cfg: &ViewSelectConfig, layout: &JointLayout) -> Result<ViewSelection> {
    if views.len() < 2 {
        return Err(Error::UndefinedInput("view selection needs at least two cameras".into()));
    }
    let mut scores = Vec::with_capacity(views.len());
    for v in views {
        if v.frames.is_empty() {
            return Err(Error::UndefinedInput(format!("camera {} has no frames", v.camera_id)));
        }
        let n = v.frames.len() as f64;
        let mut amb = 0.0;
        let mut err = 0.0;
        for f in &v.frames {
            amb += aligned_ambiguity_std(&f.samples, cfg.ambiguity_alignment, layout)?;
            err += mpjpe(&f.mode, &f.gt, cfg.regret_alignment, layout)?;
        }
        scores.push(ViewScore {
            camera_id: v.camera_id.clone(),
            ambiguity: amb / n,
            mode_mpjpe: err / n,
            regret: 0.0,
        });
    }
    let best = scores.iter().map(|s| s.mode_mpjpe).fold(f64::INFINITY, f64::min);
    for s in &mut scores {
        s.regret = s.mode_mpjpe - best;
    }
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| scores[a].ambiguity.total_cmp(&scores[b].ambiguity));
    Ok(ViewSelection { scores, ranking })
}

/// Joint positions moved from a camera's frame into the world frame.
pub fn camera_to_world(set: &[[f64; 3]], cam: &Camera) -> JointSet {
    set.iter()
        .map(|p| {
            let w = cam.camera_to_world(&Vector3::from(*p));
            [w.x, w.y, w.z]
        })
        .collect()
}

/// Axis-aligned Gaussian of one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGaussian {
    pub mean: [f64; 3],
    pub var: [f64; 3],
}

/// Per-axis variance floor (mm^2) applied before inverting.
pub const MIN_VARIANCE: f64 = 1e-6;

/// Per-joint mean and per-axis population variance of `samples`.
pub fn fit_gaussians(samples: &[JointSet]) -> Result<Vec<JointGaussian>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::UndefinedInput("cannot fit a Gaussian to no samples".into()))?;
    let n = samples.len() as f64;
    Ok((0..first.len())
        .map(|j| {
            let mut g = JointGaussian {
                mean: [0.0; 3],
                var: [0.0; 3],
            };
            for c in 0..3 {
                g.mean[c] = samples.iter().map(|s| s[j][c]).sum::<f64>() / n;
                g.var[c] = samples.iter().map(|s| (s[j][c] - g.mean[c]).powi(2)).sum::<f64>() / n;
            }
            g
        })
        .collect())
}

/// Product of two axis-aligned Gaussians.
pub fn fuse(a: &JointGaussian, b: &JointGaussian) -> JointGaussian {
    let mut out = JointGaussian {
        mean: [0.0; 3],
        var: [0.0; 3],
    };
    for c in 0..3 {
        let pa = 1.0 / a.var[c].max(MIN_VARIANCE);
        let pb = 1.0 / b.var[c].max(MIN_VARIANCE);
        out.var[c] = 1.0 / (pa + pb);
        out.mean[c] = (pa * a.mean[c] + pb * b.mean[c]) * out.var[c];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoFusion {
    pub view_a: Vec<JointGaussian>,
    pub view_b: Vec<JointGaussian>,
    pub fused: Vec<JointGaussian>,
    /// Mean over joints of the fused variance trace (mm^2); lower is
    /// better.
    pub score: f64,
}

/// Fuse two views' samples, both already in the world frame.
pub fn stereo_fuse(samples_a: &[JointSet], samples_b: &[JointSet]) -> Result<StereoFusion> {
    let view_a = fit_gaussians(samples_a)?;
    let view_b = fit_gaussians(samples_b)?;
    if view_a.len() != view_b.len() {
        return Err(Error::Dimension("views disagree on joint count".into()));
    }
    let fused: Vec<JointGaussian> = view_a.iter().zip(&view_b).map(|(a, b)| fuse(a, b)).collect();
    let score = fused.iter().map(|g| g.var.iter().sum::<f64>()).sum::<f64>() / fused.len() as f64;
    Ok(StereoFusion {
        view_a,
        view_b,
        fused,
        score,
    })
}

/// Mean over joints of the variance trace of one view.
pub fn variance_score(gaussians: &[JointGaussian]) -> f64 {
    gaussians.iter().map(|g| g.var.iter().sum::<f64>()).sum::<f64>() / gaussians.len() as f64
}

/// Every camera pair ranked by fused score (ascending); inputs are per
/// camera world-frame samples of the same frame.
pub fn rank_stereo_pairs(views: &[Vec<JointSet>]) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for a in 0..views.len() {
        for b in a + 1..views.len() {
            out.push((a, b, stereo_fuse(&views[a], &views[b])?.score));
        }
    }
    out.sort_by(|x, y| x.2.total_cmp(&y.2));
    Ok(out)
}

//! Model evaluation over a dataset: samples, modes and annotations turned
//! into joint sets, then scored.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::derive_seed;
use super::dataset::{Dataset, Record, Split};
use super::report::MetricRow;
use super::EvalConfig;
use crate::error::{Error, Result};
use crate::evalkit::{
    aligned_ambiguity_std, camera_to_world, mmd, mpjpe, rank_stereo_pairs, select_view, Alignment,
    FrameEstimate, JointLayout, JointSet, ViewFrames, ViewSelectConfig, ViewSelection,
};
use crate::handmodel::{forward_kinematics, Camera, ModelAssets, PoseParams};
use crate::training::{HandFlowModel, TrainingSample};

/// Camera-frame joints of a flat pose.
pub fn pose_joints(psi: &[f64], assets: &ModelAssets, cam: &Camera) -> Result<JointSet> {
    let params = PoseParams::from_flat(&assets.skeleton.layout(), psi)?;
    Ok(forward_kinematics(&params, &assets.skeleton, cam)?
        .iter()
        .map(|p| [p.x, p.y, p.z])
        .collect())
}

/// Everything needed to score one record, as joint sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordEval {
    pub frame_id: String,
    pub camera_id: String,
    pub camera: Camera,
    pub samples: Vec<JointSet>,
    pub mode: JointSet,
    pub gt: JointSet,
    pub annotations: Vec<JointSet>,
    /// Samples that were not valid poses (e.g. negative scale) and were
    /// dropped.
    pub invalid_samples: usize,
}

/// Draws `n` samples for a record with a stream derived from `seed` and
/// the record key.
pub fn evaluate_record(model: &HandFlowModel, rec: &Record, assets: &ModelAssets, n: usize, seed: u64) -> Result<RecordEval> {
    let cam = &rec.observation.camera;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("sample/{}", rec.key())));
    let poses = model.sample(&rec.observation, n, &mut rng)?;
    let mut samples = Vec::with_capacity(n);
    for p in &poses {
        if let Ok(j) = pose_joints(p, assets, cam) {
            samples.push(j);
        }
    }
    let invalid = n - samples.len();
    if invalid > 0 {
        log::warn!("{}: dropped {invalid} invalid samples of {n}", rec.key());
    }
    let mode = pose_joints(&model.mode(&rec.observation)?, assets, cam)
        .map_err(|e| Error::InvalidPose(format!("{}: mode is not a valid pose: {e}", rec.key())))?;
    let annotations = rec
        .annotations
        .annotations
        .iter()
        .map(|a| pose_joints(a, assets, cam))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordEval {
        frame_id: rec.frame_id.clone(),
        camera_id: rec.camera_id.clone(),
        camera: cam.clone(),
        samples,
        mode,
        gt: rec.joints3d.clone(),
        annotations,
        invalid_samples: invalid,
    })
}

pub fn evaluate_split(model: &HandFlowModel, ds: &Dataset, split: Split, assets: &ModelAssets, n: usize, seed: u64) -> Result<Vec<RecordEval>> {
    ds.split(split).map(|r| evaluate_record(model, r, assets, n, seed)).collect()
}

fn row(e: &RecordEval, metric: String, value: f64) -> MetricRow {
    MetricRow {
        frame_id: e.frame_id.clone(),
        camera_id: e.camera_id.clone(),
        metric,
        value,
    }
}

fn need_samples(e: &RecordEval) -> Result<()> {
    if e.samples.len() < 2 {
        return Err(Error::UndefinedInput(format!(
            "{}/{}: fewer than two valid samples",
            e.frame_id, e.camera_id
        )));
    }
    Ok(())
}

/// Per record and alignment: MMD of the flow samples and of the mode
/// (as a single point) against the annotation set.
///
/// Every value is the square root of the scale-averaged biased MMD².
pub fn mmd_rows(evals: &[RecordEval], cfg: &EvalConfig, layout: &JointLayout) -> Result<Vec<MetricRow>> {
    let mut out = Vec::new();
    for e in evals {
        need_samples(e)?;
        for a in Alignment::ALL {
            let flow = mmd(&e.samples, &e.annotations, &cfg.kernel_scales, a, layout)?;
            let dirac = mmd(std::slice::from_ref(&e.mode), &e.annotations, &cfg.kernel_scales, a, layout)?;
            out.push(row(e, format!("mmd_flow_{}", a.name()), flow));
            out.push(row(e, format!("mmd_mode_{}", a.name()), dirac));
        }
    }
    Ok(out)
}

/// Annotation set against itself: the identical-multiset self-test.
pub fn self_mmd_rows(evals: &[RecordEval], cfg: &EvalConfig, layout: &JointLayout) -> Result<Vec<MetricRow>> {
    let mut out = Vec::new();
    for e in evals {
        for a in Alignment::ALL {
            let v = mmd(&e.annotations, &e.annotations, &cfg.kernel_scales, a, layout)?;
            out.push(row(e, format!("mmd_self_{}", a.name()), v));
        }
    }
    Ok(out)
}

/// Per record and alignment: mode MPJPE against the ground truth, the
/// closest and farthest annotation, and the sample ambiguity.
pub fn mpjpe_rows(evals: &[RecordEval], layout: &JointLayout) -> Result<Vec<MetricRow>> {
    let mut out = Vec::new();
    for e in evals {
        need_samples(e)?;
        for a in Alignment::ALL {
            out.push(row(e, format!("mpjpe_mode_{}", a.name()), mpjpe(&e.mode, &e.gt, a, layout)?));
            let per_annot = e
                .annotations
                .iter()
                .map(|g| mpjpe(&e.mode, g, a, layout))
                .collect::<Result<Vec<f64>>>()?;
            let lo = per_annot.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = per_annot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.push(row(e, format!("mpjpe_mode_closest_{}", a.name()), lo));
            out.push(row(e, format!("mpjpe_mode_farthest_{}", a.name()), hi));
            out.push(row(e, format!("ambiguity_{}", a.name()), aligned_ambiguity_std(&e.samples, a, layout)?));
        }
    }
    Ok(out)
}

/// Cameras of every frame that was seen by all of them, grouped for view
/// selection; frames missing a camera are skipped.
pub fn view_frames(evals: &[RecordEval]) -> Vec<ViewFrames> {
    let mut cams: Vec<String> = Vec::new();
    let mut frames: Vec<String> = Vec::new();
    for e in evals {
        if !cams.contains(&e.camera_id) {
            cams.push(e.camera_id.clone());
        }
        if !frames.contains(&e.frame_id) {
            frames.push(e.frame_id.clone());
        }
    }
    let complete: Vec<&String> = frames
        .iter()
        .filter(|f| cams.iter().all(|c| evals.iter().any(|e| &e.frame_id == *f && &e.camera_id == c)))
        .collect();
    cams.iter()
        .map(|c| ViewFrames {
            camera_id: c.clone(),
            frames: complete
                .iter()
                .map(|f| {
                    let e = evals.iter().find(|e| &e.frame_id == *f && &e.camera_id == c).expect("complete frame");
                    FrameEstimate {
                        samples: e.samples.clone(),
                        mode: e.mode.clone(),
                        gt: e.gt.clone(),
                    }
                })
                .collect(),
        })
        .collect()
}

pub fn view_selection(evals: &[RecordEval], cfg: &EvalConfig, layout: &JointLayout) -> Result<ViewSelection> {
    let views = view_frames(evals);
    let sel = ViewSelectConfig {
        ambiguity_alignment: cfg.ambiguity_alignment,
        regret_alignment: cfg.regret_alignment,
    };
    select_view(&views, &sel, layout)
}

/// One row per camera: ambiguity, mode MPJPE, regret and rank; plus the
/// best stereo pair per frame.
pub fn view_rows(evals: &[RecordEval], cfg: &EvalConfig, layout: &JointLayout) -> Result<(ViewSelection, Vec<MetricRow>)> {
    let sel = view_selection(evals, cfg, layout)?;
    let mut out = Vec::new();
    for (rank, &c) in sel.ranking.iter().enumerate() {
        let s = &sel.scores[c];
        for (metric, value) in [
            ("view_ambiguity", s.ambiguity),
            ("view_mode_mpjpe", s.mode_mpjpe),
            ("view_regret", s.regret),
            ("view_rank", rank as f64),
        ] {
            out.push(MetricRow {
                frame_id: "all".into(),
                camera_id: s.camera_id.clone(),
                metric: metric.into(),
                value,
            });
        }
    }
    let mut frames: Vec<&str> = Vec::new();
    for e in evals {
        if !frames.contains(&e.frame_id.as_str()) {
            frames.push(&e.frame_id);
        }
    }
    for f in frames {
        let views: Vec<&RecordEval> = evals.iter().filter(|e| e.frame_id == f).collect();
        if views.len() < 2 || views.iter().any(|e| e.samples.is_empty()) {
            continue;
        }
        let world: Vec<Vec<JointSet>> = views
            .iter()
            .map(|e| e.samples.iter().map(|s| camera_to_world(s, &e.camera)).collect())
            .collect();
        let (a, b, score) = rank_stereo_pairs(&world)?[0];
        out.push(MetricRow {
            frame_id: f.into(),
            camera_id: format!("{}+{}", views[a].camera_id, views[b].camera_id),
            metric: "stereo_best_score".into(),
            value: score,
        });
    }
    Ok((sel, out))
}

/// Mean negative log-likelihood (pose space) of every annotation.
pub fn mean_nll(model: &HandFlowModel, samples: &[TrainingSample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        if s.annotations.is_empty() {
            continue;
        }
        for lp in model.log_prob(&s.annotations, &s.observation)? {
            total -= lp;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedInput("no annotations to score".into()));
    }
    Ok(total / count as f64)
}

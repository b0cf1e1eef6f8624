use diffcore::{Graph, Tensor};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::losses::{
    graph_decode, graph_loss_detmag, graph_loss_detmag_at_latents, graph_loss_j2d, graph_loss_j3d, graph_loss_mode,
    graph_loss_nll, graph_loss_theta, rows_tensor,
};
use super::{HandFlowModel, Observation};
use crate::error::{Error, Result};
use crate::flow::standard_normal_rows;
use crate::handmodel::HandSkeleton;

/// One training frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub frame_id: String,
    pub observation: Observation,
    /// Flattened pose annotations; may be empty for frames that only carry
    /// joint supervision.
    pub annotations: Vec<Vec<f64>>,
    /// Camera-frame 3D joints (mm).
    pub joints3d: Vec<[f64; 3]>,
    pub mode_annotation_index: usize,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<()> {
        self.observation.validate()?;
        if self.joints3d.len() != self.observation.keypoints() {
            return Err(Error::Data(format!(
                "frame {}: {} 3D joints for {} 2D joints",
                self.frame_id,
                self.joints3d.len(),
                self.observation.keypoints()
            )));
        }
        if !self.annotations.is_empty() && self.mode_annotation_index >= self.annotations.len() {
            return Err(Error::Data(format!(
                "frame {}: mode annotation {} out of {}",
                self.frame_id,
                self.mode_annotation_index,
                self.annotations.len()
            )));
        }
        Ok(())
    }
}

/// Index of the annotation that serves as the mode target for a frame,
/// drawn from a hash of the seed and the frame identifier.
pub fn mode_annotation_index(seed: u64, frame_id: &str, count: usize) -> usize {
    assert!(count > 0, "no annotations to choose from");
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(frame_id.as_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(first) % count as u64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub nll: f64,
    pub detmag: f64,
    pub psi: f64,
    pub j3d: f64,
    pub j2d: f64,
    pub theta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            nll: 1.0,
            detmag: 0.1,
            psi: 1.0,
            j3d: 0.0025,
            j2d: 0.0025,
            theta: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.nll, self.detmag, self.psi, self.j3d, self.j2d, self.theta];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Values of the individual terms and the weighted total. Skipped terms
/// are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub nll: f64,
    pub detmag: f64,
    pub psi: f64,
    pub j3d: f64,
    pub j2d: f64,
    pub theta: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn values(&self) -> [f64; 7] {
        [self.nll, self.detmag, self.psi, self.j3d, self.j2d, self.theta, self.total]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub(crate) fn accumulate(&mut self, other: &LossTerms, w: f64) {
        self.nll += w * other.nll;
        self.detmag += w * other.detmag;
        self.psi += w * other.psi;
        self.j3d += w * other.j3d;
        self.j2d += w * other.j2d;
        self.theta += w * other.theta;
        self.total += w * other.total;
    }
}

pub struct LossOutput {
    pub terms: LossTerms,
    /// Gradients aligned with [`HandFlowModel::tensors`].
    pub grads: Vec<Tensor>,
}

/// Latents at which the determinant term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetMagPoint {
    /// The annotations' latents `f_v^{-1}(psi*)`.
    Annotations,
    /// The two fresh standard-normal latents drawn for the sampled poses.
    #[default]
    Samples,
}

impl DetMagPoint {
    pub fn name(self) -> &'static str {
        match self {
            DetMagPoint::Annotations => "annotations",
            DetMagPoint::Samples => "samples",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "annotations" => Ok(DetMagPoint::Annotations),
            "samples" => Ok(DetMagPoint::Samples),
            _ => Err(Error::Config(format!("unknown detmag point {s:?}"))),
        }
    }
}

/// Settings shared by every loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub skeleton: &'a HandSkeleton,
    pub weights: LossWeights,
    /// At most this many annotations enter the flow terms per evaluation.
    pub annotations_per_step: usize,
    pub detmag_at: DetMagPoint,
}

/// Weighted loss of one sample and its gradient. Draws the annotation
/// subset (when capped) and two fresh latents for the sampled poses.
pub fn total_loss<R: Rng>(
    sample: &TrainingSample,
    model: &HandFlowModel,
    ctx: &LossContext,
    rng: &mut R,
) -> Result<LossOutput> {
    let n = sample.annotations.len();
    let cap = ctx.annotations_per_step.max(1);
    let chosen: Vec<usize> = if n > cap {
        let mut idx = sample_indices(rng, n, cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let latents = standard_normal_rows(2, model.dim(), rng);
    total_loss_with(sample, model, ctx, &chosen, &latents)
}

/// [`total_loss`] with the annotation subset and latents fixed.
pub fn total_loss_with(
    sample: &TrainingSample,
    model: &HandFlowModel,
    ctx: &LossContext,
    chosen: &[usize],
    latents: &[Vec<f64>],
) -> Result<LossOutput> {
    let w = ctx.weights;
    let obs = &sample.observation;
    let mut g = Graph::new();
    let flow = model.flow.bind(&mut g, true);
    let feat = model.features.bind(&mut g, true);
    let input = obs.feature_input();
    let x = g.constant(Tensor::matrix(1, input.len(), input));
    let v = feat.apply(&mut g, x);

    let mut terms = LossTerms::default();
    let mut weighted = Vec::new();

    if !sample.annotations.is_empty() {
        let enc: Vec<Vec<f64>> = chosen
            .iter()
            .map(|&i| model.scaler.encode(&sample.annotations[i]))
            .collect();
        let ann = g.constant(rows_tensor(&enc));
        let nll = graph_loss_nll(&mut g, &flow, ann, v, &model.scaler)?;
        let detmag = match ctx.detmag_at {
            DetMagPoint::Annotations => graph_loss_detmag(&mut g, &flow, ann, v, &model.scaler)?,
            DetMagPoint::Samples => {
                let zs = g.constant(rows_tensor(latents));
                graph_loss_detmag_at_latents(&mut g, &flow, zs, v, &model.scaler)?
            }
        };
        terms.nll = g.value(nll).item();
        terms.detmag = g.value(detmag).item();
        weighted.push((w.nll, nll));
        weighted.push((w.detmag, detmag));
    }

    // evaluation set: the mode and two samples
    let mut z = vec![vec![0.0; model.dim()]];
    z.extend(latents.iter().cloned());
    let zt = g.constant(rows_tensor(&z));
    let (y, _) = flow.forward(&mut g, zt, v)?;
    let psi = graph_decode(&mut g, y, &model.scaler);

    if !sample.annotations.is_empty() {
        let mode = g.slice(psi, 0, 0, 1);
        let target = &sample.annotations[sample.mode_annotation_index];
        let lpsi = graph_loss_mode(&mut g, mode, target);
        terms.psi = g.value(lpsi).item();
        weighted.push((w.psi, lpsi));
    }
    let cam = &obs.camera;
    let j3d = graph_loss_j3d(&mut g, psi, &sample.joints3d, ctx.skeleton, cam);
    let j2d = graph_loss_j2d(&mut g, psi, &obs.joints2d, &obs.visible, ctx.skeleton, cam);
    let theta = graph_loss_theta(&mut g, psi, &ctx.skeleton.layout());
    terms.j3d = g.value(j3d).item();
    terms.j2d = g.value(j2d).item();
    terms.theta = g.value(theta).item();
    weighted.extend([(w.j3d, j3d), (w.j2d, j2d), (w.theta, theta)]);

    let mut total = None;
    for (lambda, term) in weighted {
        if lambda == 0.0 {
            continue;
        }
        let t = g.scale(term, lambda);
        total = Some(match total {
            None => t,
            Some(acc) => g.add(acc, t),
        });
    }
    let total = total.unwrap_or_else(|| g.scalar(0.0));
    terms.total = g.value(total).item();
    if let Some((node, op)) = g.first_non_finite() {
        log::debug!("non-finite value at node {node} ({op})");
    }
    let grads = g.backward(total)?;
    let mut vars = flow.vars();
    vars.extend(feat.vars());
    Ok(LossOutput {
        terms,
        grads: vars.into_iter().map(|var| grads.wrt(var)).collect(),
    })
}

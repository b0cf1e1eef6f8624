use diffcore::{adam_step, AdamConfig, AdamState, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::{total_loss, DetMagPoint, LossContext, LossTerms, LossWeights, TrainingSample};
use super::{HandFlowModel, PoseScaler};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::handmodel::HandSkeleton;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    pub weights: LossWeights,
    pub annotations_per_step: usize,
    pub detmag_at: DetMagPoint,
    /// `0` disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub flow: FlowConfig,
    pub feature_hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            steps: 500,
            batch_size: 4,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            grad_clip: 0.0,
            weights: LossWeights::default(),
            annotations_per_step: 8,
            detmag_at: DetMagPoint::default(),
            checkpoint_every: 0,
            flow: FlowConfig::default(),
            feature_hidden: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.flow.validate()?;
        if self.batch_size == 0 || self.annotations_per_step == 0 || self.feature_hidden == 0 {
            return Err(Error::Config(
                "batch_size, annotations_per_step and feature_hidden must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::Config("lr must be positive and grad_clip non-negative".into()));
        }
        Ok(())
    }
}

/// Batch-mean loss terms after an optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub terms: LossTerms,
}

pub struct TrainOutcome {
    pub model: HandFlowModel,
    pub curve: Vec<LossRecord>,
    /// Step at which a non-finite loss stopped training; `model` then holds
    /// the last finite parameters.
    pub diverged_at: Option<usize>,
}

pub const CURVE_HEADER: &str = "step,nll,detmag,psi,j3d,j2d,theta,total";

pub fn curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in curve {
        out.push_str(&r.step.to_string());
        for v in r.terms.values() {
            out.push(',');
            out.push_str(&format!("{v:e}"));
        }
        out.push('\n');
    }
    out
}

/// A fresh model for `skeleton`, with the scaler fitted on the annotations
/// of `dataset` when there are any.
pub fn initial_model(
    dataset: &[TrainingSample],
    skeleton: &HandSkeleton,
    cfg: &TrainConfig,
) -> Result<HandFlowModel> {
    let mut model = HandFlowModel::new(cfg.flow, cfg.feature_hidden, skeleton.total_keypoints(), cfg.seed)?;
    let rows: Vec<&[f64]> = dataset
        .iter()
        .flat_map(|s| s.annotations.iter().map(|a| a.as_slice()))
        .collect();
    if !rows.is_empty() {
        model.scaler = PoseScaler::fit(&rows)?;
    }
    Ok(model)
}

fn clip(grads: &mut [Tensor], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        for g in grads {
            for x in g.data_mut() {
                *x *= f;
            }
        }
    }
}

/// Minibatch Adam on the weighted loss.
///
/// Starts from `init` when given, otherwise from [`initial_model`]; a run
/// with zero steps returns the pure identity initialization. Samples are
/// visited in seeded shuffled epochs. `on_checkpoint` is called every
/// `checkpoint_every` steps and after the last step.
pub fn train(
    dataset: &[TrainingSample],
    skeleton: &HandSkeleton,
    cfg: &TrainConfig,
    init: Option<HandFlowModel>,
    on_checkpoint: &mut dyn FnMut(usize, &HandFlowModel) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::UndefinedInput("training needs a non-empty dataset".into()));
    }
    for s in dataset {
        s.validate()?;
    }
    let mut model = match init {
        Some(m) => m,
        None if cfg.steps == 0 => {
            HandFlowModel::new(cfg.flow, cfg.feature_hidden, skeleton.total_keypoints(), cfg.seed)?
        }
        None => initial_model(dataset, skeleton, cfg)?,
    };
    if model.dim() != skeleton.layout().dim() {
        return Err(Error::Dimension(format!(
            "flow dimension {} does not match the skeleton's {}",
            model.dim(),
            skeleton.layout().dim()
        )));
    }
    let ctx = LossContext {
        skeleton,
        weights: cfg.weights,
        annotations_per_step: cfg.annotations_per_step,
        detmag_at: cfg.detmag_at,
    };
    let adam = cfg.adam();
    let mut state = AdamState::new(&model.tensors().into_iter().cloned().collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut last_good = model.clone();

    for step in 1..=cfg.steps {
        let mut grads: Vec<Tensor> = model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut terms = LossTerms::default();
        let w = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let sample = &dataset[order[cursor]];
            cursor += 1;
            let out = match total_loss(sample, &model, &ctx, &mut rng) {
                Ok(out) => out,
                Err(Error::FlowNumeric { block }) => {
                    log::warn!("flow block {block} overflowed at step {step}");
                    return Ok(TrainOutcome {
                        model: last_good,
                        curve,
                        diverged_at: Some(step),
                    });
                }
                Err(e) => return Err(e),
            };
            terms.accumulate(&out.terms, w);
            for (acc, g) in grads.iter_mut().zip(&out.grads) {
                for (a, x) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += w * x;
                }
            }
        }
        let finite = terms.is_finite() && grads.iter().all(|g| g.is_finite());
        if !finite {
            log::warn!("non-finite loss at step {step}; keeping the last good parameters");
            return Ok(TrainOutcome {
                model: last_good,
                curve,
                diverged_at: Some(step),
            });
        }
        clip(&mut grads, cfg.grad_clip);
        last_good = model.clone();
        {
            let mut params: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
            adam_step(&mut params, &grads, &mut state, &adam)?;
            for (slot, p) in model.tensors_mut().into_iter().zip(params) {
                *slot = p;
            }
        }
        curve.push(LossRecord { step, terms });
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps {
            on_checkpoint(step, &model)?;
        }
    }
    on_checkpoint(cfg.steps, &model)?;
    Ok(TrainOutcome {
        model,
        curve,
        diverged_at: None,
    })
}

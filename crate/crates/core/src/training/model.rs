use diffcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{extract_features, feature_net, Observation, PoseScaler};
use crate::error::{Error, Result};
use crate::flow::{ConditionedFlow, FlowConfig, Mlp, StoredFlow, StoredTensor};

pub const CHECKPOINT_FORMAT: &str = "handflow.checkpoint.v1";

/// Feature network, conditional flow and pose scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct HandFlowModel {
    pub flow: ConditionedFlow,
    pub features: Mlp,
    pub scaler: PoseScaler,
}

impl HandFlowModel {
    /// Identity-initialized flow, random feature network, identity scaler.
    pub fn new(flow: FlowConfig, feature_hidden: usize, keypoints: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flow_seed = rng.random();
        let features = feature_net(keypoints, feature_hidden, flow.cond_dim, &mut rng);
        Ok(HandFlowModel {
            flow: ConditionedFlow::new(flow, flow_seed)?,
            features,
            scaler: PoseScaler::identity(flow.dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.flow.dim()
    }

    /// Flow tensors followed by feature-network tensors.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.flow.tensors();
        t.extend(self.features.tensors());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.flow.tensors_mut();
        t.extend(self.features.tensors_mut());
        t
    }

    pub fn flow_tensor_count(&self) -> usize {
        self.flow.tensors().len()
    }

    pub fn features_of(&self, obs: &Observation) -> Result<Vec<f64>> {
        extract_features(obs, &self.features)
    }

    /// Pose-space samples for an observation.
    pub fn sample<R: Rng>(&self, obs: &Observation, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let v = self.features_of(obs)?;
        let (ys, _) = self.flow.sample(&v, n, rng)?;
        Ok(ys.iter().map(|y| self.scaler.decode(y)).collect())
    }

    /// Pose-space mode `decode(f_v(0))`.
    pub fn mode(&self, obs: &Observation) -> Result<Vec<f64>> {
        let v = self.features_of(obs)?;
        Ok(self.scaler.decode(&self.flow.mode(&v)?))
    }

    /// Pose-space log-density of each row.
    pub fn log_prob(&self, psi: &[Vec<f64>], obs: &Observation) -> Result<Vec<f64>> {
        let v = self.features_of(obs)?;
        let enc: Vec<Vec<f64>> = psi.iter().map(|p| self.scaler.encode(p)).collect();
        let ld = self.scaler.log_det();
        Ok(self
            .flow
            .log_prob_rows(&enc, &v)?
            .into_iter()
            .map(|l| l - ld)
            .collect())
    }

    pub fn to_checkpoint(&self, config_hash: &str, step: usize) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config_hash: config_hash.into(),
            step,
            flow: self.flow.to_stored(),
            feature_sizes: std::iter::once(self.features.layers[0].input())
                .chain(self.features.layers.iter().map(|l| l.output()))
                .collect(),
            features: self.features.store(),
            scaler: self.scaler.clone(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("unsupported checkpoint format {:?}", c.format)));
        }
        if c.feature_sizes.len() < 2 {
            return Err(Error::Data("feature network needs at least one layer".into()));
        }
        let flow = ConditionedFlow::from_stored(&c.flow)?;
        let mut features = Mlp::new(&c.feature_sizes, false, &mut ChaCha8Rng::seed_from_u64(0));
        features.restore(&c.features)?;
        if c.scaler.dim() != flow.dim() || c.scaler.std.len() != flow.dim() {
            return Err(Error::Data("scaler dimension does not match the flow".into()));
        }
        if c.feature_sizes.last() != Some(&flow.config.cond_dim) {
            return Err(Error::Data("feature width does not match the flow conditioning".into()));
        }
        Ok(HandFlowModel {
            flow,
            features,
            scaler: c.scaler.clone(),
        })
    }
}

/// Serialized model; JSON round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub step: usize,
    pub flow: StoredFlow,
    pub feature_sizes: Vec<usize>,
    pub features: Vec<StoredTensor>,
    pub scaler: PoseScaler,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("checkpoint: {e}")))
    }
}

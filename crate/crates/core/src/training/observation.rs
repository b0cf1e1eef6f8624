use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Mlp;
use crate::handmodel::Camera;

/// Value stored in place of a masked-out joint coordinate.
pub const MASKED: f64 = -1.0;

/// Conditioning input of one frame: 2D joints, visibility and camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Pixels; occluded entries hold [`MASKED`].
    pub joints2d: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
    pub camera: Camera,
}

impl Observation {
    /// Replaces occluded joints by the sentinel.
    pub fn new(joints2d: Vec<[f64; 2]>, visible: Vec<bool>, camera: Camera) -> Self {
        let joints2d = joints2d
            .into_iter()
            .zip(&visible)
            .map(|(p, &vis)| if vis { p } else { [MASKED, MASKED] })
            .collect();
        Observation {
            joints2d,
            visible,
            camera,
        }
    }

    pub fn keypoints(&self) -> usize {
        self.joints2d.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints2d.len() != self.visible.len() {
            return Err(Error::Data(format!(
                "{} joints but {} visibility flags",
                self.joints2d.len(),
                self.visible.len()
            )));
        }
        let bad = self
            .joints2d
            .iter()
            .zip(&self.visible)
            .any(|(p, &v)| v && !(p[0].is_finite() && p[1].is_finite()));
        if bad {
            return Err(Error::Data("visible joint with non-finite position".into()));
        }
        self.camera.validate()
    }

    /// Feature-network input: normalized coordinates times the mask, then
    /// the mask. Masked joints contribute exact zeros whatever they store.
    ///
    /// Coordinates are taken about the principal point and divided by the
    /// larger of its components, so a centered square crop spanning the
    /// image maps onto `[-1, 1]`.
    pub fn feature_input(&self) -> Vec<f64> {
        let [cx, cy] = self.camera.principal_point;
        let half = cx.max(cy).max(1.0);
        let mut out = Vec::with_capacity(3 * self.keypoints());
        for (p, &v) in self.joints2d.iter().zip(&self.visible) {
            if v {
                out.push((p[0] - cx) / half);
                out.push((p[1] - cy) / half);
            } else {
                out.extend([0.0, 0.0]);
            }
        }
        out.extend(self.visible.iter().map(|&v| if v { 1.0 } else { 0.0 }));
        out
    }
}

/// Feature network `[3K] -> hidden -> out` with a tanh hidden layer.
pub fn feature_net<R: Rng>(keypoints: usize, hidden: usize, out: usize, rng: &mut R) -> Mlp {
    Mlp::new(&[3 * keypoints, hidden, out], false, rng)
}

/// Evaluate the feature network on one observation.
pub fn extract_features(obs: &Observation, net: &Mlp) -> Result<Vec<f64>> {
    let input = obs.feature_input();
    if net.layers.first().map(|l| l.input()) != Some(input.len()) {
        return Err(Error::Dimension(format!(
            "feature network expects {:?} inputs, observation gives {}",
            net.layers.first().map(|l| l.input()),
            input.len()
        )));
    }
    let mut g = diffcore::Graph::new();
    let bound = net.bind(&mut g, false);
    let x = g.constant(diffcore::Tensor::matrix(1, input.len(), input));
    let y = bound.apply(&mut g, x);
    Ok(g.value(y).data().to_vec())
}

//! Pose parameter vectors.
//!
//! Flattening order is fixed: hands in order (right, then left); within a
//! hand the rotations `theta` come first, each as a row-major 3x2 matrix
//! `[a1x, a2x, a1y, a2y, a1z, a2z]`, followed by the shape coefficients
//! `beta`, the root pixel position `t`, and the perspective scale `s`.
//! With the default layout a hand has 16*6 + 10 + 2 + 1 = 109 entries and a
//! two-hand pose 218.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseLayout {
    pub hands: usize,
    /// Rotations per hand, the first one being the global rotation.
    pub rotations: usize,
    pub betas: usize,
}

impl Default for PoseLayout {
    fn default() -> Self {
        PoseLayout {
            hands: 2,
            rotations: 16,
            betas: 10,
        }
    }
}

impl PoseLayout {
    pub fn hand_dim(&self) -> usize {
        6 * self.rotations + self.betas + 3
    }

    pub fn dim(&self) -> usize {
        self.hands * self.hand_dim()
    }

    pub fn hand_offset(&self, hand: usize) -> usize {
        hand * self.hand_dim()
    }

    /// Flat index of rotation `rot`, entry `k` (0..6) of `hand`.
    pub fn theta_index(&self, hand: usize, rot: usize, k: usize) -> usize {
        self.hand_offset(hand) + 6 * rot + k
    }

    pub fn beta_index(&self, hand: usize, j: usize) -> usize {
        self.hand_offset(hand) + 6 * self.rotations + j
    }

    pub fn t_index(&self, hand: usize) -> usize {
        self.hand_offset(hand) + 6 * self.rotations + self.betas
    }

    pub fn s_index(&self, hand: usize) -> usize {
        self.t_index(hand) + 2
    }
}

/// Parameters of one hand: `{theta, beta, t, s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HandParams {
    /// 6D rotations; entry 0 is the global rotation.
    pub theta: Vec<[f64; 6]>,
    pub beta: Vec<f64>,
    /// Root position in pixels.
    pub t: [f64; 2],
    /// Perspective scale; root depth is `reference_focal / s`.
    pub s: f64,
}

impl HandParams {
    pub fn identity(layout: &PoseLayout, t: [f64; 2], s: f64) -> Self {
        HandParams {
            theta: vec![[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]; layout.rotations],
            beta: vec![0.0; layout.betas],
            t,
            s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub hands: Vec<HandParams>,
}

impl PoseParams {
    pub fn layout(&self) -> PoseLayout {
        let h = &self.hands[0];
        PoseLayout {
            hands: self.hands.len(),
            rotations: h.theta.len(),
            betas: h.beta.len(),
        }
    }

    pub fn right(&self) -> &HandParams {
        &self.hands[0]
    }

    pub fn left(&self) -> &HandParams {
        &self.hands[1]
    }

    pub fn from_flat(layout: &PoseLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.dim() {
            return Err(Error::Dimension(format!(
                "pose vector has {} entries, layout needs {}",
                flat.len(),
                layout.dim()
            )));
        }
        let hands = (0..layout.hands)
            .map(|h| {
                let theta = (0..layout.rotations)
                    .map(|r| {
                        let i = layout.theta_index(h, r, 0);
                        let mut a = [0.0; 6];
                        a.copy_from_slice(&flat[i..i + 6]);
                        a
                    })
                    .collect();
                let b0 = layout.beta_index(h, 0);
                let ti = layout.t_index(h);
                HandParams {
                    theta,
                    beta: flat[b0..b0 + layout.betas].to_vec(),
                    t: [flat[ti], flat[ti + 1]],
                    s: flat[layout.s_index(h)],
                }
            })
            .collect();
        Ok(PoseParams { hands })
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().dim());
        for h in &self.hands {
            for a in &h.theta {
                out.extend_from_slice(a);
            }
            out.extend_from_slice(&h.beta);
            out.extend_from_slice(&h.t);
            out.push(h.s);
        }
        out
    }

    /// Finite entries and positive scales.
    pub fn validate(&self) -> Result<()> {
        if !self.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinitePose);
        }
        if let Some((i, h)) = self.hands.iter().enumerate().find(|(_, h)| h.s <= 0.0) {
            return Err(Error::InvalidPose(format!("hand {i} has scale {} <= 0", h.s)));
        }
        Ok(())
    }
}

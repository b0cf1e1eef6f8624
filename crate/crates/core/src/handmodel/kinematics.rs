use nalgebra::{Matrix3, Vector3};

use super::{rot6d_to_matrix, Camera, GaussianProxy, HandParams, HandSkeleton, PoseParams};
use crate::error::{Error, Result};

/// Camera-frame positions and orientations of every keypoint of one hand.
#[derive(Debug, Clone)]
pub struct HandState {
    pub positions: Vec<Vector3<f64>>,
    /// Orientation of each keypoint's frame; children offsets are expressed
    /// in the parent's frame.
    pub frames: Vec<Matrix3<f64>>,
}

#[derive(Debug, Clone)]
pub struct PoseState {
    pub hands: Vec<HandState>,
}

impl PoseState {
    pub fn keypoints(&self) -> Vec<Vector3<f64>> {
        self.hands.iter().flat_map(|h| h.positions.iter().copied()).collect()
    }

    /// Camera-frame center of a proxy.
    pub fn proxy_center(&self, skeleton: &HandSkeleton, proxy: &GaussianProxy) -> Vector3<f64> {
        let chain = &skeleton.hands[proxy.hand];
        let anchor = chain.keypoints[proxy.bone].parent.unwrap_or(proxy.bone);
        let hand = &self.hands[proxy.hand];
        hand.positions[anchor] + hand.frames[anchor] * Vector3::from(proxy.offset)
    }
}

/// Root position: back-project `t` through the camera at depth
/// `reference_focal / s`.
pub fn root_position(hand: &HandParams, skeleton: &HandSkeleton, cam: &Camera) -> Vector3<f64> {
    cam.backproject(hand.t, skeleton.reference_focal / hand.s)
}

fn hand_state(
    hand: &HandParams,
    chain: &super::HandChain,
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> Result<HandState> {
    let rotations = hand
        .theta
        .iter()
        .map(rot6d_to_matrix)
        .collect::<Result<Vec<_>>>()?;
    let n = chain.keypoints.len();
    // articulate in the root frame with the root rotation left out ...
    let mut pos = vec![Vector3::zeros(); n];
    let mut frame = vec![Matrix3::identity(); n];
    for (k, kp) in chain.keypoints.iter().enumerate() {
        if let Some(p) = kp.parent {
            pos[k] = pos[p] + frame[p] * Vector3::from(chain.offset(k, &hand.beta));
            frame[k] = frame[p];
        }
        if let (Some(r), Some(_)) = (kp.rotation, kp.parent) {
            frame[k] *= rotations[r];
        }
    }
    // ... then apply the global rotation and place the root
    let global = rotations[0];
    let root = root_position(hand, skeleton, cam);
    Ok(HandState {
        positions: pos.iter().map(|p| global * p + root).collect(),
        frames: frame.iter().map(|f| global * f).collect(),
    })
}

pub fn pose_state(psi: &PoseParams, skeleton: &HandSkeleton, cam: &Camera) -> Result<PoseState> {
    psi.validate()?;
    if psi.hands.len() != skeleton.hands.len() {
        return Err(Error::Dimension(format!(
            "pose has {} hands, skeleton {}",
            psi.hands.len(),
            skeleton.hands.len()
        )));
    }
    let hands = psi
        .hands
        .iter()
        .zip(&skeleton.hands)
        .map(|(h, chain)| hand_state(h, chain, skeleton, cam))
        .collect::<Result<Vec<_>>>()?;
    Ok(PoseState { hands })
}

/// Camera-frame keypoints (mm), hands concatenated in order.
pub fn forward_kinematics(
    psi: &PoseParams,
    skeleton: &HandSkeleton,
    cam: &Camera,
) -> Result<Vec<Vector3<f64>>> {
    Ok(pose_state(psi, skeleton, cam)?.keypoints())
}

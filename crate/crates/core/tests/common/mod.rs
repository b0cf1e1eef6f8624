#![allow(dead_code)]

use handflow::flow::FlowConfig;
use handflow::handmodel::{
    axis_angle_to_matrix, forward_kinematics, matrix_to_rot6d, Camera, HandChain, HandSkeleton,
    Keypoint, PoseParams,
};
use handflow::training::{HandFlowModel, Observation, PoseScaler, TrainingSample};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One hand, one rotation, one shape coefficient, five keypoints: d = 10.
pub fn toy_skeleton() -> HandSkeleton {
    let kp = |name: &str, parent, rotation, off: [f64; 3], dir: [f64; 3]| Keypoint {
        name: name.into(),
        parent,
        rotation,
        rest_offset: off,
        shape_dirs: vec![dir],
    };
    HandSkeleton {
        hands: vec![HandChain {
            keypoints: vec![
                kp("root", None, Some(0), [0.0; 3], [0.0; 3]),
                kp("a", Some(0), None, [0.0, 30.0, 0.0], [0.0, 2.0, 0.0]),
                kp("b", Some(1), None, [5.0, 20.0, 0.0], [0.0, 1.0, 0.0]),
                kp("c", Some(0), None, [20.0, 10.0, 5.0], [1.0, 0.0, 0.0]),
                kp("d", Some(3), None, [10.0, 10.0, -8.0], [0.5, 0.5, 0.0]),
            ],
        }],
        betas: 1,
        reference_focal: 500.0,
    }
}

pub fn toy_camera() -> Camera {
    Camera::new([500.0, 500.0], [112.0, 112.0])
}

pub fn toy_pose(rng: &mut impl Rng) -> Vec<f64> {
    let w = Vector3::new(
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.6..0.6),
    );
    let mut psi = matrix_to_rot6d(&axis_angle_to_matrix(&w)).to_vec();
    psi.push(rng.random_range(-0.5..0.5));
    psi.push(112.0 + rng.random_range(-20.0..20.0));
    psi.push(112.0 + rng.random_range(-20.0..20.0));
    psi.push(1.0 + rng.random_range(-0.1..0.1));
    psi
}

/// A frame whose observation and 3D joints come from `gt`, annotated with
/// `gt` and `extra` noisy copies.
pub fn toy_sample(id: &str, gt: &[f64], extra: usize, visible: &[bool], rng: &mut impl Rng) -> TrainingSample {
    let skel = toy_skeleton();
    let cam = toy_camera();
    let layout = skel.layout();
    let kps = forward_kinematics(&PoseParams::from_flat(&layout, gt).unwrap(), &skel, &cam).unwrap();
    let pix: Vec<[f64; 2]> = kps.iter().map(|p| cam.project(p).unwrap()).collect();
    let mut annotations = vec![gt.to_vec()];
    for _ in 0..extra {
        annotations.push(gt.iter().map(|x| x + rng.random_range(-0.05..0.05)).collect());
    }
    TrainingSample {
        frame_id: id.into(),
        observation: Observation::new(pix, visible.to_vec(), cam),
        annotations,
        joints3d: kps.iter().map(|p| [p.x, p.y, p.z]).collect(),
        mode_annotation_index: 0,
    }
}

pub fn toy_flow_config() -> FlowConfig {
    FlowConfig {
        dim: 10,
        cond_dim: 4,
        blocks: 2,
        hidden: 8,
        log_scale_clamp: 8.0,
    }
}

/// Toy model with every parameter jittered away from the identity init.
pub fn jittered_toy_model(seed: u64) -> HandFlowModel {
    let mut model = HandFlowModel::new(toy_flow_config(), 6, 5, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for t in model.tensors_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    let mut mean = toy_pose(&mut rng);
    mean[7] = 112.0;
    mean[8] = 112.0;
    model.scaler = PoseScaler {
        mean,
        std: (0..10).map(|_| rng.random_range(0.2..2.0)).collect(),
    };
    model
}

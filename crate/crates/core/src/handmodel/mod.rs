//! Articulated two-hand model: parameter layout, rotations, camera,
//! kinematics (plain and differentiable), occlusion, collision and the
//! articulation prior.

mod assets;
mod camera;
mod graph_fk;
mod kinematics;
mod occlusion;
mod params;
mod prior;
mod rotation;
mod skeleton;

pub use assets::{ModelAssets, ASSET_FORMAT};
pub use camera::Camera;
pub use graph_fk::{
    gather_cols, graph_forward_kinematics, graph_project, graph_rot6d, rotation_columns,
};
pub use kinematics::{forward_kinematics, pose_state, root_position, HandState, PoseState};
pub use occlusion::{
    collision, collision_state, ray_sphere_entry, spheres_intersect, visibility,
    visibility_state, Collision, Occluder, DEFAULT_DELTA_OCC,
};
pub use params::{HandParams, PoseLayout, PoseParams};
pub use prior::{
    articulation, chi2_quantile, curl_articulation, mirror_articulation, set_articulation,
    synthetic_corpus, CorpusConfig, HandPca, PcaPrior,
};
pub use rotation::{
    axis_angle_to_matrix, canonical_rot6d, matrix_to_axis_angle, matrix_to_rot6d,
    rot6d_to_matrix,
};
pub use skeleton::{
    default_proxies, finger_keypoint, GaussianProxy, HandChain, HandSkeleton, Keypoint,
    FINGER_NAMES,
};

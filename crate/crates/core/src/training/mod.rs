//! Observation features, the weighted training loss and the optimizer loop.
//!
//! The flow operates on standardized poses. A [`PoseScaler`] fitted on the
//! training annotations maps them to pose space; every reported density,
//! log-determinant and pose is expressed in pose space.

mod losses;
mod model;
mod observation;
mod scaler;
mod step;
mod train;

pub use losses::{
    graph_decode, graph_loss_detmag, graph_loss_detmag_at_latents, graph_loss_j2d, graph_loss_j3d,
    graph_loss_mode, graph_loss_nll, graph_loss_theta, loss_detmag, loss_detmag_at_latents, loss_j2d, loss_j3d, loss_mode, loss_nll,
    loss_theta, rows_tensor,
};
pub use model::{Checkpoint, HandFlowModel, CHECKPOINT_FORMAT};
pub use observation::{extract_features, feature_net, Observation, MASKED};
pub use scaler::PoseScaler;
pub use step::{
    mode_annotation_index, total_loss, total_loss_with, DetMagPoint, LossContext, LossOutput, LossTerms,
    LossWeights, TrainingSample,
};
pub use train::{curve_csv, initial_model, train, LossRecord, TrainConfig, TrainOutcome, CURVE_HEADER};

//! Configuration, synthetic data, dataset files, checkpoints and the
//! glue that runs the pipeline end to end.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod io;
pub mod report;
pub mod world;

use std::path::Path;

pub use config::{derive_seed, sha256_hex, AssetConfig, EvalConfig, KvConfig, RunConfig};
pub use dataset::{annotate_dataset, observe_world, synth_data, synth_frames, verify_dataset, Dataset, DatasetHeader, Record, Split, DATASET_FORMAT};
pub use eval::{evaluate_record, evaluate_split, mean_nll, pose_joints, RecordEval};
pub use io::{load_checkpoint, save_checkpoint, write_atomic, Manifest};
pub use report::{MetricReport, MetricRow};
pub use world::{camera_rig, WorldConfig, WorldFrame};

use crate::error::{Error, Result};
use crate::handmodel::ModelAssets;
use crate::training::{curve_csv, initial_model, train, HandFlowModel, TrainOutcome};

/// Trains on the dataset's train split, writing periodic checkpoints
/// `ckpt_<step>.json`, the final `model.json` and `curve.csv` into
/// `out_dir`.
pub fn train_run(ds: &Dataset, run: &RunConfig, assets: &ModelAssets, out_dir: &Path) -> Result<TrainOutcome> {
    let samples = ds.training_samples(Split::Train);
    if samples.is_empty() {
        return Err(Error::Data("dataset has no training records".into()));
    }
    let cfg = run.training();
    let init = if cfg.steps == 0 { None } else { Some(initial_model(&samples, &assets.skeleton, &cfg)?) };
    let hash = run.hash();
    let final_step = cfg.steps;
    let mut save = |step: usize, m: &HandFlowModel| -> Result<()> {
        if step != final_step {
            save_checkpoint(&out_dir.join(format!("ckpt_{step}.json")), m, &hash, step)?;
        }
        Ok(())
    };
    let outcome = train(&samples, &assets.skeleton, &cfg, init, &mut save)?;
    let step = outcome.diverged_at.map_or(final_step, |s| s.saturating_sub(1));
    save_checkpoint(&out_dir.join("model.json"), &outcome.model, &hash, step)?;
    write_atomic(&out_dir.join("curve.csv"), curve_csv(&outcome.curve).as_bytes())?;
    if let Some(s) = outcome.diverged_at {
        log::warn!("training diverged at step {s}; saved the last finite parameters");
    }
    Ok(outcome)
}

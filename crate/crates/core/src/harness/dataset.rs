//! Line-delimited JSON datasets.
//!
//! The first line is a [`DatasetHeader`]; every following line is one
//! [`Record`] (one frame seen by one camera). Writing a loaded dataset
//! reproduces the file byte for byte.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::io::write_atomic;
use super::world::{camera_id, camera_pose, camera_rig, camera_scene, sample_frame, WorldFrame};
use super::RunConfig;
use crate::annotate::{generate_annotations, verify_set, AnnotationSet, Scene};
use crate::error::{Error, Result};
use crate::handmodel::{pose_state, visibility_state, ModelAssets, Occluder};
use crate::training::{mode_annotation_index, Observation, TrainingSample};

pub const DATASET_FORMAT: &str = "handflow.dataset.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub frame_id: String,
    pub camera_id: String,
    pub split: Split,
    pub observation: Observation,
    pub psi_gt: Vec<f64>,
    /// Camera-frame occluders, so the record can be re-verified alone.
    pub occluders: Vec<Occluder>,
    pub annotations: AnnotationSet,
    /// Camera-frame 3D joints of the ground truth (mm).
    pub joints3d: Vec<[f64; 3]>,
}

impl Record {
    /// Unique per frame and camera.
    pub fn key(&self) -> String {
        format!("{}/{}", self.frame_id, self.camera_id)
    }

    pub fn scene(&self) -> Scene {
        Scene {
            camera: self.observation.camera.clone(),
            occluders: self.occluders.clone(),
        }
    }

    pub fn training_sample(&self, seed: u64) -> TrainingSample {
        let key = self.key();
        let annotations = self.annotations.annotations.clone();
        let mode = if annotations.is_empty() { 0 } else { mode_annotation_index(seed, &key, annotations.len()) };
        TrainingSample {
            frame_id: key,
            observation: self.observation.clone(),
            annotations,
            joints3d: self.joints3d.clone(),
            mode_annotation_index: mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Data("empty dataset file".into()))??;
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| Error::Data(format!("dataset header: {e}")))?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Data(format!("unsupported dataset format {:?}", header.format)));
        }
        let mut records = Vec::with_capacity(header.records);
        for (n, line) in lines.enumerate() {
            let line = line?;
            let r: Record = serde_json::from_str(&line)
                .map_err(|e| Error::Data(format!("dataset line {}: {e}", n + 2)))?;
            r.observation
                .validate()
                .map_err(|e| Error::Data(format!("dataset line {}: {e}", n + 2)))?;
            records.push(r);
        }
        if records.len() != header.records {
            return Err(Error::Data(format!(
                "header announces {} records, file has {}",
                header.records,
                records.len()
            )));
        }
        Ok(Dataset { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open dataset {}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Training samples of one split; the mode annotation is chosen with
    /// the dataset seed.
    pub fn training_samples(&self, split: Split) -> Vec<TrainingSample> {
        self.split(split).map(|r| r.training_sample(self.header.seed)).collect()
    }

    /// Frame ids in order of first appearance.
    pub fn frame_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.frame_id) && !out.contains(&r.frame_id) {
                out.push(r.frame_id.clone());
            }
        }
        out
    }
}

/// One record per (frame, camera) of a world frame, with an empty
/// annotation set.
pub fn frame_records(frame: &WorldFrame, frame_index: usize, run: &RunConfig, assets: &ModelAssets) -> Result<Vec<Record>> {
    let cams = camera_rig(&run.world);
    let mut out = Vec::with_capacity(cams.len());
    for (c, cam) in cams.iter().enumerate() {
        let psi = camera_pose(frame, cam, assets)?;
        let state = pose_state(&psi, &assets.skeleton, cam)?;
        let scene = camera_scene(frame, cam);
        let keypoints = state.keypoints();
        let visible = visibility_state(&state, &assets.skeleton, &assets.proxies, &scene.occluders, assets.delta_occ)?;
        let observation = Observation::new(cam.project_all(&keypoints)?, visible, cam.clone());
        let test = run.world.is_test_frame(frame_index) || run.world.is_test_camera(c);
        out.push(Record {
            frame_id: frame.frame_id.clone(),
            camera_id: camera_id(c),
            split: if test { Split::Test } else { Split::Train },
            observation,
            psi_gt: psi.flatten(),
            occluders: scene.occluders,
            annotations: AnnotationSet {
                frame_id: format!("{}/{}", frame.frame_id, camera_id(c)),
                config_hash: String::new(),
                seed: 0,
                annotations: Vec::new(),
                warning: false,
            },
            joints3d: keypoints.iter().map(|p| [p.x, p.y, p.z]).collect(),
        });
    }
    Ok(out)
}

/// World frames of a run, deterministic in the seed.
pub fn synth_frames(run: &RunConfig, assets: &ModelAssets) -> Result<Vec<WorldFrame>> {
    let cams = camera_rig(&run.world);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run.seed, "world"));
    let threshold = run.annotate.pca_threshold_for(assets);
    (0..run.world.frames)
        .map(|i| sample_frame(i, &run.world, &cams, assets, threshold, &mut rng))
        .collect()
}

/// Samples the world and observes it from every camera. Annotation sets
/// are left empty; see [`annotate_dataset`].
pub fn observe_world(run: &RunConfig, assets: &ModelAssets) -> Result<Dataset> {
    let frames = synth_frames(run, assets)?;
    let mut records = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        records.extend(frame_records(f, i, run, assets)?);
    }
    Ok(Dataset {
        header: DatasetHeader {
            format: DATASET_FORMAT.into(),
            config_hash: run.hash(),
            seed: run.seed,
            records: records.len(),
        },
        records,
    })
}

/// Replaces every record's annotation set with a freshly generated one.
/// Each record's stream is derived from the run seed and the record key.
pub fn annotate_dataset(ds: &mut Dataset, run: &RunConfig, assets: &ModelAssets) -> Result<()> {
    let total = ds.records.len();
    for (n, r) in ds.records.iter_mut().enumerate() {
        let key = r.key();
        let seed = derive_seed(run.seed, &format!("annotate/{key}"));
        r.annotations = generate_annotations(&r.psi_gt, &r.scene(), assets, &run.annotate, &key, seed)?;
        if (n + 1) % 50 == 0 {
            log::info!("annotated {} of {total} records", n + 1);
        }
    }
    ds.header.config_hash = run.hash();
    Ok(())
}

/// Full synthetic dataset: sample the world, observe it from every camera
/// and annotate every view.
pub fn synth_data(run: &RunConfig, assets: &ModelAssets) -> Result<Dataset> {
    let mut ds = observe_world(run, assets)?;
    annotate_dataset(&mut ds, run, assets)?;
    Ok(ds)
}

/// Re-checks every record's annotation set with the independent verifier.
pub fn verify_dataset(ds: &Dataset, run: &RunConfig, assets: &ModelAssets) -> Vec<String> {
    ds.records
        .iter()
        .filter(|r| !verify_set(&r.annotations, &r.psi_gt, &r.scene(), assets, &run.annotate))
        .map(|r| r.key())
        .collect()
}

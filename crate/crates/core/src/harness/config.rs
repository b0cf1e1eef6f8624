//! Flat `key = value` configuration.
//!
//! Every run is described by one [`RunConfig`]. It is read from a text
//! file, patched by `key=value` overrides, and written back in canonical
//! form (every key, sorted) so that the hash of that text identifies the
//! run.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::WorldConfig;
use crate::annotate::PlausibilityConfig;
use crate::error::{Error, Result};
use crate::evalkit::{Alignment, DEFAULT_KERNEL_SCALES};
use crate::handmodel::{CorpusConfig, ModelAssets};
use crate::training::{DetMagPoint, TrainConfig};

/// Raw key/value pairs as read from a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    pub entries: BTreeMap<String, String>,
}

impl KvConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", o.as_ref())))?;
            self.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Hex SHA-256 of `text`.
pub fn sha256_hex(text: &[u8]) -> String {
    Sha256::digest(text).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetConfig {
    pub reference_focal: f64,
    pub corpus_samples: usize,
    pub corpus_noise: f64,
    pub seed: u64,
}

impl Default for AssetConfig {
    fn default() -> Self {
        let c = CorpusConfig::default();
        AssetConfig {
            reference_focal: 500.0,
            corpus_samples: c.samples,
            corpus_noise: c.noise,
            seed: 17,
        }
    }
}

impl AssetConfig {
    pub fn build(&self) -> Result<ModelAssets> {
        let corpus = CorpusConfig {
            samples: self.corpus_samples,
            noise: self.corpus_noise,
        };
        ModelAssets::default_with(self.reference_focal, &corpus, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Flow samples drawn per test record.
    pub samples: usize,
    pub kernel_scales: Vec<f64>,
    pub ambiguity_alignment: Alignment,
    pub regret_alignment: Alignment,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 100,
            kernel_scales: DEFAULT_KERNEL_SCALES.to_vec(),
            ambiguity_alignment: Alignment::RightRootRelative,
            regret_alignment: Alignment::RightRootRelative,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed; every stage derives its stream from it.
    pub seed: u64,
    pub world: WorldConfig,
    pub assets: AssetConfig,
    pub annotate: PlausibilityConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            world: WorldConfig::default(),
            assets: AssetConfig::default(),
            annotate: PlausibilityConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn format_value(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(f64, usize, u64);

impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        if s == "auto" {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    fn format_value(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.to_string())
    }
}

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        s.split(',').map(|p| p.trim().parse().ok()).collect()
    }
    fn format_value(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for Alignment {
    fn parse_value(s: &str) -> Option<Self> {
        Alignment::parse(s).ok()
    }
    fn format_value(&self) -> String {
        self.name().into()
    }
}

impl ConfigValue for DetMagPoint {
    fn parse_value(s: &str) -> Option<Self> {
        DetMagPoint::parse(s).ok()
    }
    fn format_value(&self) -> String {
        self.name().into()
    }
}

fn parse_as<T: ConfigValue>(key: &str, value: &str) -> Result<T> {
    T::parse_value(value).ok_or_else(|| Error::Config(format!("bad value {value:?} for {key}")))
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
            match key {
                $($key => cfg.$($field).+ = parse_as(key, value)?,)*
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            }
            Ok(())
        }

        fn key_values(cfg: &RunConfig) -> Vec<(&'static str, String)> {
            vec![$(($key, cfg.$($field).+.format_value()),)*]
        }
    };
}

config_keys! {
    "seed" => seed;
    "world.frames" => world.frames;
    "world.test_frames" => world.test_frames;
    "world.cameras" => world.cameras;
    "world.test_cameras" => world.test_cameras;
    "world.rig_radius" => world.rig_radius;
    "world.rig_height" => world.rig_height;
    "world.focal" => world.focal;
    "world.width" => world.width;
    "world.height" => world.height;
    "world.prior_scale" => world.prior_scale;
    "world.beta_std" => world.beta_std;
    "world.hand_spacing" => world.hand_spacing;
    "world.root_std" => world.root_std;
    "world.rotation_std" => world.rotation_std;
    "world.occluder_density" => world.occluder_density;
    "world.occluder_radius_min" => world.occluder_radius_min;
    "world.occluder_radius_max" => world.occluder_radius_max;
    "world.view_occluder_radius" => world.view_occluder_radius;
    "assets.reference_focal" => assets.reference_focal;
    "assets.corpus_samples" => assets.corpus_samples;
    "assets.corpus_noise" => assets.corpus_noise;
    "assets.seed" => assets.seed;
    "annotate.pixel_threshold" => annotate.pixel_threshold;
    "annotate.pca_threshold" => annotate.pca_threshold;
    "annotate.iterations" => annotate.iterations;
    "annotate.population_cap" => annotate.population_cap;
    "annotate.proposals_per_seed" => annotate.proposals_per_seed;
    "annotate.rotations_per_proposal" => annotate.rotations_per_proposal;
    "annotate.perturb_std_rot" => annotate.perturb_std_rot;
    "annotate.perturb_std_scale" => annotate.perturb_std_scale;
    "train.steps" => train.steps;
    "train.batch_size" => train.batch_size;
    "train.lr" => train.lr;
    "train.beta1" => train.beta1;
    "train.beta2" => train.beta2;
    "train.eps" => train.eps;
    "train.grad_clip" => train.grad_clip;
    "train.annotations_per_step" => train.annotations_per_step;
    "train.detmag_at" => train.detmag_at;
    "train.checkpoint_every" => train.checkpoint_every;
    "train.feature_hidden" => train.feature_hidden;
    "train.flow.blocks" => train.flow.blocks;
    "train.flow.hidden" => train.flow.hidden;
    "train.flow.cond_dim" => train.flow.cond_dim;
    "train.flow.log_scale_clamp" => train.flow.log_scale_clamp;
    "train.lambda.nll" => train.weights.nll;
    "train.lambda.detmag" => train.weights.detmag;
    "train.lambda.psi" => train.weights.psi;
    "train.lambda.j3d" => train.weights.j3d;
    "train.lambda.j2d" => train.weights.j2d;
    "train.lambda.theta" => train.weights.theta;
    "eval.samples" => eval.samples;
    "eval.kernel_scales" => eval.kernel_scales;
    "eval.ambiguity_alignment" => eval.ambiguity_alignment;
    "eval.regret_alignment" => eval.regret_alignment;
}

impl RunConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in &kv.entries {
            set_key(&mut cfg, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvConfig::parse(text)?)
    }

    /// File (if any) plus overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut kv = match path {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        kv.apply_overrides(overrides)?;
        Self::from_kv(&kv)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.annotate.validate()?;
        self.training().validate()?;
        if self.assets.reference_focal <= 0.0 || self.assets.corpus_samples < 2 {
            return Err(Error::Config("assets need a positive reference focal and at least 2 corpus samples".into()));
        }
        if self.eval.samples < 2 || self.eval.kernel_scales.is_empty() || self.eval.kernel_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("eval needs at least 2 samples and positive kernel scales".into()));
        }
        Ok(())
    }

    /// Canonical text listing every key.
    pub fn to_text(&self) -> String {
        let mut kv = KvConfig::default();
        for (k, v) in key_values(self) {
            kv.entries.insert(k.into(), v);
        }
        kv.to_text()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    /// Training settings with the flow sized for the pose layout and the
    /// master seed applied.
    pub fn training(&self) -> TrainConfig {
        let mut t = self.train;
        t.seed = derive_seed(self.seed, "train");
        t
    }
}

/// Independent stream seed for one stage of a run.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.world.occluder_density = 2.5;
        cfg.annotate.pca_threshold = Some(50.0);
        cfg.eval.kernel_scales = vec![5.0, 12.5];
        cfg.eval.regret_alignment = Alignment::Global;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(RunConfig::default().hash(), cfg.hash());
    }

    #[test]
    fn overrides_win_and_comments_are_ignored() {
        let mut kv = KvConfig::parse("# run\nseed = 3  # trailing\n\ntrain.steps=10\n").unwrap();
        kv.apply_overrides(&["train.steps=20"]).unwrap();
        let cfg = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.steps, 20);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        assert!(KvConfig::parse("just words").is_err());
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("train.steps = many").is_err());
        assert!(RunConfig::parse("world.cameras = 0").is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(derive_seed(1, "world"), derive_seed(1, "train"));
        assert_ne!(derive_seed(1, "world"), derive_seed(2, "world"));
        assert_eq!(derive_seed(1, "world"), derive_seed(1, "world"));
    }
}

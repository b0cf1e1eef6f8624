//! Model asset file: skeleton, proxies and prior in one JSON document.
//!
//! ```text
//! {
//!   "format": "skeleton.v1",
//!   "skeleton": { "hands": [ { "keypoints": [ { "name", "parent", "rotation",
//!                 "rest_offset", "shape_dirs" } ... ] } ... ],
//!                 "betas", "reference_focal" },
//!   "proxies":  [ { "hand", "bone", "offset", "std" } ... ],
//!   "prior":    { "hands": [ { "mean", "axes", "variances" } ... ] },
//!   "delta_occ": 5.0
//! }
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    default_proxies, synthetic_corpus, CorpusConfig, GaussianProxy, HandSkeleton, PcaPrior,
    DEFAULT_DELTA_OCC,
};
use crate::error::{Error, Result};

pub const ASSET_FORMAT: &str = "skeleton.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAssets {
    pub format: String,
    pub skeleton: HandSkeleton,
    pub proxies: Vec<GaussianProxy>,
    pub prior: PcaPrior,
    pub delta_occ: f64,
}

impl ModelAssets {
    /// Default two-hand skeleton with its proxies and a prior fitted on the
    /// seeded synthetic corpus.
    pub fn default_with(reference_focal: f64, corpus: &CorpusConfig, seed: u64) -> Result<Self> {
        let skeleton = HandSkeleton::two_hands(reference_focal);
        let proxies = default_proxies(&skeleton);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = PcaPrior::fit(&synthetic_corpus(&skeleton, corpus, &mut rng))?;
        Ok(ModelAssets {
            format: ASSET_FORMAT.into(),
            skeleton,
            proxies,
            prior,
            delta_occ: DEFAULT_DELTA_OCC,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != ASSET_FORMAT {
            return Err(Error::Data(format!(
                "unsupported asset format {:?}, expected {ASSET_FORMAT:?}",
                self.format
            )));
        }
        self.skeleton.validate()?;
        self.prior.validate()?;
        if self.prior.hands.len() != self.skeleton.hands.len() {
            return Err(Error::Data("prior and skeleton disagree on hand count".into()));
        }
        for p in &self.proxies {
            if !(p.std > 0.0) || p.hand >= self.skeleton.hands.len() {
                return Err(Error::Data(format!("invalid proxy {p:?}")));
            }
            if p.bone >= self.skeleton.hands[p.hand].keypoints.len() {
                return Err(Error::Data(format!("proxy bone {} out of range", p.bone)));
            }
        }
        if !(self.delta_occ >= 0.0) {
            return Err(Error::Data("delta_occ must be non-negative".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let assets: ModelAssets =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("asset file: {e}")))?;
        assets.validate()?;
        Ok(assets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_exact() {
        let cfg = CorpusConfig {
            samples: 200,
            noise: 0.12,
        };
        let a = ModelAssets::default_with(300.0, &cfg, 4).unwrap();
        a.validate().unwrap();
        let text = a.to_json().unwrap();
        let b = ModelAssets::from_json(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(text, b.to_json().unwrap());
    }

    #[test]
    fn wrong_format_rejected() {
        let cfg = CorpusConfig {
            samples: 50,
            noise: 0.12,
        };
        let mut a = ModelAssets::default_with(300.0, &cfg, 4).unwrap();
        a.format = "skeleton.v0".into();
        let text = serde_json::to_string(&a).unwrap();
        assert!(matches!(ModelAssets::from_json(&text), Err(Error::Data(_))));
    }
}

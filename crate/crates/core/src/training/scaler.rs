use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension affine map between pose space and the flow's standardized
/// space: `psi = mean + std * psi_tilde`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Dimensions whose spread is below this keep unit scale.
const MIN_STD: f64 = 1e-6;

impl PoseScaler {
    pub fn identity(dim: usize) -> Self {
        PoseScaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Population mean and std of `rows`.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::UndefinedInput("cannot fit a scaler on no data".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var
            .iter()
            .map(|v| if v.sqrt() < MIN_STD { 1.0 } else { v.sqrt() })
            .collect();
        Ok(PoseScaler { mean, std })
    }

    pub fn encode(&self, psi: &[f64]) -> Vec<f64> {
        psi.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn decode(&self, psi_tilde: &[f64]) -> Vec<f64> {
        psi_tilde
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| m + s * x)
            .collect()
    }

    /// `log|det d psi / d psi_tilde|`.
    pub fn log_det(&self) -> f64 {
        self.std.iter().map(|s| s.ln()).sum()
    }
}

//! PCA prior over per-hand articulation, and the synthetic articulation
//! corpus it is fitted on.
//!
//! An articulation is the concatenated axis-angle vectors of a hand's
//! non-global rotations (15 x 3 = 45 values for the default hand).

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_rot6d, rot6d_to_matrix};
use super::{HandParams, HandSkeleton};
use crate::error::{Error, Result};

/// Variance floor added to every axis so the prior stays positive definite.
const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPca {
    pub mean: Vec<f64>,
    /// Principal axes, one per row, orthonormal.
    pub axes: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl HandPca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// PCA coordinates of `x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.iter().zip(x.iter().zip(&self.mean)).map(|(a, (x, m))| a * (x - m)).sum())
            .collect()
    }

    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        self.project(x)
            .iter()
            .zip(&self.variances)
            .map(|(c, v)| c * c / v)
            .sum()
    }

    /// `mean + sum_k coeffs[k] * axes[k]`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, a) in coeffs.iter().zip(&self.axes) {
            for (o, ai) in out.iter_mut().zip(a) {
                *o += c * ai;
            }
        }
        out
    }

    fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::UndefinedInput("PCA fit needs at least 2 samples".into()));
        }
        let d = samples[0].len();
        let data = DMatrix::from_fn(n, d, |i, j| samples[i][j]);
        let mean = data.row_mean();
        let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        Ok(HandPca {
            mean: mean.iter().copied().collect(),
            axes: order
                .iter()
                .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
                .collect(),
            variances: order
                .iter()
                .map(|&k| eig.eigenvalues[k].max(0.0) + VARIANCE_FLOOR)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPrior {
    pub hands: Vec<HandPca>,
}

impl PcaPrior {
    /// Fit one PCA per hand; `corpus[h]` holds articulations of hand `h`.
    pub fn fit(corpus: &[Vec<Vec<f64>>]) -> Result<Self> {
        Ok(PcaPrior {
            hands: corpus.iter().map(|c| HandPca::fit(c)).collect::<Result<_>>()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (h, p) in self.hands.iter().enumerate() {
            if p.variances.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config(format!("prior hand {h} has a non-positive variance")));
            }
            for (i, a) in p.axes.iter().enumerate() {
                for (j, b) in p.axes.iter().enumerate() {
                    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (dot - want).abs() > 1e-9 {
                        return Err(Error::Config(format!("prior hand {h} axes not orthonormal")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Squared Mahalanobis distance of hand `hand`'s articulation.
    pub fn mahalanobis(&self, hand: usize, articulation: &[f64]) -> f64 {
        self.hands[hand].mahalanobis(articulation)
    }

    /// Chi-square quantile at probability `p` for the prior dimension.
    pub fn chi2_threshold(&self, p: f64) -> f64 {
        chi2_quantile(self.hands[0].dim(), p)
    }
}

pub fn chi2_quantile(dof: usize, p: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Axis-angle vectors of every non-global rotation, concatenated.
pub fn articulation(hand: &HandParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(3 * hand.theta.len().saturating_sub(1));
    for a in &hand.theta[1..] {
        let w = matrix_to_axis_angle(&rot6d_to_matrix(a)?);
        out.extend([w.x, w.y, w.z]);
    }
    Ok(out)
}

/// Overwrite the non-global rotations of `hand` from an articulation.
pub fn set_articulation(hand: &mut HandParams, articulation: &[f64]) {
    for (r, w) in articulation.chunks_exact(3).enumerate() {
        let m = axis_angle_to_matrix(&Vector3::new(w[0], w[1], w[2]));
        hand.theta[r + 1] = matrix_to_rot6d(&m);
    }
}

/// Left-hand articulation mirroring a right-hand one across the x = 0
/// plane: `M R M` with `M = diag(-1, 1, 1)` maps axis `w` to
/// `(w_x, -w_y, -w_z)`.
pub fn mirror_articulation(articulation: &[f64]) -> Vec<f64> {
    articulation
        .chunks_exact(3)
        .flat_map(|w| [w[0], -w[1], -w[2]])
        .collect()
}

/// Parameters of the synthetic articulation corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    pub samples: usize,
    /// Per-component Gaussian noise (rad) on top of the curl model.
    pub noise: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            samples: 2000,
            noise: 0.12,
        }
    }
}

/// Right-hand articulation from per-finger curls in `[0, 1]` and spreads.
///
/// Fingers flex toward the palm (-z) by rotating about the local x axis;
/// the base joint also spreads about z. The thumb flexes about a tilted
/// axis across the palm.
pub fn curl_articulation(curls: &[f64; 5], spreads: &[f64; 5]) -> Vec<f64> {
    let max_flex = [[0.5, 0.6, 0.7], [1.4, 1.6, 1.2], [1.4, 1.7, 1.2], [1.4, 1.7, 1.2], [1.4, 1.7, 1.2]];
    let thumb_axis = Vector3::new(0.5, -0.3, 0.8).normalize();
    let mut out = Vec::with_capacity(45);
    for f in 0..5 {
        for level in 0..3 {
            let angle = -curls[f] * max_flex[f][level];
            let w = if f == 0 {
                thumb_axis * -angle
            } else {
                let mut w = Vector3::new(angle, 0.0, 0.0);
                if level == 0 {
                    w.z = spreads[f];
                }
                w
            };
            out.extend([w.x, w.y, w.z]);
        }
    }
    out
}

/// Deterministic corpus of articulations for both hands of the default
/// skeleton; the left hand is the mirror of a right-hand draw.
pub fn synthetic_corpus<R: Rng>(
    skeleton: &HandSkeleton,
    cfg: &CorpusConfig,
    rng: &mut R,
) -> Vec<Vec<Vec<f64>>> {
    let dim = 3 * (skeleton.layout().rotations - 1);
    let mut right = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let base: f64 = rng.random_range(0.0..0.8);
        let curls: [f64; 5] =
            std::array::from_fn(|_| (base + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0));
        let spreads: [f64; 5] = std::array::from_fn(|f| {
            [0.0, 0.12, 0.0, -0.1, -0.2][f] * (1.0 - base) + rng.random_range(-0.08..0.08)
        });
        let mut a = curl_articulation(&curls, &spreads);
        a.resize(dim, 0.0);
        for v in a.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += cfg.noise * e;
        }
        right.push(a);
    }
    let mut out = vec![right.clone()];
    for _ in 1..skeleton.hands.len() {
        out.push(right.iter().map(|a| mirror_articulation(a)).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fitted() -> PcaPrior {
        let skel = HandSkeleton::two_hands(300.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let corpus = synthetic_corpus(&skel, &CorpusConfig { samples: 500, noise: 0.12 }, &mut rng);
        PcaPrior::fit(&corpus).unwrap()
    }

    #[test]
    fn fitted_prior_is_valid() {
        let p = fitted();
        p.validate().unwrap();
        assert_eq!(p.hands.len(), 2);
        assert_eq!(p.hands[0].dim(), 45);
        assert!((p.chi2_threshold(0.99) - 69.957).abs() < 1e-2);
    }

    #[test]
    fn mean_and_unit_axis_offsets() {
        let p = fitted();
        assert_eq!(p.mahalanobis(0, &p.hands[0].mean.clone()), 0.0);
        let h = &p.hands[1];
        let mut coeffs = vec![0.0; 45];
        coeffs[7] = h.variances[7].sqrt();
        let x = h.reconstruct(&coeffs);
        assert!((p.mahalanobis(1, &x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_dense_covariance_quadratic_form() {
        let p = fitted();
        let h = &p.hands[0];
        let d = h.dim();
        // assemble Sigma = A^T diag(var) A explicitly and solve against it
        let a = DMatrix::from_fn(d, d, |i, j| h.axes[i][j]);
        let sigma = a.transpose() * DMatrix::from_diagonal(&DVector::from_vec(h.variances.clone())) * &a;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.6..0.6)).collect();
            let diff = DVector::from_fn(d, |i, _| x[i] - h.mean[i]);
            let sol = sigma.clone().cholesky().unwrap().solve(&diff);
            let oracle = diff.dot(&sol);
            let got = p.mahalanobis(0, &x);
            assert!((got - oracle).abs() <= 1e-9 * oracle.max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn articulation_roundtrip() {
        let skel = HandSkeleton::two_hands(300.0);
        let layout = skel.layout();
        let mut hand = HandParams::identity(&layout, [0.0, 0.0], 1.0);
        let a = curl_articulation(&[0.3, 0.5, 0.1, 0.9, 0.4], &[0.0, 0.1, 0.0, -0.1, -0.2]);
        set_articulation(&mut hand, &a);
        let back = articulation(&hand).unwrap();
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn mirror_matches_reflected_matrix() {
        let w = Vector3::new(0.3, -0.5, 0.2);
        let m = nalgebra::Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        let reflected = m * axis_angle_to_matrix(&w) * m;
        let mirrored = mirror_articulation(&[w.x, w.y, w.z]);
        let direct = axis_angle_to_matrix(&Vector3::new(mirrored[0], mirrored[1], mirrored[2]));
        assert!((reflected - direct).abs().max() < 1e-12);
    }
}

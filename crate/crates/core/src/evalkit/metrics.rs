use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handmodel::HandSkeleton;

/// Keypoints of every hand, concatenated (mm).
pub type JointSet = Vec<[f64; 3]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alignment {
    /// Each hand relative to its own root.
    RootRelative,
    /// Both hands relative to the right hand's root.
    RightRootRelative,
    /// No alignment.
    Global,
}

impl Alignment {
    pub const ALL: [Alignment; 3] = [Alignment::RootRelative, Alignment::RightRootRelative, Alignment::Global];

    pub fn name(&self) -> &'static str {
        match self {
            Alignment::RootRelative => "RR",
            Alignment::RightRootRelative => "RRR",
            Alignment::Global => "Global",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rr" => Ok(Alignment::RootRelative),
            "rrr" => Ok(Alignment::RightRootRelative),
            "global" => Ok(Alignment::Global),
            _ => Err(Error::Config(format!("unknown alignment {s:?} (expected RR, RRR or Global)"))),
        }
    }
}

/// Where each hand's keypoints sit in a [`JointSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLayout {
    pub hands: usize,
    pub per_hand: usize,
    /// Index of the root within a hand.
    pub root: usize,
}

impl Default for JointLayout {
    fn default() -> Self {
        JointLayout {
            hands: 2,
            per_hand: 21,
            root: 0,
        }
    }
}

impl JointLayout {
    pub fn of(skeleton: &HandSkeleton) -> Self {
        JointLayout {
            hands: skeleton.hands.len(),
            per_hand: skeleton.keypoints_per_hand(),
            root: skeleton.hands[0].root(),
        }
    }

    pub fn joints(&self) -> usize {
        self.hands * self.per_hand
    }

    fn check(&self, set: &[[f64; 3]]) -> Result<()> {
        if set.len() != self.joints() {
            return Err(Error::Dimension(format!("joint set has {} joints, expected {}", set.len(), self.joints())));
        }
        if set.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite joint position".into()));
        }
        Ok(())
    }
}

/// Translate `set` according to `mode`.
pub fn align(set: &[[f64; 3]], mode: Alignment, layout: &JointLayout) -> Result<JointSet> {
    layout.check(set)?;
    let mut out = set.to_vec();
    match mode {
        Alignment::Global => {}
        Alignment::RightRootRelative => {
            let r = set[layout.root];
            for p in &mut out {
                for c in 0..3 {
                    p[c] -= r[c];
                }
            }
        }
        Alignment::RootRelative => {
            for h in 0..layout.hands {
                let r = set[h * layout.per_hand + layout.root];
                for p in &mut out[h * layout.per_hand..(h + 1) * layout.per_hand] {
                    for c in 0..3 {
                        p[c] -= r[c];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Align a prediction and its ground truth independently.
pub fn align_pair(pred: &[[f64; 3]], gt: &[[f64; 3]], mode: Alignment, layout: &JointLayout) -> Result<(JointSet, JointSet)> {
    Ok((align(pred, mode, layout)?, align(gt, mode, layout)?))
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Mean per-joint position error (mm) after alignment.
pub fn mpjpe(pred: &[[f64; 3]], gt: &[[f64; 3]], mode: Alignment, layout: &JointLayout) -> Result<f64> {
    let (p, g) = align_pair(pred, gt, mode, layout)?;
    Ok(p.iter().zip(&g).map(|(a, b)| dist(a, b)).sum::<f64>() / p.len() as f64)
}

/// Gaussian kernel widths (mm) averaged over by [`mmd`].
pub const DEFAULT_KERNEL_SCALES: [f64; 5] = [10.0, 20.0, 50.0, 100.0, 200.0];

fn flatten_aligned(sets: &[JointSet], mode: Alignment, layout: &JointLayout) -> Result<Vec<Vec<f64>>> {
    sets.iter()
        .map(|s| Ok(align(s, mode, layout)?.into_iter().flatten().collect()))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Biased (V-statistic) squared MMD per kernel scale.
pub fn mmd2_per_scale(a: &[JointSet], b: &[JointSet], scales: &[f64], mode: Alignment, layout: &JointLayout) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedInput("MMD needs at least one set on each side".into()));
    }
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("kernel scales must be positive".into()));
    }
    let xa = flatten_aligned(a, mode, layout)?;
    let xb = flatten_aligned(b, mode, layout)?;
    // squared distances once, kernels per scale
    let block = |u: &[Vec<f64>], v: &[Vec<f64>]| -> Vec<f64> {
        u.iter().flat_map(|x| v.iter().map(move |y| sq_dist(x, y))).collect()
    };
    let (daa, dbb, dab) = (block(&xa, &xa), block(&xb, &xb), block(&xa, &xb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(scales
        .iter()
        .map(|s| {
            let g = 1.0 / (2.0 * s * s);
            let mean_k = |d: &[f64], n: f64| d.iter().map(|x| (-x * g).exp()).sum::<f64>() / n;
            mean_k(&daa, na * na) + mean_k(&dbb, nb * nb) - 2.0 * mean_k(&dab, na * nb)
        })
        .collect())
}

/// Square root of the scale-averaged biased squared MMD between two
/// collections of joint sets, each aligned by `mode` first.
pub fn mmd(a: &[JointSet], b: &[JointSet], scales: &[f64], mode: Alignment, layout: &JointLayout) -> Result<f64> {
    let per = mmd2_per_scale(a, b, scales, mode, layout)?;
    Ok((per.iter().sum::<f64>() / per.len() as f64).max(0.0).sqrt())
}

/// Mean over joints of the RMS over axes of the per-axis population std
/// (mm).
pub fn ambiguity_std(samples: &[JointSet]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::UndefinedInput("ambiguity needs at least two samples".into()));
    }
    let k = samples[0].len();
    if k == 0 || samples.iter().any(|s| s.len() != k) {
        return Err(Error::Dimension("samples disagree on joint count".into()));
    }
    let n = samples.len() as f64;
    let mut total = 0.0;
    for j in 0..k {
        let mut var_sum = 0.0;
        for c in 0..3 {
            let mean = samples.iter().map(|s| s[j][c]).sum::<f64>() / n;
            var_sum += samples.iter().map(|s| (s[j][c] - mean).powi(2)).sum::<f64>() / n;
        }
        total += (var_sum / 3.0).sqrt();
    }
    Ok(total / k as f64)
}

/// [`ambiguity_std`] after aligning every sample.
pub fn aligned_ambiguity_std(samples: &[JointSet], mode: Alignment, layout: &JointLayout) -> Result<f64> {
    let aligned = samples.iter().map(|s| align(s, mode, layout)).collect::<Result<Vec<_>>>()?;
    ambiguity_std(&aligned)
}

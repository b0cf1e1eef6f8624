//! Synthetic articulated hand skeleton and its Gaussian proxies.
//!
//! Each hand is a rooted tree of keypoints. The default hand has 21
//! keypoints: the wrist root, three rotating joints per finger (thumb,
//! index, middle, ring, little), and five fingertip leaves. The 16 rotating
//! keypoints carry one 6D rotation each; rotation 0 belongs to the root and
//! is the global hand rotation. Fingertips carry none.
//!
//! Hand-local frame (right hand): fingers extend along +y, the thumb sits
//! toward +x, the palm faces -z. The left hand mirrors x.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub name: String,
    pub parent: Option<usize>,
    /// Index into the hand's rotation list, if this keypoint articulates.
    pub rotation: Option<usize>,
    /// Offset from the parent in the parent's frame at `beta = 0` (mm).
    pub rest_offset: [f64; 3],
    /// Per-`beta` displacement of the offset; offsets are affine in `beta`.
    pub shape_dirs: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandChain {
    pub keypoints: Vec<Keypoint>,
}

impl HandChain {
    pub fn root(&self) -> usize {
        self.keypoints
            .iter()
            .position(|k| k.parent.is_none())
            .expect("validated chain has a root")
    }

    pub fn rotation_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.rotation.is_some()).count()
    }

    /// Offset of keypoint `k` from its parent for shape `beta`.
    pub fn offset(&self, k: usize, beta: &[f64]) -> [f64; 3] {
        let kp = &self.keypoints[k];
        let mut o = kp.rest_offset;
        for (b, d) in beta.iter().zip(&kp.shape_dirs) {
            for i in 0..3 {
                o[i] += b * d[i];
            }
        }
        o
    }

    fn validate(&self, betas: usize) -> Result<()> {
        let roots = self.keypoints.iter().filter(|k| k.parent.is_none()).count();
        if roots != 1 {
            return Err(Error::Config(format!("hand chain has {roots} roots, expected 1")));
        }
        let root = self.root();
        if self.keypoints[root].rotation != Some(0) {
            return Err(Error::Config("root keypoint must own rotation 0".into()));
        }
        let mut seen = vec![false; self.rotation_count()];
        for (i, k) in self.keypoints.iter().enumerate() {
            if let Some(p) = k.parent {
                // parents precede children, so every keypoint reaches the root
                if p >= i {
                    return Err(Error::Config(format!(
                        "keypoint {i} has parent {p}; parents must precede children"
                    )));
                }
            }
            if let Some(r) = k.rotation {
                if r >= seen.len() || seen[r] {
                    return Err(Error::Config(format!("rotation index {r} invalid or reused")));
                }
                seen[r] = true;
            }
            if k.shape_dirs.len() != betas {
                return Err(Error::Config(format!(
                    "keypoint {i} has {} shape directions, expected {betas}",
                    k.shape_dirs.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSkeleton {
    pub hands: Vec<HandChain>,
    pub betas: usize,
    /// Root depth is `reference_focal / s` (mm, with `s` dimensionless).
    pub reference_focal: f64,
}

impl HandSkeleton {
    pub fn validate(&self) -> Result<()> {
        if self.hands.is_empty() {
            return Err(Error::Config("skeleton has no hands".into()));
        }
        if !(self.reference_focal > 0.0) {
            return Err(Error::Config("reference_focal must be positive".into()));
        }
        let rot = self.hands[0].rotation_count();
        for h in &self.hands {
            h.validate(self.betas)?;
            if h.rotation_count() != rot {
                return Err(Error::Config("hands disagree on rotation count".into()));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> super::PoseLayout {
        super::PoseLayout {
            hands: self.hands.len(),
            rotations: self.hands[0].rotation_count(),
            betas: self.betas,
        }
    }

    pub fn keypoints_per_hand(&self) -> usize {
        self.hands[0].keypoints.len()
    }

    pub fn total_keypoints(&self) -> usize {
        self.hands.iter().map(|h| h.keypoints.len()).sum()
    }

    /// Flat keypoint index of `(hand, k)`.
    pub fn global_index(&self, hand: usize, k: usize) -> usize {
        self.hands[..hand].iter().map(|h| h.keypoints.len()).sum::<usize>() + k
    }

    /// The default two-hand skeleton: 21 keypoints per hand, 16 rotations,
    /// 10 shape coefficients.
    pub fn two_hands(reference_focal: f64) -> Self {
        let right = default_hand(false);
        let left = default_hand(true);
        HandSkeleton {
            hands: vec![right, left],
            betas: SHAPE_DIMS,
            reference_focal,
        }
    }
}

pub const FINGER_NAMES: [&str; 5] = ["thumb", "index", "middle", "ring", "little"];
const SHAPE_DIMS: usize = 10;

/// Keypoint index of joint `level` (0..3) of finger `f`; level 3 is the tip.
pub fn finger_keypoint(f: usize, level: usize) -> usize {
    if level == 3 {
        16 + f
    } else {
        1 + 3 * f + level
    }
}

fn default_hand(mirror: bool) -> HandChain {
    // offsets of [base, second, third, tip] per finger, right hand
    let bones: [[[f64; 3]; 4]; 5] = [
        [[25.0, 22.0, -6.0], [18.0, 20.0, 0.0], [13.0, 16.0, 0.0], [10.0, 12.0, 0.0]],
        [[24.0, 86.0, 0.0], [0.0, 40.0, 0.0], [0.0, 25.0, 0.0], [0.0, 20.0, 0.0]],
        [[4.0, 90.0, 0.0], [0.0, 45.0, 0.0], [0.0, 28.0, 0.0], [0.0, 22.0, 0.0]],
        [[-15.0, 85.0, 0.0], [0.0, 40.0, 0.0], [0.0, 26.0, 0.0], [0.0, 20.0, 0.0]],
        [[-32.0, 76.0, 0.0], [0.0, 32.0, 0.0], [0.0, 20.0, 0.0], [0.0, 18.0, 0.0]],
    ];
    let sx = if mirror { -1.0 } else { 1.0 };
    let mut keypoints = vec![Keypoint {
        name: "wrist".into(),
        parent: None,
        rotation: Some(0),
        rest_offset: [0.0; 3],
        shape_dirs: vec![[0.0; 3]; SHAPE_DIMS],
    }];
    let mut tips = Vec::new();
    for (f, finger) in bones.iter().enumerate() {
        for (level, off) in finger.iter().enumerate() {
            let rest = [sx * off[0], off[1], off[2]];
            // scaling factors: global, palm, this finger, phalanx level
            let mut c = [0.0; SHAPE_DIMS];
            c[0] = 0.06;
            if level == 0 {
                c[1] = 0.05;
            } else {
                c[2 + f] = 0.06;
                c[6 + level] = 0.04;
            }
            let dirs = c.iter().map(|ci| [ci * rest[0], ci * rest[1], ci * rest[2]]).collect();
            let kp = Keypoint {
                name: format!(
                    "{}_{}",
                    FINGER_NAMES[f],
                    ["base", "mid", "distal", "tip"][level]
                ),
                parent: Some(if level == 0 { 0 } else { finger_keypoint(f, level - 1) }),
                rotation: if level < 3 { Some(1 + 3 * f + level) } else { None },
                rest_offset: rest,
                shape_dirs: dirs,
            };
            if level < 3 {
                keypoints.push(kp);
            } else {
                tips.push(kp);
            }
        }
    }
    keypoints.extend(tips);
    HandChain { keypoints }
}

/// Isotropic Gaussian attached to a bone. The bone ending at keypoint
/// `bone` lives in the frame of that keypoint's parent; `offset` is
/// expressed in that frame relative to the parent position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProxy {
    pub hand: usize,
    pub bone: usize,
    pub offset: [f64; 3],
    /// Standard deviation (mm); the one-std sphere is used for tests.
    pub std: f64,
}

/// Proxies along every bone of every hand of `skeleton`.
pub fn default_proxies(skeleton: &HandSkeleton) -> Vec<GaussianProxy> {
    let mut out = Vec::new();
    for (h, chain) in skeleton.hands.iter().enumerate() {
        for (k, kp) in chain.keypoints.iter().enumerate() {
            if kp.parent.is_none() {
                continue;
            }
            let r = kp.rest_offset;
            let at = |a: f64| [a * r[0], a * r[1], a * r[2]];
            let is_palm = chain.keypoints[kp.parent.unwrap()].parent.is_none();
            if is_palm {
                let thumb = k == finger_keypoint(0, 0);
                let std = if thumb { 11.0 } else { 12.0 };
                for a in [0.3, 0.65] {
                    out.push(GaussianProxy {
                        hand: h,
                        bone: k,
                        offset: at(a),
                        std,
                    });
                }
            } else {
                let level = match k {
                    16..=20 => 3,
                    _ => (k - 1) % 3,
                };
                let std = [9.0, 8.0, 7.0, 6.5][level];
                out.push(GaussianProxy {
                    hand: h,
                    bone: k,
                    offset: at(0.5),
                    std,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_skeleton_shape() {
        let s = HandSkeleton::two_hands(300.0);
        s.validate().unwrap();
        assert_eq!(s.keypoints_per_hand(), 21);
        assert_eq!(s.total_keypoints(), 42);
        assert_eq!(s.layout().dim(), 218);
        let h = &s.hands[0];
        assert_eq!(h.root(), 0);
        for f in 0..5 {
            assert_eq!(h.keypoints[finger_keypoint(f, 3)].rotation, None);
            assert_eq!(h.keypoints[finger_keypoint(f, 3)].parent, Some(finger_keypoint(f, 2)));
        }
    }

    #[test]
    fn zero_beta_reproduces_rest_offsets() {
        let s = HandSkeleton::two_hands(300.0);
        for h in &s.hands {
            for (k, kp) in h.keypoints.iter().enumerate() {
                assert_eq!(h.offset(k, &[0.0; 10]), kp.rest_offset);
            }
        }
    }

    #[test]
    fn left_hand_mirrors_right() {
        let s = HandSkeleton::two_hands(300.0);
        for (r, l) in s.hands[0].keypoints.iter().zip(&s.hands[1].keypoints) {
            assert_eq!(r.rest_offset[0], -l.rest_offset[0]);
            assert_eq!(r.rest_offset[1], l.rest_offset[1]);
        }
    }

    #[test]
    fn invalid_trees_rejected() {
        let mut s = HandSkeleton::two_hands(300.0);
        s.hands[1].keypoints[3].parent = None;
        assert!(s.validate().is_err());
        let mut s = HandSkeleton::two_hands(300.0);
        s.hands[0].keypoints[2].parent = Some(5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn proxies_have_positive_std() {
        let s = HandSkeleton::two_hands(300.0);
        let p = default_proxies(&s);
        assert!(p.iter().all(|g| g.std > 0.0));
        assert_eq!(p.iter().filter(|g| g.hand == 0).count(), p.len() / 2);
    }
}

//! Accuracy and distribution metrics over 3D joint sets, and view
//! selection.
//!
//! MMD values are reported as the square root of the biased squared MMD
//! averaged over the kernel scales.

mod metrics;
mod views;

pub use metrics::{
    align, align_pair, aligned_ambiguity_std, ambiguity_std, mmd, mmd2_per_scale, mpjpe, Alignment,
    JointLayout, JointSet, DEFAULT_KERNEL_SCALES,
};
pub use views::{
    camera_to_world, fit_gaussians, fuse, rank_stereo_pairs, select_view, stereo_fuse,
    variance_score, FrameEstimate, JointGaussian, StereoFusion, ViewFrames, ViewScore,
    ViewSelectConfig, ViewSelection, MIN_VARIANCE,
};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut impl Rng) -> JointSet {
        (0..42)
            .map(|_| [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(400.0..600.0)])
            .collect()
    }

    fn shifted(set: &JointSet, d: [f64; 3], range: std::ops::Range<usize>) -> JointSet {
        let mut out = set.clone();
        for p in &mut out[range] {
            for c in 0..3 {
                p[c] += d[c];
            }
        }
        out
    }

    #[test]
    fn alignment_examples() {
        let l = JointLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = random_set(&mut rng);
        assert_eq!(align(&gt, Alignment::Global, &l).unwrap(), gt);
        let moved = shifted(&gt, [10.0, 0.0, 0.0], 0..42);
        for mode in [Alignment::RootRelative, Alignment::RightRootRelative] {
            assert_eq!(align(&moved, mode, &l).unwrap(), align(&gt, mode, &l).unwrap());
        }
        let left = shifted(&gt, [0.0, 5.0, 0.0], 21..42);
        let rr = align(&left, Alignment::RootRelative, &l).unwrap();
        assert_eq!(rr[21..], align(&gt, Alignment::RootRelative, &l).unwrap()[21..]);
        let rrr = align(&left, Alignment::RightRootRelative, &l).unwrap();
        let base = align(&gt, Alignment::RightRootRelative, &l).unwrap();
        for j in 21..42 {
            assert!((rrr[j][1] - base[j][1] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mpjpe_examples() {
        let l = JointLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt: JointSet = (0..42).map(|i| [i as f64, 2.0 * i as f64, 500.0]).collect();
        for mode in Alignment::ALL {
            assert_eq!(mpjpe(&gt, &gt, mode, &l).unwrap(), 0.0);
        }
        let moved = shifted(&gt, [10.0, 0.0, 0.0], 0..42);
        assert_eq!(mpjpe(&moved, &gt, Alignment::Global, &l).unwrap(), 10.0);
        assert_eq!(mpjpe(&moved, &gt, Alignment::RightRootRelative, &l).unwrap(), 0.0);
        assert_eq!(mpjpe(&moved, &gt, Alignment::RootRelative, &l).unwrap(), 0.0);
        let left = shifted(&gt, [0.0, 0.0, 5.0], 21..42);
        assert_eq!(mpjpe(&left, &gt, Alignment::RightRootRelative, &l).unwrap(), 2.5);
        assert_eq!(mpjpe(&left, &gt, Alignment::RootRelative, &l).unwrap(), 0.0);
        let _ = random_set(&mut rng);
    }

    /// Brute-force double sum over every pair.
    fn mmd2_oracle(a: &[JointSet], b: &[JointSet], sigma: f64) -> f64 {
        let k = |x: &JointSet, y: &JointSet| {
            let mut d2 = 0.0;
            for j in 0..x.len() {
                for c in 0..3 {
                    d2 += (x[j][c] - y[j][c]).powi(2);
                }
            }
            (-d2 / (2.0 * sigma * sigma)).exp()
        };
        let mut xx = 0.0;
        for x in a {
            for y in a {
                xx += k(x, y);
            }
        }
        let mut yy = 0.0;
        for x in b {
            for y in b {
                yy += k(x, y);
            }
        }
        let mut xy = 0.0;
        for x in a {
            for y in b {
                xy += k(x, y);
            }
        }
        let (n, m) = (a.len() as f64, b.len() as f64);
        xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)
    }

    #[test]
    fn mmd_matches_double_sum_oracle() {
        let l = JointLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_set(&mut rng);
        let jitter = |rng: &mut ChaCha8Rng, s: f64| -> JointSet {
            base.iter()
                .map(|p| [p[0] + rng.random_range(-s..s), p[1] + rng.random_range(-s..s), p[2] + rng.random_range(-s..s)])
                .collect()
        };
        let a: Vec<JointSet> = (0..3).map(|_| jitter(&mut rng, 5.0)).collect();
        let b: Vec<JointSet> = (0..4).map(|_| jitter(&mut rng, 8.0)).collect();
        let scales = DEFAULT_KERNEL_SCALES;
        let per = mmd2_per_scale(&a, &b, &scales, Alignment::Global, &l).unwrap();
        for (s, v) in scales.iter().zip(&per) {
            assert!((v - mmd2_oracle(&a, &b, *s)).abs() < 1e-12);
        }
        let m = mmd(&a, &b, &scales, Alignment::Global, &l).unwrap();
        let expect = (scales.iter().map(|s| mmd2_oracle(&a, &b, *s)).sum::<f64>() / 5.0).sqrt();
        assert!((m - expect).abs() < 1e-12);
        assert!((m - mmd(&b, &a, &scales, Alignment::Global, &l).unwrap()).abs() < 1e-12);
        assert!(mmd(&a, &a, &scales, Alignment::Global, &l).unwrap() < 1e-12 + 1e-6);
        assert!(mmd2_per_scale(&a, &a, &scales, Alignment::Global, &l).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mmd_of_singletons_has_closed_form() {
        let l = JointLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_set(&mut rng);
        let y = shifted(&x, [3.0, -4.0, 12.0], 0..42);
        let d2 = 42.0 * (9.0 + 16.0 + 144.0);
        let per = mmd2_per_scale(&[x], &[y], &[50.0, 200.0], Alignment::Global, &l).unwrap();
        for (v, s) in per.iter().zip([50.0f64, 200.0]) {
            assert!((v - (2.0 - 2.0 * (-d2 / (2.0 * s * s)).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn ambiguity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_set(&mut rng);
        assert!(ambiguity_std(&[base.clone(), base.clone(), base.clone()]).unwrap() < 1e-12);
        let mut a = base.clone();
        let mut b = base.clone();
        a[7][1] += 1.0;
        b[7][1] -= 1.0;
        let s = ambiguity_std(&[a, b]).unwrap();
        assert!((s - 1.0 / (3f64.sqrt() * 42.0)).abs() < 1e-12);
        assert!(ambiguity_std(&[base]).is_err());

        // naive two-pass oracle
        let sets: Vec<JointSet> = (0..6).map(|_| random_set(&mut rng)).collect();
        let mut total = 0.0;
        for j in 0..42 {
            let mut acc = 0.0;
            for c in 0..3 {
                let vals: Vec<f64> = sets.iter().map(|s| s[j][c]).collect();
                let mean = vals.iter().sum::<f64>() / 6.0;
                acc += vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
            }
            total += (acc / 3.0).sqrt();
        }
        assert!((ambiguity_std(&sets).unwrap() - total / 42.0).abs() < 1e-12);
    }

    #[test]
    fn fusion_examples() {
        let a = JointGaussian {
            mean: [0.0; 3],
            var: [4.0; 3],
        };
        let b = JointGaussian {
            mean: [2.0; 3],
            var: [4.0; 3],
        };
        let f = fuse(&a, &b);
        assert_eq!(f.mean, [1.0; 3]);
        assert_eq!(f.var, [2.0; 3]);
        let flat = JointGaussian {
            mean: [1.0; 3],
            var: [0.0, 1.0, 1.0],
        };
        let g = fuse(&flat, &flat);
        assert!(g.var.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!((g.var[0] - MIN_VARIANCE / 2.0).abs() < 1e-18);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples: Vec<JointSet> = (0..10).map(|_| random_set(&mut rng)).collect();
        let s = stereo_fuse(&samples, &samples).unwrap();
        for (fz, one) in s.fused.iter().zip(&s.view_a) {
            for c in 0..3 {
                assert!((fz.var[c] - one.var[c] / 2.0).abs() < 1e-9 * one.var[c].max(1.0));
            }
        }
    }

    #[test]
    fn identical_views_have_no_regret() {
        let l = JointLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = random_set(&mut rng);
        let frame = FrameEstimate {
            samples: (0..5).map(|_| random_set(&mut rng)).collect(),
            mode: random_set(&mut rng),
            gt,
        };
        let views = vec![
            ViewFrames {
                camera_id: "a".into(),
                frames: vec![frame.clone()],
            },
            ViewFrames {
                camera_id: "b".into(),
                frames: vec![frame],
            },
        ];
        let sel = select_view(&views, &ViewSelectConfig::default(), &l).unwrap();
        assert_eq!(sel.scores[0].ambiguity, sel.scores[1].ambiguity);
        assert!(sel.scores.iter().all(|s| s.regret == 0.0));
        assert_eq!(sel.ranking, vec![0, 1]);
        assert!(select_view(&views[..1], &ViewSelectConfig::default(), &l).is_err());
    }
}

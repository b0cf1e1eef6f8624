use handflow::annotate::{generate_annotations, perturb, verify_set, PlausibilityConfig, Reference};
use std::sync::OnceLock;

use handflow::handmodel::{canonical_rot6d, ModelAssets};
use handflow::harness::world::{camera_pose, camera_rig};
use handflow::harness::{synth_data, synth_frames, RunConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(seed: u64) -> RunConfig {
    RunConfig::load(
        None,
        &[
            format!("seed={seed}"),
            "world.frames=2".into(),
            "world.test_frames=0".into(),
            "world.occluder_density=3".into(),
            "annotate.population_cap=12".into(),
            "annotate.iterations=4".into(),
        ],
    )
    .unwrap()
}

#[test]
fn generated_sets_pass_the_independent_checker() {
    let assets = run(0).assets.build().unwrap();
    for seed in 0..3 {
        let r = run(seed);
        let ds = synth_data(&r, &assets).unwrap();
        for rec in &ds.records {
            let set = &rec.annotations;
            assert!(!set.is_empty() && set.len() <= r.annotate.population_cap);
            let scene = rec.scene();
            assert!(verify_set(set, &rec.psi_gt, &scene, &assets, &r.annotate), "{}", rec.key());
            let reference = Reference::new(&rec.psi_gt, &scene, &assets, &r.annotate).unwrap();
            assert!(set.annotations.iter().all(|p| reference.check(p).plausible()));
        }
    }
}

#[test]
fn verifier_catches_a_planted_implausible_member() {
    let r = run(1);
    let assets = r.assets.build().unwrap();
    let ds = synth_data(&r, &assets).unwrap();
    let rec = &ds.records[0];
    let mut set = rec.annotations.clone();
    let layout = assets.skeleton.layout();
    let mut bad = rec.psi_gt.clone();
    // slide the second hand onto the first
    bad[layout.t_index(1)] = bad[layout.t_index(0)];
    bad[layout.t_index(1) + 1] = bad[layout.t_index(0) + 1];
    set.annotations.push(bad);
    assert!(!verify_set(&set, &rec.psi_gt, &rec.scene(), &assets, &r.annotate));
}

#[test]
fn same_seed_same_set() {
    let r = run(2);
    let assets = r.assets.build().unwrap();
    let rec = synth_data(&r, &assets).unwrap().records.remove(3);
    let scene = rec.scene();
    let a = generate_annotations(&rec.psi_gt, &scene, &assets, &r.annotate, "k", 11).unwrap();
    let b = generate_annotations(&rec.psi_gt, &scene, &assets, &r.annotate, "k", 11).unwrap();
    let c = generate_annotations(&rec.psi_gt, &scene, &assets, &r.annotate, "k", 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.annotations, c.annotations);
}

fn fixture() -> &'static (ModelAssets, Vec<f64>, PlausibilityConfig) {
    static F: OnceLock<(ModelAssets, Vec<f64>, PlausibilityConfig)> = OnceLock::new();
    F.get_or_init(|| {
        let r = run(0);
        let assets = r.assets.build().unwrap();
        let frame = &synth_frames(&r, &assets).unwrap()[0];
        let gt = camera_pose(frame, &camera_rig(&r.world)[0], &assets).unwrap().flatten();
        (assets, gt, r.annotate)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbation_touches_one_hands_articulation_and_scale(seed in any::<u64>(), std in 0.01f64..0.5) {
        let (assets, gt, base) = fixture();
        let layout = assets.skeleton.layout();
        let cfg = PlausibilityConfig { perturb_std_rot: std, ..*base };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(p) = perturb(gt, &layout, &cfg, &mut rng) {
            let changed: Vec<usize> = (0..p.len()).filter(|&i| p[i] != gt[i]).collect();
            let hand = changed[0] / layout.hand_dim();
            prop_assert!(changed.iter().all(|i| i / layout.hand_dim() == hand));
            for &i in &changed {
                let within = i % layout.hand_dim();
                // never the global rotation, shape or root pixel
                prop_assert!(within >= 6 && (within < 6 * layout.rotations || i == layout.s_index(hand)), "index {}", i);
            }
            for rot in 1..layout.rotations {
                let b = layout.theta_index(hand, rot, 0);
                let block: [f64; 6] = p[b..b + 6].try_into().unwrap();
                let canon = canonical_rot6d(&block).unwrap();
                for k in 0..6 {
                    prop_assert!((canon[k] - block[k]).abs() < 1e-12);
                }
            }
            prop_assert!(p[layout.s_index(hand)] > 0.0);
        }
    }
}

use handflow::annotate::check_plausibility;
use handflow::harness::world::{camera_rig, occluded_fraction, view_occluders};
use handflow::harness::{annotate_dataset, observe_world, synth_data, synth_frames, Dataset, RunConfig, WorldConfig};

fn small(extra: &[&str]) -> RunConfig {
    let mut o: Vec<String> = ["world.frames=3", "world.test_frames=1", "annotate.population_cap=6", "annotate.iterations=2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(None, &o).unwrap()
}

#[test]
fn dataset_round_trips_byte_for_byte() {
    let run = small(&["seed=4"]);
    let assets = run.assets.build().unwrap();
    let ds = synth_data(&run, &assets).unwrap();
    let text = ds.to_jsonl().unwrap();
    let back = Dataset::from_reader(text.as_bytes()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.to_jsonl().unwrap(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    ds.save(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    assert_eq!(Dataset::load(&path).unwrap(), ds);
}

#[test]
fn synthesis_depends_only_on_the_seed() {
    let assets = small(&[]).assets.build().unwrap();
    let a = synth_data(&small(&["seed=1"]), &assets).unwrap();
    let b = synth_data(&small(&["seed=1"]), &assets).unwrap();
    let c = synth_data(&small(&["seed=2"]), &assets).unwrap();
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    assert_ne!(a.records[0].psi_gt, c.records[0].psi_gt);

    // observing then annotating separately gives the same file
    let run = small(&["seed=1"]);
    let mut split = observe_world(&run, &assets).unwrap();
    assert!(split.records.iter().all(|r| r.annotations.is_empty()));
    annotate_dataset(&mut split, &run, &assets).unwrap();
    assert_eq!(split.to_jsonl().unwrap(), a.to_jsonl().unwrap());
}

#[test]
fn truncated_or_foreign_files_are_data_errors() {
    let run = small(&["seed=3"]);
    let assets = run.assets.build().unwrap();
    let text = synth_data(&run, &assets).unwrap().to_jsonl().unwrap();
    let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    for bad in [cut.as_str(), "", "{\"format\":\"other\",\"config_hash\":\"\",\"seed\":0,\"records\":0}\n"] {
        assert!(matches!(Dataset::from_reader(bad.as_bytes()), Err(handflow::Error::Data(_))));
    }
}

#[test]
fn every_ground_truth_is_plausible_against_itself() {
    let run = small(&["seed=6"]);
    let assets = run.assets.build().unwrap();
    let ds = synth_data(&run, &assets).unwrap();
    assert_eq!(ds.records.len(), 3 * run.world.cameras);
    for r in &ds.records {
        let report = check_plausibility(&r.psi_gt, &r.psi_gt, &r.scene(), &assets, &run.annotate).unwrap();
        assert!(report.plausible(), "{}: {report:?}", r.key());
        assert_eq!(r.annotations.annotations[0], r.psi_gt);
    }
}

#[test]
fn occluded_fraction_grows_with_occluder_density() {
    let mut fractions = Vec::new();
    for density in [0.0, 2.0, 6.0] {
        let run = RunConfig::load(
            None,
            &[
                "seed=2".to_string(),
                "world.frames=12".into(),
                "world.test_frames=0".into(),
                "world.view_occluder_radius=0".into(),
                format!("world.occluder_density={density}"),
            ],
        )
        .unwrap();
        let assets = run.assets.build().unwrap();
        let cams = camera_rig(&run.world);
        let frames = synth_frames(&run, &assets).unwrap();
        let f = frames.iter().map(|fr| occluded_fraction(fr, &cams, &assets).unwrap()).sum::<f64>() / frames.len() as f64;
        fractions.push(f);
    }
    assert!(fractions[0] < fractions[1] && fractions[1] < fractions[2], "{fractions:?}");
}

#[test]
fn view_occluders_grade_the_rig() {
    let cfg = WorldConfig::default();
    let cams = camera_rig(&cfg);
    let occ = view_occluders(&cfg, &cams);
    // one camera stays clear; the rest get distinct radii up to the maximum
    assert_eq!(occ.len(), cams.len() - 1);
    let mut radii: Vec<f64> = occ.iter().map(|o| o.radius).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    assert_eq!(radii.len(), occ.len());
    assert!((radii.last().unwrap() - cfg.view_occluder_radius).abs() < 1e-9);
    for o in &occ {
        let c = nalgebra::Vector3::from(o.center);
        assert!(cams.iter().any(|cam| (cam.center() * 0.5 - c).norm() < 1e-9));
    }
    // neighbouring cameras are not graded in order
    let by_camera: Vec<f64> = cams
        .iter()
        .map(|cam| {
            occ.iter()
                .find(|o| (cam.center() * 0.5 - nalgebra::Vector3::from(o.center)).norm() < 1e-9)
                .map_or(0.0, |o| o.radius)
        })
        .collect();
    assert!(by_camera.windows(2).any(|w| w[0] > w[1]) && by_camera.windows(2).any(|w| w[0] < w[1]));

    let none = WorldConfig { view_occluder_radius: 0.0, ..cfg };
    assert!(view_occluders(&none, &cams).is_empty());
}

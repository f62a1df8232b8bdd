use std::path::Path;

use proxykit::pipeline::{run_pipeline, sha256_hex, Manifest, OracleConfig, PipelineConfig, MANIFEST_FILE};
use proxykit::Error;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig {
        layout: Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/living_room.json")),
        ..Default::default()
    };
    cfg.planner.image_size = 128;
    cfg.guidance.face_size = 128;
    cfg.guidance.out_size = 128;
    cfg.fusion.render_size = 64;
    cfg
}

#[test]
fn synthetic_run_recovers_scale_and_hashes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&small_config(), dir.path()).unwrap();
    assert!(m.complete);
    assert_eq!(m.frame_count, 338);
    assert!(m.stages.iter().all(|s| s.status == "done"));
    let paths: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    for a in &m.artifacts {
        let bytes = std::fs::read(dir.path().join(&a.path)).unwrap();
        assert_eq!(bytes.len() as u64, a.bytes);
        assert_eq!(sha256_hex(&bytes), a.sha256, "{}", a.path);
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    for t in metrics["theta_star"].as_array().unwrap() {
        assert!((t.as_f64().unwrap() - 1.3).abs() <= 0.05, "{t}");
    }
    assert_eq!(Manifest::load(dir.path().join(MANIFEST_FILE)).unwrap(), m);
}

#[test]
fn failed_stage_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    // An existing but empty replay directory fails inside the search.
    std::fs::create_dir(dir.path().join("replay")).unwrap();
    cfg.oracle = OracleConfig::Replay { dir: dir.path().join("replay") };
    let err = run_pipeline(&cfg, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
    let m = Manifest::load(dir.path().join("out").join(MANIFEST_FILE)).unwrap();
    assert!(!m.complete);
    let align = m.stages.iter().find(|s| s.name == "align").unwrap();
    assert_eq!(align.status, "failed");
    assert!(align.error.is_some());
    assert!(m.stages.iter().all(|s| s.name != "fuse"));
}

#[test]
fn config_rejects_unknown_fields_and_rebases_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"seed": 1, "bogus": true}"#).unwrap();
    assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
    std::fs::write(&path, r#"{"layout": "scene.json", "loss_lambda": 0.5}"#).unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.layout.as_deref(), Some(dir.path().join("scene.json").as_path()));
    std::fs::write(&path, r#"{"loss_lambda": 1.5}"#).unwrap();
    assert!(matches!(PipelineConfig::load(&path).unwrap().check(), Err(Error::Config(_))));
}

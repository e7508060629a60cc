use sdla::experiments::{
    cmd_couple, cmd_dla, cmd_harmonic, cmd_interface_tail, envelope_probability, execute, run_and_write, LabError,
    RunConfig, RunRecord,
};

fn small(replicas: u64) -> RunConfig {
    RunConfig {
        seed: 9,
        replicas,
        ..RunConfig::default()
    }
}

#[test]
fn worker_count_does_not_change_bytes() {
    let mut cfg = small(60);
    cfg.n_list = Some(vec![8]);
    let a = execute(cmd_interface_tail, &cfg).unwrap();
    cfg.workers = 4;
    let b = execute(cmd_interface_tail, &cfg).unwrap();
    assert_eq!(a.files, b.files);

    let mut cfg = small(40);
    cfg.n = Some(3);
    let a = execute(cmd_dla, &cfg).unwrap();
    cfg.workers = 2;
    assert_eq!(a.files, execute(cmd_dla, &cfg).unwrap().files);
}

#[test]
fn different_seeds_differ() {
    let mut cfg = small(40);
    cfg.n = Some(3);
    let a = execute(cmd_dla, &cfg).unwrap();
    cfg.seed += 1;
    let b = execute(cmd_dla, &cfg).unwrap();
    assert_ne!(a.file("first_attachment.csv"), b.file("first_attachment.csv"));
}

#[test]
fn run_record_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(1);
    cfg.out_dir = dir.path().to_string_lossy().into_owned();
    cfg.n_sequence = vec![4, 8];
    let (report, record) = run_and_write("harmonic", &cfg).unwrap();
    assert_eq!(record.outputs.len(), report.files.len());
    assert_eq!(RunRecord::load_verified(dir.path()).unwrap(), record);
    std::fs::write(dir.path().join("harmonic.csv"), "x").unwrap();
    assert!(matches!(RunRecord::load_verified(dir.path()), Err(LabError::Integrity(_))));
}

#[test]
fn harmonic_floor_is_flat() {
    let mut cfg = small(1);
    cfg.method = "both".into();
    cfg.walks = 2000;
    let r = cmd_harmonic(&cfg).unwrap();
    assert_eq!(r.summary["floor_spread"].as_f64().unwrap(), 0.0);
    let text = String::from_utf8(r.file("harmonic_points.csv").unwrap().to_vec()).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn preconditions_map_to_exit_code_two() {
    let mut cfg = small(50);
    let e = cmd_couple(&cfg).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    cfg.method = "guess".into();
    assert_eq!(cmd_harmonic(&cfg).unwrap_err().exit_code(), 2);
    cfg.method = "exact".into();
    cfg.aggregate = Some("/nonexistent/agg.json".into());
    assert!(cmd_harmonic(&cfg).is_err());
}

#[test]
fn envelope_matches_closed_form_for_one_step() {
    // One exponential of rate 4 sqrt(2): P(T < 1) = 1 - exp(-4 sqrt 2).
    let (p, se) = envelope_probability(1, 1.0, 200_000, 3);
    let exact = 1.0 - (-4.0 * 2f64.sqrt()).exp();
    assert!((p - exact).abs() < 4.0 * se.max(1e-4), "{p} vs {exact}");
    assert_eq!(envelope_probability(0, 1.0, 10, 3).0, 1.0);
}

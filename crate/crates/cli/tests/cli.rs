use std::process::Command;

fn sdla() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdla"))
}

#[test]
fn harmonic_writes_record() {
    let dir = tempfile::tempdir().unwrap();
    let agg = dir.path().join("column.json");
    std::fs::write(&agg, "{\"sites\": [[0, 1], [0, 2]]}").unwrap();
    let out = sdla()
        .args(["harmonic", "--out-dir"])
        .arg(dir.path())
        .args(["--set", "n_sequence=[8, 16, 32]", "--set"])
        .arg(format!("aggregate={:?}", agg.to_string_lossy()))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sequence_contracting: pass"));
    for f in ["harmonic.csv", "harmonic_points.csv", "harmonic_sequence.csv", "run_record.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.toml");
    std::fs::write(&conf, "replicas = 30\nn = 2\n").unwrap();
    let out = sdla()
        .args(["dla", "--config"])
        .arg(&conf)
        .args(["--seed", "5", "--out-dir"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let record = std::fs::read_to_string(dir.path().join("o/run_record.json")).unwrap();
    assert!(record.contains("\"replicas\": 30"));
    assert!(record.contains("\"seed\": 5"));
}

#[test]
fn constant_floor_sequence_is_not_contracting() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdla()
        .args(["harmonic", "--set", "n_sequence=[4, 8, 16]", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_config_exits_two() {
    let out = sdla().args(["harmonic", "--set", "no_such_key=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = sdla().args(["couple", "--replicas", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

use std::path::PathBuf;
use std::process::Command;

fn multilane() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multilane"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn classify_from_flags() {
    let out = multilane().args(["classify", "--rho1", "0.27", "--rho2", "0.49"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("class: A"), "{text}");
}

#[test]
fn run_writes_outputs() {
    let dir = std::env::temp_dir().join(format!("multilane-cli-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let status = multilane()
        .arg("perturb-local")
        .arg("--config")
        .arg(configs().join("local_bump.conf"))
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["snapshots.csv", "means.csv", "report.txt"] {
        assert!(dir.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = std::env::temp_dir().join(format!("multilane-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.conf");
    std::fs::write(&bad, "experiment = classify\nequilibrium = 0.2, 0.3\n[grid]\nbogus = 1\n").unwrap();
    let out = multilane().arg("classify").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    // Subcommand and file disagree.
    let out = multilane()
        .arg("consistency")
        .arg("--config")
        .arg(configs().join("classify_a.conf"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inadmissible_state_exits_with_2() {
    let out = multilane().args(["classify", "--rho1", "1.5", "--rho2", "0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

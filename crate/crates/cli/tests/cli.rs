use std::path::Path;
use std::process::{Command, Output};

fn simulate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simulate")).args(args).current_dir(cwd).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const QUICK: &str = r#"{"fringe": {"alpha_step_deg": 15}, "chsh_scan": {"beta_step_deg": 20}}"#;

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"detection": {"bogus": 1}}"#);
    let out = simulate(&["fringe", "--config", "bad.json", "--out-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detection.bogus"));
    assert!(!dir.path().join("o/fringe.csv").exists());
}

#[test]
fn missing_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&["dip", "--config", "absent.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_validity_failure_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "thin.json", r#"{"dispersion": {"core_radius_um": 1.0}}"#);
    let out = simulate(&["dispersion", "--config", "thin.json", "--out-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("paraxial"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.json", QUICK);
    for out in ["a", "b"] {
        for cmd in ["fringe", "chsh-scan"] {
            let o = simulate(&[cmd, "--config", "quick.json", "--out-dir", out, "--seed", "9"], dir.path());
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for f in ["fringe.csv", "chsh_scan.csv", "chsh_scan.pgm", "fringe.svg"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quick.json", QUICK);
    simulate(&["fringe", "--config", "quick.json", "--out-dir", "a", "--seed", "1"], dir.path());
    simulate(&["fringe", "--config", "quick.json", "--out-dir", "b", "--seed", "2"], dir.path());
    let a = std::fs::read(dir.path().join("a/fringe.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/fringe.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn zero_pair_rate_succeeds_with_zero_counts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "dark.json", r#"{"detection": {"pair_rate_hz": 0}, "fringe": {"alpha_step_deg": 30}}"#);
    let out = simulate(&["fringe", "--config", "dark.json", "--out-dir", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/fringe.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("0")));
}

#[test]
fn fit_round_trips_noiseless_fringes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "gen.json", r#"{"noiseless": true, "detection": {"pair_rate_hz": 1e10}, "fringe": {"alpha_step_deg": 15}}"#);
    let o = simulate(&["fringe", "--config", "gen.json", "--out-dir", "data"], dir.path());
    assert!(o.status.success());
    write(
        dir.path(),
        "fit.json",
        r#"{"noiseless": true, "detection": {"pair_rate_hz": 1e10}, "fit": {"observations_csv": "data/fringe.csv", "free": ["theta_rot", "mix"]}}"#,
    );
    let o = simulate(&["fit", "--config", "fit.json", "--out-dir", "fit"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("fit/fit_result.json")).unwrap();
    assert!(text.contains("theta_rot_deg") && text.contains("\"mix\""));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mix = 0.579"));
}

#[test]
fn dispersion_prints_delay() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(&["dispersion", "--out-dir", "o"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("1.6418 ps/m"));
}

#[test]
fn shipped_configs_load_and_print_round_trips() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        let o = simulate(&["print-config", "--config", path.to_str().unwrap()], dir.path());
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        write(dir.path(), "echo.json", &String::from_utf8_lossy(&o.stdout));
        let again = simulate(&["print-config", "--config", "echo.json"], dir.path());
        assert_eq!(o.stdout, again.stdout, "{}", path.display());
    }
}

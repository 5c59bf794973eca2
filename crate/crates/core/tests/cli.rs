use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stein-indep"));
    c.env("STEIN_WORKERS", "2");
    c
}

fn code(c: &mut Command) -> i32 {
    c.output().unwrap().status.code().unwrap()
}

#[test]
fn selftest_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["selftest", "--quick", "--out"]).arg(d.path())), 0);
    assert!(d.path().join("selftest.json").exists());
    assert_eq!(
        code(
            bin()
                .args(["selftest", "--quick", "--inject-fault", "skip-symmetrization", "--out"])
                .arg(d.path())
        ),
        1
    );
    assert_eq!(
        code(bin().args(["selftest", "--quick", "--inject-fault", "nonsense", "--out"]).arg(d.path())),
        2
    );
}

#[test]
fn measure_and_stein_verify() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["measure", "uniform01", "--grid", "101", "--out"]).arg(d.path())), 0);
    assert!(d.path().join("measure_grid.csv").exists());
    let report = d.path().join("report.json");
    assert_eq!(
        code(
            bin()
                .args(["stein", "verify", "--measure", "gaussian", "--grid", "200", "--out"])
                .arg(&report)
        ),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(code(bin().args(["measure", "nonsense", "--out"]).arg(d.path())), 2);
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 3\n").unwrap();
    assert_eq!(code(bin().args(["gamma2d", "--config"]).arg(&cfg).arg("--out").arg(d.path())), 2);
    assert_eq!(
        code(
            bin()
                .args(["uniform", "--config"])
                .arg(Path::new("/nonexistent.toml"))
                .arg("--out")
                .arg(d.path())
        ),
        2
    );
    std::fs::write(&cfg, "uniform_rho = [2.0]\n").unwrap();
    assert_eq!(code(bin().args(["uniform", "--config"]).arg(&cfg).arg("--out").arg(d.path())), 2);
}

#[test]
fn experiment_runs_and_flags_override_the_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "seed = 5\nlognormal_n = [200, 400, 800]\nlognormal_i = [1, 2]\n").unwrap();
    let out = d.path().join("o");
    let s = bin()
        .args(["lognormal", "--quick", "--seed", "9", "--samples", "4000", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(s.status.code().is_some_and(|c| c == 0 || c == 1));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("lognormal.json")).unwrap()).unwrap();
    assert_eq!(v["provenance"]["seed"], 9);
    assert!(v["provenance"]["config"].as_str().unwrap().contains("samples = 4000"));
}

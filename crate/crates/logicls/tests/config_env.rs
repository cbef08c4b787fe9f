//! `LOGICLS_CONFIG` resolution. Kept in its own test binary: the test
//! mutates process environment, which would race with any parallel
//! test in the same harness.

use logicls::cli::run_captured;
use logicls::config::CONFIG_ENV_VAR;

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["logicls".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_captured(&argv)
}

#[test]
fn env_config_applies_unless_overridden_by_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let spec = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios/pushpins.lcs");
    let spec = spec.to_str().unwrap();

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "jobs = 0\n").unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, "jobs = 1\n").unwrap();

    std::env::set_var(CONFIG_ENV_VAR, &bad);
    let (code, _, err) = cli(&["validate", spec]);
    assert_eq!(code, 2, "invalid env config must fail validation: {err}");
    assert!(err.contains("bad.toml"), "{err}");

    // An explicit --config wins over the environment.
    let (code, out, err) = cli(&["--config", good.to_str().unwrap(), "validate", spec]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("2 constraints"), "{out}");

    // A pointed-to file that does not exist is a runtime error.
    std::env::set_var(CONFIG_ENV_VAR, dir.path().join("absent.toml"));
    let (code, _, err) = cli(&["validate", spec]);
    assert_eq!(code, 3, "{err}");

    std::env::remove_var(CONFIG_ENV_VAR);
    let (code, _, err) = cli(&["validate", spec]);
    assert_eq!(code, 0, "{err}");
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

fn emlmc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emlmc"))
}

fn run(dir: &Path, config: &str, out: &str, extra: &[&str]) -> std::process::Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    emlmc()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(out))
        .args(extra)
        .output()
        .unwrap()
}

/// Every CSV and manifest under `root`, keyed by relative path. Timing files
/// are left out.
fn artifacts(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if name == "costs.csv" || name == "cost_error.csv" {
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            files.insert(rel, fs::read(&path).unwrap());
        }
    }
    files
}

const CIRCLE: &str = "experiment = circle_convergence\nlevels = 2\nfinest_samples = 2\nrealizations = 2\n";
const POPCORN: &str = "experiment = popcorn_robustness\nn0 = 8\nlevels = 1\nsamples_per_level = 3\n";
const HOLES: &str = "experiment = two_holes_flux\nn0 = 8\nlevels = 1\nfinest_samples = 2\nhole_radii = 0.18, 0.22\n";

#[test]
fn help_exits_cleanly() {
    let out = emlmc().arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--config"));
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.cfg");
    let out = emlmc()
        .arg("--config")
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.cfg"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "experiment = circle_convergence\nlevles = 2\n", "out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("levles"));
}

#[test]
fn outputs_do_not_depend_on_threads_or_reruns() {
    for config in [CIRCLE, POPCORN, HOLES] {
        let dir = tempfile::tempdir().unwrap();
        let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
        for (k, threads) in ["1", "2", "8", "8"].iter().enumerate() {
            let name = format!("out{k}");
            let out = run(dir.path(), config, &name, &["--threads", threads]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let files = artifacts(&dir.path().join(&name));
            assert!(files.keys().any(|f| f.ends_with("manifest.txt")));
            match &reference {
                None => reference = Some(files),
                Some(r) => assert!(r == &files, "artifacts differ with {threads} threads"),
            }
        }
    }
}

#[test]
fn circle_artifacts_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), CIRCLE, "out", &["--seed", "3"]);
    assert!(out.status.success());
    let root = dir.path().join("out");
    for f in [
        "estimates.csv",
        "costs.csv",
        "cost_error.csv",
        "manifest.txt",
        "q1/levels.csv",
        "q2/cross.csv",
    ] {
        assert!(root.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(root.join("manifest.txt")).unwrap();
    assert!(manifest.contains("root_seed=3"));
    assert!(manifest.contains("0.04531216540324139"));
    let estimates = fs::read_to_string(root.join("estimates.csv")).unwrap();
    assert_eq!(estimates.lines().count(), 1 + 2 * 2);
}

#[test]
fn experiment_override_switches_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), HOLES, "out", &["--experiment", "popcorn-robustness"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/iterations.csv").exists());
}

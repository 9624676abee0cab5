use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use starflow_cli::manifest::blob_hash;
use tempfile::TempDir;

const SMALL: &str = r#"
N = 3
alpha = ["1/2", "1/3", "1/6"]
seed = 99
replicas = 300
length = 64
n_list = [16, 64]
T = 1.0
s = 0.5
x_ray = 2
x_radius = "1/3"
convergence_replicas = 12
spot_checks = 200
"#;

fn starflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Every file under `dir`, by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn worked_example_walk_gives_the_golden_transform() {
    let tmp = TempDir::new().unwrap();
    fs::copy("tests/golden/worked_walk.csv", tmp.path().join("walk.csv")).unwrap();
    let config = write_config(
        tmp.path(),
        "length = 5\ninput_walk = \"walk.csv\"\noutput_dir = \"out\"\n",
    );
    let out = starflow(&["cv-check", "-c", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let got = fs::read_to_string(tmp.path().join("out/cv-check/transformed_walk.csv")).unwrap();
    assert_eq!(got, include_str!("golden/worked_transform.csv"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out/cv-check/manifest.json")).unwrap())
            .unwrap();
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs[0]["hash"], blob_hash(&fs::read(&config).unwrap()));
    assert_eq!(inputs[1]["name"], "walk.csv");
    assert_eq!(
        inputs[1]["hash"],
        blob_hash(include_bytes!("golden/worked_walk.csv"))
    );
    assert_eq!(manifest["subcommand"], "cv-check");
    assert!(manifest["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["status"] == "pass"));
}

#[test]
fn input_walk_length_must_match() {
    let tmp = TempDir::new().unwrap();
    fs::copy("tests/golden/worked_walk.csv", tmp.path().join("walk.csv")).unwrap();
    let config = write_config(
        tmp.path(),
        "length = 6\ninput_walk = \"walk.csv\"\noutput_dir = \"out\"\n",
    );
    let out = starflow(&["cv-check", "-c", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`length`"));
}

#[test]
fn malformed_alpha_is_a_config_error_naming_alpha() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "N = 3\nalpha = [\"1/2\", \"1/3\", \"1/3\"]\n");
    let out = starflow(&[
        "cv-check",
        "-c",
        config.to_str().unwrap(),
        "-o",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`alpha`"), "{err}");
    assert!(!tmp.path().join("cv-check").exists());
}

#[test]
fn reruns_reproduce_every_artifact_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    for sub in [
        "cv-check",
        "chain-donsker",
        "flip-check",
        "flow-check",
        "convergence",
    ] {
        let mut trees = Vec::new();
        for (run, workers) in [("a", "1"), ("b", "3")] {
            let dir = tmp.path().join(run);
            let out = starflow(&[
                sub,
                "-c",
                config.to_str().unwrap(),
                "-o",
                dir.to_str().unwrap(),
                "-w",
                workers,
            ]);
            // small runs may fail statistical checks, but never with an error
            assert!(
                matches!(out.status.code(), Some(0 | 1)),
                "{sub}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            trees.push(tree(&dir.join(sub)));
        }
        assert!(trees[0].contains_key(Path::new("manifest.json")));
        assert!(trees[0].contains_key(Path::new("checks.csv")));
        assert_eq!(trees[0], trees[1], "{sub}");
    }
}

#[test]
fn failed_checks_exit_with_one() {
    // 300 walks cannot supply the 10^5 pooled radial moves the flip check requires
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let out = starflow(&[
        "flip-check",
        "-c",
        config.to_str().unwrap(),
        "-o",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("FAIL flip.pooled_radial_steps")));
    let checks = fs::read_to_string(tmp.path().join("flip-check/checks.csv")).unwrap();
    assert!(checks
        .lines()
        .any(|l| l.starts_with("flip.pooled_radial_steps,fail,")));
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert!(!starflow(&["nonsense"]).status.success());
}

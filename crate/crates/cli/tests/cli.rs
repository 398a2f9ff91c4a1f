//! End-to-end tests of the binary: exit codes, determinism, graph files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cliquewise"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cliquewise-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(path: &Path, body: &str) -> PathBuf {
    std::fs::write(path, body).unwrap();
    path.to_path_buf()
}

fn config_body(out: &Path) -> String {
    format!(
        r#"
seed = 7
n = 8
edge_prob = 0.4
d = 3
lambda = 0.001
horizon = 300
output_dir = "{}"
lyapunov_check = false
"#,
        out.display()
    )
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = scratch("determinism");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let cfg_a = write_config(&dir.join("a.toml"), &config_body(&out_a));
    let cfg_b = write_config(&dir.join("b.toml"), &config_body(&out_b));

    for cfg in [&cfg_a, &cfg_b] {
        let status = bin().args(["run", "--config"]).arg(cfg).status().unwrap();
        assert!(status.success());
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            let a = std::fs::read(out_a.join(&name)).unwrap();
            let b = std::fs::read(out_b.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs");
            compared += 1;
        }
    }
    assert_eq!(compared, 7);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn validate_passes_on_default_methods() {
    let dir = scratch("validate");
    let cfg = write_config(&dir.join("config.toml"), &config_body(&dir.join("out")));
    let output = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("cl-admm-qmax: ok"));
    assert!(stdout.contains("pg-extra: no splitting parameters"));
    let _ = std::fs::remove_dir_all(&dir);
}

fn oversized_step_config(path: &Path, out: &Path) -> PathBuf {
    write_config(
        path,
        &format!(
            r#"
seed = 3
n = 8
edge_prob = 0.4
d = 3
lambda = 0.001
horizon = 400
output_dir = "{}"
lyapunov_check = false

[[methods]]
algorithm = "cl-admm"
cliques = "maximal"
alpha_scale = 50.0
"#,
            out.display()
        ),
    )
}

#[test]
fn failing_validation_blocks_without_force() {
    let dir = scratch("force");
    let out = dir.join("out");
    let cfg = oversized_step_config(&dir.join("config.toml"), &out);
    let status = bin().args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists(), "no output should be written without --force");

    // Forced, the oversized step diverges: exit 3 with the partial CSV kept.
    let status = bin().args(["run", "--force", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(3));
    let csv = std::fs::read_to_string(out.join("cl-admm-qmax-a50.csv")).unwrap();
    assert!(csv.lines().count() > 1, "partial CSV should retain rows");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_or_invalid_config_is_io_error() {
    let status =
        bin().args(["run", "--config", "/nonexistent/nope.toml"]).status().unwrap();
    assert_eq!(status.code(), Some(4));

    let dir = scratch("badcfg");
    let cfg = write_config(&dir.join("config.toml"), "seed = \"not a number\"");
    let status = bin().args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(4));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn runs_from_a_graph_file() {
    let dir = scratch("graphfile");
    let graph_path = dir.join("graph.txt");
    // 4-cycle plus a chord: connected, 4 nodes.
    std::fs::write(&graph_path, "4 5\n1 2\n2 3\n3 4\n1 4\n1 3\n").unwrap();
    let out = dir.join("out");
    let cfg = write_config(
        &dir.join("config.toml"),
        &format!(
            r#"
seed = 1
n = 4
edge_prob = 0.5
d = 2
lambda = 0.001
horizon = 200
output_dir = "{}"
graph_file = "{}"
lyapunov_check = false
"#,
            out.display(),
            graph_path.display()
        ),
    );
    let status = bin().args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("summary.txt").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn selftest_passes() {
    let output = bin().arg("selftest").output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.matches(": pass").count(), 6, "{stdout}");
}

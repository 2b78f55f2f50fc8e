use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn bsfbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsfbench"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn copy_task(name: &str, into: &Path) -> PathBuf {
    let dst = into.join(name);
    std::fs::create_dir_all(&dst).unwrap();
    for entry in std::fs::read_dir(fixtures().join(name)).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dst.join(entry.file_name())).unwrap();
    }
    dst
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr is empty");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(bsfbench(&["--help"]).status.code(), Some(0));
    assert_eq!(bsfbench(&["--version"]).status.code(), Some(0));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(bsfbench(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn train_oracle_reports_family_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let task = copy_task("linear", dir.path());
    let out = bsfbench(&["train-oracle", "--task", s(&task)]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("linear family=ridge "), "{stdout}");
    let r2: f64 = stdout
        .split("loo_r2=")
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(r2 > 0.999, "{stdout}");
}

#[test]
fn metrics_on_an_empty_store_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("metrics.csv");
    let out = bsfbench(&[
        "metrics",
        "--store",
        s(&dir.path().join("store")),
        "--out",
        s(&out_file),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = std::fs::read_to_string(out_file).unwrap();
    assert_eq!(
        text,
        "task,direction,optimizer,condition,run,metric,horizon,value\n"
    );
}

#[test]
fn invalid_manifest_exits_two_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let task = copy_task("linear", dir.path());
    let manifest = task.join("task.toml");
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(&manifest, text.replace("\"maximize\"", "\"upward\"")).unwrap();
    let out = bsfbench(&[
        "baseline",
        "--tasks",
        s(&task),
        "--store",
        s(&dir.path().join("store")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let line = error_line(&out);
    assert_eq!(line["error"], "ManifestInvalid");
    assert_eq!(line["field"], "objective");
    assert_eq!(line["exit_code"], 2);
}

#[test]
fn config_file_errors_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "iterations = 3\n").unwrap();
    let out = bsfbench(&["--config", s(&bad), "metrics", "--store", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "ConfigInvalid");

    // File says 3 iterations; the flag says 4 and wins.
    let task = copy_task("linear", dir.path());
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "iters = 3\nbaseline_runs = 2\n").unwrap();
    let store = dir.path().join("store");
    let args = |iters: Option<&'static str>| {
        let mut v = vec!["--config", s(&config)];
        if let Some(i) = iters {
            v.extend(["--iters", i]);
        }
        v
    };
    let mut first = args(None);
    first.extend([
        "baseline",
        "--tasks",
        s(&task),
        "--store",
        s(&store),
        "--optimizers",
        "random",
    ]);
    assert_eq!(bsfbench(&first).status.code(), Some(0));
    let mut second = args(Some("4"));
    let store4 = dir.path().join("store4");
    second.extend([
        "baseline",
        "--tasks",
        s(&task),
        "--store",
        s(&store4),
        "--optimizers",
        "random",
    ]);
    assert_eq!(bsfbench(&second).status.code(), Some(0));
    let steps = |store: &Path| -> Vec<usize> {
        let text = std::fs::read_to_string(store.join("linear__random__none.jsonl")).unwrap();
        text.lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                v["steps"].as_array().unwrap().len()
            })
            .collect()
    };
    // The manifest's own run count beats the global one.
    assert_eq!(steps(&store), vec![3; 8]);
    assert_eq!(steps(&store4), vec![4; 8]);
}

#[test]
fn unreachable_agent_produces_only_fallback_steps() {
    let dir = tempfile::tempdir().unwrap();
    let task = copy_task("linear", dir.path());
    let store = dir.path().join("store");
    let out = bsfbench(&[
        "--iters",
        "3",
        "--runs-per-cell",
        "2",
        "run",
        "--tasks",
        s(&task),
        "--store",
        s(&store),
        "--agent",
        "ghost=cmd:/nonexistent/agent-binary",
        "--conditions",
        "domain_aware",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("steps_new=6 fallback_steps_new=6"),
        "{stdout}"
    );
}

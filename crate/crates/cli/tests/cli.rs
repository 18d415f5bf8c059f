//! End-to-end tests running the actual binary: config validation and exit
//! codes, trace/summary outputs, determinism, resume, and reporting.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spsa-tune"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn synthetic_config(dir: &Path, seed: u64, max_iterations: u64, with_checkpoint: bool) -> PathBuf {
    let checkpoint = if with_checkpoint {
        format!("checkpoint_path = \"{}\"\n", dir.join("run.ckpt").display())
    } else {
        String::new()
    };
    let text = format!(
        r#"
seed = {seed}

[space]
[[space.params]]
name = "x"
kind = "real"
min = 0.0
max = 1.0
default = 0.9

[[space.params]]
name = "y"
kind = "integer"
min = 0
max = 500
default = 450

[objective]
kind = "synthetic"
function = "quadratic"
noise_sigma = 0.02

[engine]
max_iterations = {max_iterations}
grad_tol = 1e-12

[engine.schedule]
kind = "constant"
alpha0 = 0.02

[output]
trace_path = "{trace}"
{checkpoint}summary_path = "{summary}"
"#,
        trace = dir.join("trace.jsonl").display(),
        summary = dir.join("summary.json").display(),
    );
    let path = dir.join("run.toml");
    write(&path, &text);
    path
}

fn mrsim_config(dir: &Path) -> PathBuf {
    let text = format!(
        r#"
seed = 11

[space]
builtin = "mrsim-v1"

[objective]
kind = "mrsim"
value_scale = 0.0026

[engine]
max_iterations = 30
grad_tol = 1e-12

[engine.schedule]
kind = "constant"
alpha0 = 0.05

[output]
trace_path = "{trace}"
summary_path = "{summary}"
"#,
        trace = dir.join("trace.jsonl").display(),
        summary = dir.join("summary.json").display(),
    );
    let path = dir.join("mrsim.toml");
    write(&path, &text);
    path
}

fn trace_without_wall(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            v["wall_ms"] = serde_json::json!(0);
            serde_json::to_string(&v).unwrap()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn tune_mrsim_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let config = mrsim_config(dir.path());
    let out = run(&["tune", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = trace
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 30);
    assert_eq!(rows.last().unwrap()["eval_count_cumulative"], 60);
}

#[test]
fn missing_seed_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 1, 5, false);
    let text = std::fs::read_to_string(&config).unwrap().replace("seed = 1\n", "");
    write(&config, &text);
    let out = run(&["tune", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn summary_best_is_no_worse_than_first_measurement() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 5, 25, false);
    let out = run(&["tune", config.to_str().unwrap()]);
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(summary["best_value"].as_f64().unwrap() <= first["f_base"].as_f64().unwrap());
}

#[test]
fn summary_raw_values_revalidate_against_the_space() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 5, 15, false);
    let out = run(&["tune", config.to_str().unwrap()]);
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    for point in ["final", "best"] {
        let config_values = summary[point]["config"].as_array().unwrap();
        let x = config_values[0]["value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&x));
        let y = config_values[1]["value"].as_f64().unwrap();
        assert!((0.0..=500.0).contains(&y));
        assert_eq!(y.fract(), 0.0, "integer parameter must stay integral");
    }
}

#[test]
fn identical_configs_give_byte_identical_traces_modulo_wall() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config_a = synthetic_config(dir_a.path(), 123, 20, false);
    let config_b = synthetic_config(dir_b.path(), 123, 20, false);
    assert!(run(&["tune", config_a.to_str().unwrap()]).status.success());
    assert!(run(&["tune", config_b.to_str().unwrap()]).status.success());
    assert_eq!(
        trace_without_wall(&dir_a.path().join("trace.jsonl")),
        trace_without_wall(&dir_b.path().join("trace.jsonl"))
    );
}

#[test]
fn seed_override_changes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 123, 10, false);
    assert!(run(&["tune", config.to_str().unwrap()]).status.success());
    let first = trace_without_wall(&dir.path().join("trace.jsonl"));
    assert!(run(&["tune", config.to_str().unwrap(), "--seed-override", "999"])
        .status
        .success());
    let second = trace_without_wall(&dir.path().join("trace.jsonl"));
    assert_ne!(first, second);
}

#[test]
fn split_run_equals_unsplit_run_row_for_row() {
    let full_dir = tempfile::tempdir().unwrap();
    let split_dir = tempfile::tempdir().unwrap();
    let full_config = synthetic_config(full_dir.path(), 7, 20, false);
    assert!(run(&["tune", full_config.to_str().unwrap()]).status.success());

    let split_config = synthetic_config(split_dir.path(), 7, 20, true);
    let out = run(&[
        "tune",
        split_config.to_str().unwrap(),
        "--max-iterations-override",
        "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = split_dir.path().join("run.ckpt");
    assert!(checkpoint.exists());
    let out = run(&[
        "resume",
        checkpoint.to_str().unwrap(),
        split_config.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(
        trace_without_wall(&full_dir.path().join("trace.jsonl")),
        trace_without_wall(&split_dir.path().join("trace.jsonl"))
    );
}

#[test]
fn resume_with_spent_budget_appends_nothing_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 7, 10, true);
    assert!(run(&["tune", config.to_str().unwrap()]).status.success());
    let before = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let out = run(&[
        "resume",
        dir.path().join("run.ckpt").to_str().unwrap(),
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let after = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn resume_refuses_a_different_space() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 7, 10, true);
    assert!(run(&["tune", config.to_str().unwrap()]).status.success());
    // Same file name, different bounds: the fingerprints cannot match.
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("max = 500", "max = 600");
    write(&config, &text);
    let out = run(&[
        "resume",
        dir.path().join("run.ckpt").to_str().unwrap(),
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fingerprint"), "stderr: {stderr}");
}

#[test]
fn tune_handles_categorical_and_boolean_knobs() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
seed = 21

[space]
[[space.params]]
name = "x"
kind = "real"
min = 0.0
max = 1.0
default = 0.8

[[space.params]]
name = "codec"
kind = "categorical"
categories = ["none", "snappy", "gzip"]
default = "snappy"

[[space.params]]
name = "verbose"
kind = "boolean"
default = false

[objective]
kind = "synthetic"
function = "quadratic"

[engine]
max_iterations = 5
grad_tol = 1e-12

[output]
trace_path = "{trace}"
summary_path = "{summary}"
"#,
        trace = dir.path().join("trace.jsonl").display(),
        summary = dir.path().join("summary.json").display(),
    );
    let config = dir.path().join("mixed.toml");
    write(&config, &text);
    let out = run(&["tune", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let rendered: Vec<&str> = summary["final"]["config"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["rendered"].as_str().unwrap())
        .collect();
    assert!(["none", "snappy", "gzip"].contains(&rendered[1]), "{rendered:?}");
    assert!(["true", "false"].contains(&rendered[2]), "{rendered:?}");
}

#[test]
fn report_prints_improvement_and_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = mrsim_config(dir.path());
    assert!(run(&["tune", config.to_str().unwrap()]).status.success());
    let trace = dir.path().join("trace.jsonl");
    let data = dir.path().join("curve.dat");
    let out = run(&[
        "report",
        trace.to_str().unwrap(),
        "--data-out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("improvement"), "stdout: {stdout}");
    assert!(stdout.contains("iterations    30"), "stdout: {stdout}");
    let lines: Vec<String> = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 30);
    assert!(lines[0].starts_with("0 "));
}

#[test]
fn report_on_missing_trace_is_an_io_error() {
    let out = run(&["report", "/nonexistent/trace.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn report_on_empty_trace_fails() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("empty.jsonl");
    write(&trace, "");
    let out = run(&["report", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_prints_the_cost_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let config = mrsim_config(dir.path());
    let out = run(&["simulate", config.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("total"), "stdout: {stdout}");
    assert!(stdout.contains("shuffle"), "stdout: {stdout}");
    assert!(stdout.contains("io.sort.mb = 100"), "stdout: {stdout}");
}

#[test]
fn objective_abort_exits_two_with_partial_trace_intact() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
seed = 4

[space]
[[space.params]]
name = "x"
kind = "real"
min = 0.0
max = 1.0
default = 0.5

[objective]
kind = "process"
command_template = "sh -c 'exit 1'"
value_source = "wall_clock_seconds"
timeout_seconds = 5.0

[engine]
max_iterations = 5

[engine.failure_policy]
retries = 1
fallback = "abort"

[output]
trace_path = "{trace}"
"#,
        trace = dir.path().join("trace.jsonl").display(),
    );
    let config = dir.path().join("abort.toml");
    write(&config, &text);
    let out = run(&["tune", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("trace.jsonl").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config(dir.path(), 1, 5, false);
    let text = std::fs::read_to_string(&config).unwrap();
    let trace_line_start = text.find("trace_path").unwrap();
    let trace_line_end = trace_line_start + text[trace_line_start..].find('\n').unwrap();
    let patched = format!(
        "{}trace_path = \"/proc/1/rootfs/trace.jsonl\"{}",
        &text[..trace_line_start],
        &text[trace_line_end..]
    );
    write(&config, &patched);
    let out = run(&["tune", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[cfg(unix)]
#[test]
fn sigint_stops_gracefully_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    // A slow objective so the run is still going when the signal lands.
    let text = format!(
        r#"
seed = 9

[space]
[[space.params]]
name = "x"
kind = "real"
min = 0.0
max = 1.0
default = 0.5

[objective]
kind = "process"
command_template = "sleep 0.1"
value_source = "wall_clock_seconds"
timeout_seconds = 10.0

[engine]
max_iterations = 10000
grad_tol = 1e-300

[output]
trace_path = "{trace}"
checkpoint_path = "{ckpt}"
"#,
        trace = dir.path().join("trace.jsonl").display(),
        ckpt = dir.path().join("run.ckpt").display(),
    );
    let config = dir.path().join("slow.toml");
    write(&config, &text);
    let mut child = bin()
        .args(["tune", config.to_str().unwrap()])
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(1500));
    let kill = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(kill.success());
    let status = child.wait().unwrap();
    assert!(status.success(), "graceful interrupt should exit 0");
    let ckpt: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run.ckpt")).unwrap(),
    )
    .unwrap();
    let iteration = ckpt["state"]["iteration"].as_u64().unwrap();
    assert!(iteration > 0 && iteration < 10000, "iteration {iteration}");
}

#[test]
fn usage_error_exits_one() {
    let out = run(&["tune"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

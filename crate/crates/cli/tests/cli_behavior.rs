//! Black-box behavior of the `ara` binary: exit codes, stream discipline,
//! and the documented command examples.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ara(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ara"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout_of(args: &[&str]) -> String {
    let out = ara(args);
    assert!(
        out.status.success(),
        "ara {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn help_and_version_exit_zero() {
    let help = ara(&["--help"]);
    assert_eq!(exit_code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("sweep"));
    let version = ara(&["--version"]);
    assert_eq!(exit_code(&version), 0);
}

#[test]
fn unknown_flag_is_a_usage_error_naming_the_flag() {
    let out = ara(&["plan", "--preset", "qdr", "--frobnicate"]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--frobnicate"));
}

#[test]
fn bare_invocation_is_a_usage_error() {
    let out = ara(&[]);
    assert_eq!(exit_code(&out), 1);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_input_file_is_an_io_error() {
    let out = ara(&["run", "--bundle", "/nonexistent/bundle.bin"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn malformed_config_document_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, "{\"command\":{\"warp\":{}}}").unwrap();
    let out = ara(&["--config", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn config_conflicts_with_a_subcommand() {
    let out = ara(&["--config", "whatever.json", "plan", "--preset", "qdr"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn seed_is_rejected_outside_gen() {
    let out = ara(&["--seed", "3", "plan", "--preset", "qdr"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn ylt_is_rejected_outside_run() {
    let out = ara(&["--ylt", "t.bin", "model", "--preset", "fdr", "-P", "1", "-v", "1"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn gen_rejects_an_output_format() {
    let out = ara(&["gen", "--preset", "paper-mini", "--format", "json"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn render_cells_rejects_structured_formats() {
    let out = ara(&[
        "sim",
        "--preset",
        "fdr",
        "-P",
        "4",
        "-v",
        "2",
        "--render-cells",
        "--format",
        "json",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn output_flag_keeps_stdout_clean_and_overwrites_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let first = ara(&[
        "model", "--preset", "fdr", "-P", "16", "-v", "1",
        "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&first), 0);
    assert!(first.stdout.is_empty());
    let original = fs::read(&path).unwrap();
    let second = ara(&[
        "model", "--preset", "qdr", "-P", "16", "-v", "1",
        "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&second), 0);
    assert_ne!(fs::read(&path).unwrap(), original);
}

#[test]
fn model_example_reports_the_published_point() {
    let doc: serde_json::Value =
        serde_json::from_str(&stdout_of(&["model", "--preset", "FDR", "-P", "16", "-v", "1"]))
            .unwrap();
    let prediction = &doc["prediction"];
    let total = prediction["total_time_s"].as_f64().unwrap();
    assert!((total - 1.6956).abs() < 1e-3, "total {total}");
    assert_eq!(prediction["regime"], "not_fully_overlapped");
    assert!(doc["config"]["command"]["model"]["params"]["t_transfer_4gb"].is_f64());
}

#[test]
fn plan_example_picks_seven_by_two() {
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "plan", "--preset", "QDR", "--objective", "time",
    ]))
    .unwrap();
    assert_eq!(doc["best"], serde_json::json!([7, 2]));
}

#[test]
fn render_example_grid_is_about_eighty_columns() {
    let grid = stdout_of(&["sim", "--preset", "FDR", "-P", "4", "-v", "2", "--render-cells"]);
    let mut widths = Vec::new();
    for line in grid.lines().filter(|l| !l.starts_with("# config:")) {
        let glyphs: String = line.split_whitespace().skip(1).collect();
        widths.push(glyphs.chars().count());
    }
    // 8 vGPU rows, 4 pGPU rows, the link row
    assert_eq!(widths.len(), 13);
    for width in widths {
        assert!((77..=83).contains(&width), "width {width}");
    }
}

#[test]
fn plan_csv_has_the_documented_columns() {
    let csv = stdout_of(&["plan", "--preset", "fdr", "--format", "csv"]);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(
        lines.next().unwrap(),
        "p,v,total_time_s,energy_ws,product,regime,feasible"
    );
    assert!(csv.lines().last().unwrap().starts_with("# best: p=9,v=2"));
}

#[test]
fn sweep_emits_one_row_per_grid_point() {
    let csv = stdout_of(&["sweep", "--preset", "qdr", "--max-p", "3", "--max-v", "2"]);
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + 6, "header plus 3x2 grid");
    assert_eq!(rows[0], "p,v,total_time_s,energy_ws,product,regime,feasible");
    assert!(rows[1].starts_with("1,1,"));
    assert!(rows[6].starts_with("3,2,"));
}

fn small_bundle(dir: &Path) -> String {
    let spec = r#"{
        "seed": 11,
        "n_trials": 40,
        "events_per_trial": [1, 4],
        "n_elts": 3,
        "losses_per_elt": [2, 6],
        "event_catalogue_size": 25,
        "layers_per_program": 1,
        "elts_per_layer": [1, 3],
        "loss_distribution": { "uniform": { "lo": 100.0, "hi": 900.0 } }
    }"#;
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, spec).unwrap();
    let bundle_path = dir.join("bundle.bin");
    let out = ara(&[
        "gen",
        "--spec",
        spec_path.to_str().unwrap(),
        "--output",
        bundle_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    bundle_path.to_str().unwrap().to_string()
}

#[test]
fn run_reports_metrics_and_writes_the_loss_table() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let ylt_path = dir.path().join("losses.bin");
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&[
        "--ylt",
        ylt_path.to_str().unwrap(),
        "run",
        "--bundle",
        &bundle,
        "--devices",
        "4",
        "--workers",
        "2",
        "--return-periods",
        "2,5,10",
        "--tail-prob",
        "0.1",
    ]))
    .unwrap();

    let curve = doc["pml_curve"].as_array().unwrap();
    assert_eq!(curve.len(), 3);
    let losses_at: Vec<f64> = curve.iter().map(|r| r[1].as_f64().unwrap()).collect();
    assert!(losses_at[0] <= losses_at[1] && losses_at[1] <= losses_at[2]);
    assert!(doc["tvar"][1].as_f64().unwrap() >= losses_at[2]);

    let (table, meta) =
        ara_core::datagen::container::read_ylt(fs::File::open(&ylt_path).unwrap()).unwrap();
    assert_eq!(table.losses.len(), 40);
    let echoed: serde_json::Value = serde_json::from_str(&meta.unwrap()).unwrap();
    assert_eq!(echoed["command"]["run"]["devices"], 4);
}

#[test]
fn seed_override_changes_the_generated_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{
        "seed": 11,
        "n_trials": 40,
        "events_per_trial": [1, 4],
        "n_elts": 3,
        "losses_per_elt": [2, 6],
        "event_catalogue_size": 25,
        "layers_per_program": 1,
        "elts_per_layer": [1, 3],
        "loss_distribution": { "uniform": { "lo": 100.0, "hi": 900.0 } }
    }"#;
    let spec_path = dir.path().join("spec.json");
    fs::write(&spec_path, spec).unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for (path, seed) in [(&a, "7"), (&b, "8")] {
        let out = ara(&[
            "--seed",
            seed,
            "gen",
            "--spec",
            spec_path.to_str().unwrap(),
            "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_ne!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

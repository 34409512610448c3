use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn garage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_garage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_ok_fixture() {
    let out = garage(&["validate", p(&fixture("specs/all_lane_3x3.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "ok\n");
}

#[test]
fn validate_row_width_mismatch_exits_one() {
    let out = garage(&["validate", p(&fixture("specs/bad_row_widths.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("row-widths-len"));

    let json = garage(&["--format", "json", "validate", p(&fixture("specs/bad_row_widths.json"))]);
    let report: Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(report["violations"][0]["rule"], "row-widths-len");
    assert!(json.stderr.len() > 0);
}

#[test]
fn validate_missing_or_garbled_exits_two() {
    assert_eq!(garage(&["validate", "/nonexistent/spec.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(garage(&["validate", p(&bad)]).status.code(), Some(2));
}

#[test]
fn validate_reads_csv_directory() {
    let out = garage(&["validate", p(&fixture("csv_spec"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

fn counts(args: &[&str]) -> Value {
    let mut full = vec!["--format", "json", "generate", "--out"];
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    full.push(p(&scene));
    full.extend_from_slice(args);
    let out = garage(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn generate_counts_on_all_lane_grid() {
    let spec = fixture("specs/all_lane_3x3.json");
    let bright = counts(&[p(&spec), "--light", "bright"]);
    assert_eq!(bright["floor_tile"], 9);
    assert_eq!(bright["column"], 4);
    assert_eq!(bright["lamp"], 9);
    assert_eq!(counts(&[p(&spec), "--light", "dim"])["lamp"], 4);
    assert_eq!(counts(&[p(&spec), "--prune-columns", "1,1"])["column"], 3);
}

#[test]
fn generate_rejects_invalid_spec() {
    let out = garage(&["generate", p(&fixture("specs/bad_row_widths.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn generate_matches_golden_scenes() {
    let plan = fixture("plans/small_garage.json");
    let cases: [(&str, &str, Vec<&str>); 3] = [
        ("specs/all_lane_3x3.json", "scenes/all_lane_3x3.json", vec![]),
        ("specs/ring.json", "scenes/ring.json", vec![]),
        (
            "specs/small_garage.json",
            "scenes/small_garage.json",
            vec!["--light", "moderate", "--occupancy", p(&plan)],
        ),
    ];
    for (spec, golden, extra) in cases {
        let spec = fixture(spec);
        let mut args = vec!["generate", p(&spec)];
        args.extend(extra);
        let out = garage(&args);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(stdout(&out), fs::read_to_string(fixture(golden)).unwrap(), "{golden}");
    }
}

#[test]
fn generated_scene_feeds_scenario_override() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    let out = garage(&[
        "generate",
        p(&fixture("specs/small_garage.json")),
        "--occupancy",
        p(&fixture("plans/small_garage.json")),
        "--out",
        p(&scene),
        "--obj-out",
        p(&dir.path().join("scene.obj")),
        "--classified-out",
        p(&dir.path().join("classified.json")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let obj = fs::read_to_string(dir.path().join("scene.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("v ")));
    assert!(fs::read_to_string(dir.path().join("classified.json")).unwrap().contains("\"cells\""));
    let run = garage(&[
        "--format",
        "json",
        "scenario",
        "--scene",
        p(&scene),
        "--path",
        p(&fixture("scenarios/small_garage_path.json")),
        "--target",
        "vehicle-4-3",
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report: Value = serde_json::from_str(&stdout(&run)).unwrap();
    assert_eq!(report["label"], "custom");
    assert_eq!(report["sweeps"][0]["target_id"], "vehicle-4-3");
}

#[test]
fn case1_defaults_report_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("case1.json");
    let out = garage(&["scenario", "--case", "1", "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["schema"], "report/1");
    assert_eq!(report["clearing"]["recovered"], true);
    assert_eq!(report["clearing"]["monotone"], true);
    let csv = fs::read_to_string(dir.path().join("case1.target.csv")).unwrap();
    assert!(csv.starts_with("s_m,x,y,heading_rad,in_frustum,visible_fraction,confidence_ext\n"));
}

#[test]
fn case3_layout_writes_one_csv_per_vehicle() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("c3.json");
    let out = garage(&[
        "scenario",
        "--case",
        "3",
        "--layout",
        p(&fixture("scenarios/layout_three.json")),
        "--out",
        p(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for slot in ["close", "medium", "far"] {
        assert!(dir.path().join(format!("c3.vehicle-{slot}.csv")).exists(), "{slot}");
    }
}

#[test]
fn scenario_file_and_flags() {
    let out = garage(&["--format", "json", "scenario", "--file", p(&fixture("scenarios/case3_mixed.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["light_level"], "clear");
    assert_eq!(report["sweeps"].as_array().unwrap().len(), 2);
}

#[test]
fn scenario_usage_and_construction_errors() {
    assert_eq!(garage(&["scenario", "--case", "4"]).status.code(), Some(2));
    assert_eq!(garage(&["scenario"]).status.code(), Some(2));
    let bad = garage(&["scenario", "--case", "2", "--column-offset", "7.5"]);
    assert_eq!(bad.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "[]").unwrap();
    assert_eq!(garage(&["scenario", "--case", "3", "--layout", p(&empty)]).status.code(), Some(1));
    assert_eq!(garage(&["scenario", "--case", "1", "--step", "0"]).status.code(), Some(2));
}

fn light_only_report(dir: &Path) -> PathBuf {
    let doc = dir.join("light.json");
    fs::write(
        &doc,
        "{\n  \"schema\": \"scenario/1\",\n  \"label\": \"light_only\",\n  \"params\": {}\n}\n",
    )
    .unwrap();
    let report = dir.join("report.json");
    let out = garage(&["scenario", "--file", p(&doc), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    report
}

#[test]
fn score_all_visible_bright_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = light_only_report(dir.path());
    let out = garage(&["--format", "json", "score", p(&report)]);
    assert_eq!(out.status.code(), Some(0));
    let score: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(score["total"], 0.0);
}

#[test]
fn score_weights() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("c2.json");
    assert_eq!(garage(&["scenario", "--case", "2", "--out", p(&report)]).status.code(), Some(0));
    let out = garage(&["--format", "json", "score", p(&report), "--weights", "1,0,0"]);
    let score: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let occ = score["occlusion_term"].as_f64().unwrap();
    assert!((score["total"].as_f64().unwrap() - 100.0 * occ).abs() < 1e-9);
    assert_eq!(garage(&["score", p(&report), "--weights", "0.5,0.5,0.5"]).status.code(), Some(2));
    assert_eq!(garage(&["score", "/nonexistent/report.json"]).status.code(), Some(2));
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let report = light_only_report(dir.path());
    let cfg = dir.path().join("garage.toml");
    fs::write(&cfg, "format = \"csv\"\nweights = [0.0, 0.0, 1.0]\n").unwrap();
    let out = garage(&["--config", p(&cfg), "score", p(&report)]);
    let text = stdout(&out);
    assert!(text.starts_with("total,"), "{text}");
    let flagged = garage(&["--config", p(&cfg), "--format", "json", "score", p(&report), "--weights", "0.4,0.4,0.2"]);
    let score: Value = serde_json::from_str(&stdout(&flagged)).unwrap();
    assert_eq!(score["weights"]["occlusion"], 0.4);

    fs::write(&cfg, "colour = \"blue\"\n").unwrap();
    assert_eq!(garage(&["--config", p(&cfg), "score", p(&report)]).status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let layout = fixture("scenarios/layout_three.json");
        let out = garage(&["--seedless", "scenario", "--case", "3", "--layout", p(&layout), "--out", p(path)]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.vehicle-far.csv")).unwrap(),
        fs::read(dir.path().join("b.vehicle-far.csv")).unwrap()
    );
}

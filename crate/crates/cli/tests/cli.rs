use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pipesim_core::perf::PerfModel;
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn pipesim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipesim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn with_scenario<'a>(scenario: &'a str, rest: &[&'a str]) -> Vec<String> {
    let mut v = vec!["--scenario".to_string(), fixture(scenario).to_string_lossy().into_owned()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v
}

fn run(scenario: &str, rest: &[&str], out: &Path) -> Output {
    let args = with_scenario(scenario, rest);
    pipesim(&args.iter().map(String::as_str).collect::<Vec<_>>(), out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Vec<T> {
    csv::Reader::from_path(path).unwrap().deserialize().map(Result::unwrap).collect()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("scenario.json", &["validate"], dir.path()).status.code(), Some(0));

    let bad = run("scenario-core-violation.json", &["validate"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("core-bound"), "{}", stderr(&bad));

    let missing = run("no-such-scenario.json", &["validate"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("no-such-scenario.json"));
}

#[test]
fn ram_oversubscription_only_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("scenario-ram-warning.json", &["validate"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning[ram-oversubscribed]"), "{}", stderr(&o));
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scenario.json");
    fs::write(
        &scen,
        "{\n  \"pipeline\": \"pipeline.json\",\n  \"batch\": oops\n}\n",
    )
    .unwrap();
    let o = pipesim(&["--scenario", scen.to_str().unwrap(), "validate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario.json:3:"), "{}", stderr(&o));
}

#[test]
fn invalid_stage_in_pipeline_file_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut pipeline: serde_json::Value = serde_json::from_str(&fs::read_to_string(fixture("pipeline.json")).unwrap()).unwrap();
    pipeline["stages"][1]["input_loc"] = "LocalFS".into();
    fs::write(dir.path().join("pipeline.json"), pipeline.to_string()).unwrap();
    for f in ["batch.json", "cluster-single.json", "services.json", "perf-model.json", "pricing.json", "scenario.json"] {
        fs::copy(fixture(f), dir.path().join(f)).unwrap();
    }
    let scen = dir.path().join("scenario.json");
    let o = pipesim(&["--scenario", scen.to_str().unwrap(), "validate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("distributed-input-location"), "{}", stderr(&o));
}

#[derive(Deserialize)]
struct StageRow {
    sample: String,
    stage: String,
    share_pct: f64,
}

#[test]
fn simulate_breakdown_has_a_row_per_sample_and_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("scenario.json", &["simulate"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stages: Vec<StageRow> = rows(&dir.path().join("stages.csv"));
    let pre: Vec<_> = stages.iter().filter(|r| ["BWA/MD", "BQSRP", "HC"].contains(&r.stage.as_str())).collect();
    assert_eq!(pre.len(), 18);
    assert!(pre.iter().all(|r| r.sample != "batch"));
    assert!(stages.iter().any(|r| r.stage == "VariantDiscovery" && r.sample == "batch"));
    let total: f64 = stages.iter().map(|r| r.share_pct).sum();
    assert!((total - 100.0).abs() < 1e-9, "{total}");
    for f in ["timeline.csv", "phases.csv", "cost-summary.csv", "cost-samples.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn json_format_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("scenario.json", &["--format", "json", "simulate"], dir.path());
    assert!(o.status.success());
    for f in ["timeline.json", "stages.json", "phases.json", "cost.json"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap();
    }
    let o = run("scenario.json", &["--format", "json", "plan"], dir.path());
    assert!(o.status.success());
    let plan: pipesim_core::planner::ExecutionPlan =
        serde_json::from_str(&fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert!(pipesim_core::planner::check_staging(&plan).is_ok());
}

#[test]
fn calibrated_model_round_trips_and_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let obs = fixture("scaling-observations.csv");
    let o = run(
        "scenario.json",
        &["--interpolate-efficiency", "calibrate", "--observations", obs.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let written: PerfModel = serde_json::from_str(&fs::read_to_string(dir.path().join("perf-model-calibrated.json")).unwrap()).unwrap();
    let committed: PerfModel = serde_json::from_str(&fs::read_to_string(fixture("perf-model-calibrated.json")).unwrap()).unwrap();
    assert_eq!(written, committed);
    assert_eq!(written.core_cap, 16);

    #[derive(Deserialize)]
    struct Residual {
        relative_error: f64,
    }
    let res: Vec<Residual> = rows(&dir.path().join("residuals.csv"));
    assert_eq!(res.len(), 4);
    assert!(res.iter().all(|r| r.relative_error.abs() <= 0.05));
}

#[test]
fn calibrate_fixed_rates_and_underdetermined() {
    let dir = tempfile::tempdir().unwrap();
    let obs = fixture("scaling-observations.csv");
    let o = run("scenario.json", &["calibrate", "--observations", obs.to_str().unwrap(), "--fix-rates"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let model: PerfModel = serde_json::from_str(&fs::read_to_string(dir.path().join("perf-model-calibrated.json")).unwrap()).unwrap();
    assert!(model.rate_overrides.is_empty());

    let only_multi = dir.path().join("multi.csv");
    fs::write(&only_multi, "nodes,cores_per_node,config,stages,size_gb,minutes\n2,8,,BWA/MD+BQSRP,14.2,229\n").unwrap();
    let o = run("scenario.json", &["calibrate", "--observations", only_multi.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rate_scale") && stderr(&o).contains("core_cap"), "{}", stderr(&o));

    let o = run("scenario.json", &["calibrate", "--observations", "/nonexistent.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    value: String,
    nodes: usize,
    compute_min: f64,
    makespan_min: f64,
    stages: String,
}

fn sweep(scenario: &str, args: &[&str]) -> Result<Vec<SweepRow>, Output> {
    let dir = tempfile::tempdir().unwrap();
    let mut full = vec!["sweep"];
    full.extend_from_slice(args);
    let o = run(scenario, &full, dir.path());
    if !o.status.success() {
        return Err(o);
    }
    let file = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    Ok(rows(&file))
}

#[test]
fn sweeps_reproduce_scaling_measurements() {
    let rows = sweep(
        "scenario-calibrated.json",
        &["--axis", "nodes", "--values", "2,4", "--stages", "BWA/MD+BQSRP", "--sample", "PFC-0028"],
    )
    .unwrap();
    for (row, measured) in rows.iter().zip([229.0, 168.0]) {
        assert!((row.compute_min / measured - 1.0).abs() <= 0.05, "{} {}", row.value, row.compute_min);
        assert_eq!(row.stages, "BWA/MD+BQSRP");
    }
    let rows = sweep(
        "scenario-calibrated.json",
        &["--axis", "cores", "--values", "16", "--stages", "BWA/MD+BQSRP", "--sample", "PFC-0028"],
    )
    .unwrap();
    assert!((rows[0].compute_min / 165.0 - 1.0).abs() <= 0.05, "{}", rows[0].compute_min);
}

#[test]
fn single_node_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("scenario.json", &["simulate"], dir.path()).status.success());
    #[derive(Deserialize)]
    struct Metric {
        metric: String,
        value: Option<f64>,
    }
    let metrics: Vec<Metric> = rows(&dir.path().join("cost-summary.csv"));
    let makespan = metrics.iter().find(|m| m.metric == "cluster_makespan_min").unwrap().value.unwrap();

    let rows = sweep("scenario.json", &["--axis", "nodes", "--values", "1"]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].nodes, 1);
    assert_eq!(rows[0].makespan_min, makespan);
}

#[test]
fn sweep_needs_efficiency_for_node_counts() {
    let err = sweep("scenario.json", &["--axis", "nodes", "--values", "1,3"]).unwrap_err();
    assert_eq!(err.status.code(), Some(1));
    assert!(stderr(&err).contains("3 nodes"), "{}", stderr(&err));

    let rows = sweep("scenario-calibrated.json", &["--interpolate-efficiency", "--axis", "nodes", "--values", "2,3,4"]).unwrap();
    assert!(rows[0].makespan_min > rows[1].makespan_min && rows[1].makespan_min > rows[2].makespan_min);
}

#[test]
fn config_sweep_leaves_timing_unchanged() {
    let rows = sweep("scenario.json", &["--axis", "config", "--values", "20/2/4/16,20/4/2/8,10/4/2/8,10/8/1/6"]).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.makespan_min == rows[0].makespan_min));
    assert!(sweep("scenario.json", &["--axis", "config", "--values", "1/1/9/1"]).is_err());
}

#[test]
fn compare_prints_three_significant_figures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("scenario.json", &["compare", "--sample", "PFC-0028", "--makespan", "446"], dir.path());
    assert!(o.status.success());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("time ratio (cluster/service) 5.79"), "{out}");

    let o = run("scenario.json", &["compare", "--sample", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

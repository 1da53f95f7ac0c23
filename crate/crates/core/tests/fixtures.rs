//! The JSON fixtures and the in-code reference deployment must agree.

use std::fs::File;
use std::path::{Path, PathBuf};

use pipesim_core::calibrate::read_observations;
use pipesim_core::config::{read_json, Scenario};
use pipesim_core::cost::Pricing;
use pipesim_core::perf::PerfModel;
use pipesim_core::pipeline::{Batch, Pipeline};
use pipesim_core::reference;
use pipesim_core::topology::{Cluster, ServiceSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

#[test]
fn fixture_files_match_reference() {
    assert_eq!(read_json::<Pipeline>(&fixture("pipeline.json")).unwrap(), reference::pipeline());
    assert_eq!(read_json::<Batch>(&fixture("batch.json")).unwrap(), reference::batch());
    assert_eq!(read_json::<Batch>(&fixture("batch-pfc-0028.json")).unwrap(), reference::pfc_0028());
    assert_eq!(read_json::<Cluster>(&fixture("cluster-single.json")).unwrap(), reference::single_node());
    assert_eq!(read_json::<Cluster>(&fixture("cluster-swarm.json")).unwrap(), reference::swarm_cluster());
    assert_eq!(read_json::<Vec<ServiceSpec>>(&fixture("services.json")).unwrap(), reference::services());
    assert_eq!(read_json::<Pricing>(&fixture("pricing.json")).unwrap(), reference::pricing());
    assert_eq!(read_json::<PerfModel>(&fixture("perf-model.json")).unwrap(), PerfModel::default());
    let obs = read_observations(File::open(fixture("scaling-observations.csv")).unwrap()).unwrap();
    assert_eq!(obs, reference::scaling_observations());
}

#[test]
fn every_scenario_loads() {
    for name in [
        "scenario.json",
        "scenario-calibrated.json",
        "scenario-20-4-2-8.json",
        "scenario-ram-warning.json",
        "scenario-core-violation.json",
        "scenario-pfc-0028.json",
        "scenario-swarm.json",
    ] {
        let s = Scenario::load(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!s.batch.samples.is_empty());
    }
}

#[test]
fn calibrated_model_is_valid() {
    let m: PerfModel = read_json(&fixture("perf-model-calibrated.json")).unwrap();
    m.validate().unwrap();
    assert!(m.interpolate_efficiency);
    assert_eq!(m.scaleout_efficiency.keys().copied().collect::<Vec<_>>(), [1, 2, 4]);
}

//! Built-in reference scenario: the six-stage hybrid GATK pipeline, the
//! three-node swarm deployment, the measured sample batch and the four
//! Spark configurations. `fixtures/` ships the same values as JSON/CSV.

use crate::calibrate::Observation;
use crate::cost::Pricing;
use crate::pipeline::{Batch, ExecMode, Pipeline, Sample, Scope, Stage};
use crate::planner::SparkResourceConfig;
use crate::topology::{Cluster, NodeRole, NodeSpec, PlacementStrategy, ServiceRole, ServiceSpec};

/// Measured min/GB averages under config 20/2/4/16.
pub const BWA_MD_RATE: f64 = 19.3;
pub const BQSRP_RATE: f64 = 5.6;
pub const HC_RATE: f64 = 20.2;
/// Rate of the residual stage: 12% of processing at the three measured rates,
/// i.e. 0.12 * 45.1 / 0.88 min/GB.
pub const RESIDUAL_RATE: f64 = 6.15;

/// Reference sample used for single-sample experiments.
pub const PFC_0028: &str = "PFC-0028";
pub const PFC_0028_GB: f64 = 14.2;

pub const SERVICE_RATE_PER_GB: f64 = 0.217;
pub const SERVICE_MINUTES_PER_SAMPLE: f64 = 77.0;
/// Derived: 28 GBP over the simulated six-sample makespan on one 8-core node.
pub const NODE_HOURLY_PRICE: f64 = 0.368;

pub const NODE_CORES: u32 = 8;
pub const NODE_RAM_GB: f64 = 55.0;

/// Phase label for everything outside pre-processing.
pub const RESIDUAL_PHASE: &str = "residual";

pub fn pipeline() -> Pipeline {
    use ExecMode::*;
    use Scope::*;
    Pipeline {
        id: "gatk-spark-hybrid".into(),
        stages: vec![
            Stage::new("FastqToSam", CentralizedWrapped, PerSample, 0.0).with_phase(RESIDUAL_PHASE),
            Stage::new("BWA/MD", DistributedNative, PerSample, BWA_MD_RATE),
            Stage::new("BQSRP", DistributedNative, PerSample, BQSRP_RATE),
            Stage::new("HC", DistributedNative, PerSample, HC_RATE),
            Stage::new("VariantDiscovery", CentralizedWrapped, PerBatch, RESIDUAL_RATE).with_phase(RESIDUAL_PHASE),
            Stage::new("CallsetRefinement", CentralizedWrapped, PerBatch, 0.0).with_phase(RESIDUAL_PHASE),
        ],
    }
}

/// Six exomes, 10.8-15.9 GB, totalling 85.76 GB (the volume billed at
/// 0.217/GB for 18.61).
pub fn batch() -> Batch {
    Batch::new(vec![
        Sample::new("S1", 10.8),
        Sample::new(PFC_0028, PFC_0028_GB),
        Sample::new("S3", 14.5),
        Sample::new("S4", 15.1),
        Sample::new("S5", 15.26),
        Sample::new("S6", 15.9),
    ])
}

pub fn pfc_0028() -> Batch {
    Batch::new(vec![Sample::new(PFC_0028, PFC_0028_GB)])
}

pub fn single_node() -> Cluster {
    Cluster {
        id: "single-8c".into(),
        nodes: vec![NodeSpec::new("manager", NODE_CORES, NODE_RAM_GB, NODE_HOURLY_PRICE, NodeRole::Manager)],
    }
}

/// Swarm manager plus two workers.
pub fn swarm_cluster() -> Cluster {
    let node = |id: &str, role| NodeSpec::new(id, NODE_CORES, NODE_RAM_GB, NODE_HOURLY_PRICE, role);
    Cluster {
        id: "swarm-3".into(),
        nodes: vec![
            node("manager", NodeRole::Manager),
            node("worker-1", NodeRole::Worker),
            node("worker-2", NodeRole::Worker),
        ],
    }
}

pub fn services() -> Vec<ServiceSpec> {
    use PlacementStrategy::*;
    vec![
        ServiceSpec::new("spark-master", ManagerOnly, ServiceRole::SparkMaster),
        ServiceSpec::new("hdfs-namenode", ManagerOnly, ServiceRole::HdfsNamenode),
        ServiceSpec::new("hdfs-volume", ManagerOnly, ServiceRole::VolumeMount),
        ServiceSpec::new("spark-worker", Global, ServiceRole::SparkWorker),
        ServiceSpec::new("hdfs-datanode", Global, ServiceRole::HdfsDatanode),
        ServiceSpec::new("reference-image", Global, ServiceRole::ReferenceImage),
    ]
}

/// 20/2/4/16, 20/4/2/8, 10/4/2/8, 10/8/1/6.
pub fn configs() -> [SparkResourceConfig; 4] {
    [
        SparkResourceConfig::new(20.0, 2, 4, 16.0),
        SparkResourceConfig::new(20.0, 4, 2, 8.0),
        SparkResourceConfig::new(10.0, 4, 2, 8.0),
        SparkResourceConfig::new(10.0, 8, 1, 6.0),
    ]
}

pub fn pricing() -> Pricing {
    Pricing {
        currency: "GBP".into(),
        service_rate_per_gb: SERVICE_RATE_PER_GB,
        service_minutes_per_sample: SERVICE_MINUTES_PER_SAMPLE,
        billing: Default::default(),
    }
}

/// BWA/MD + BQSRP on PFC-0028: 1x16, 1x32, 2x8, 4x8.
pub fn scaling_observations() -> Vec<Observation> {
    let stages = vec!["BWA/MD".to_string(), "BQSRP".to_string()];
    [(1, 16, 165.0), (1, 32, 175.0), (2, 8, 229.0), (4, 8, 168.0)]
        .into_iter()
        .map(|(nodes, cores, minutes)| Observation {
            nodes,
            cores_per_node: cores,
            config: None,
            stages: stages.clone(),
            size_gb: PFC_0028_GB,
            measured_min: minutes,
        })
        .collect()
}

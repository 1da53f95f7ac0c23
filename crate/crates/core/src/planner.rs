//! Compiles a pipeline, batch, cluster and Spark resource config into an
//! ordered execution plan.
//!
//! Each sample's per-sample chain is emitted contiguously, samples in batch
//! order, followed by the per-batch stages. Whenever a stage needs its input
//! somewhere other than where the dataset currently lives, a single
//! `DataTransfer` is inserted in front of it. Raw FastQ input starts on the
//! local file system.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{validate_batch, validate_pipeline, Batch, ExecMode, Location, Pipeline, Scope, Stage};
use crate::report::ValidationReport;
use crate::topology::Cluster;

pub const INITIAL_LOCATION: Location = Location::LocalFs;
/// Dataset label of the merged output of the first per-batch stage.
pub const BATCH_DATASET: &str = "batch";

/// Spark submit settings, written X/Y/W/Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparkResourceConfig {
    /// X
    pub driver_mem_gb: f64,
    /// Y
    pub num_executors: u32,
    /// W
    pub cores_per_executor: u32,
    /// Z
    pub executor_mem_gb: f64,
}

impl SparkResourceConfig {
    pub fn new(driver_mem_gb: f64, num_executors: u32, cores_per_executor: u32, executor_mem_gb: f64) -> Self {
        Self { driver_mem_gb, num_executors, cores_per_executor, executor_mem_gb }
    }

    pub fn executor_cores(&self) -> u64 {
        u64::from(self.num_executors) * u64::from(self.cores_per_executor)
    }

    pub fn requested_ram_gb(&self) -> f64 {
        self.driver_mem_gb + f64::from(self.num_executors) * self.executor_mem_gb
    }
}

impl fmt::Display for SparkResourceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.driver_mem_gb, self.num_executors, self.cores_per_executor, self.executor_mem_gb
        )
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("expected X/Y/W/Z, got {0:?}")]
pub struct ParseConfigError(String);

impl FromStr for SparkResourceConfig {
    type Err = ParseConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseConfigError(s.to_string());
        let parts: Vec<&str> = s.trim().split('/').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(err());
        }
        Ok(Self {
            driver_mem_gb: parts[0].parse().map_err(|_| err())?,
            num_executors: parts[1].parse().map_err(|_| err())?,
            cores_per_executor: parts[2].parse().map_err(|_| err())?,
            executor_mem_gb: parts[3].parse().map_err(|_| err())?,
        })
    }
}

/// Core bound violations are errors; RAM oversubscription is only a warning.
pub fn validate_config(cfg: &SparkResourceConfig, c: &Cluster) -> ValidationReport {
    let subject = format!("config {cfg}");
    let mut report = ValidationReport::new();
    if !(cfg.driver_mem_gb > 0.0 && cfg.driver_mem_gb.is_finite()) {
        report.error(&subject, "driver-memory", "driver memory must be > 0");
    }
    if !(cfg.executor_mem_gb > 0.0 && cfg.executor_mem_gb.is_finite()) {
        report.error(&subject, "executor-memory", "executor memory must be > 0");
    }
    if cfg.num_executors == 0 || cfg.cores_per_executor == 0 {
        report.error(&subject, "executor-count", "executor count and cores per executor must be >= 1");
    }
    let cores = c.total_cores();
    if cfg.executor_cores() > cores {
        report.error(
            &subject,
            "core-bound",
            format!("executors x cores = {} exceeds total cluster cores {cores}", cfg.executor_cores()),
        );
    }
    let ram = c.total_ram_gb();
    if cfg.requested_ram_gb() > ram {
        report.warning(
            &subject,
            "ram-oversubscribed",
            format!("driver + executors x memory = {} GB exceeds total cluster RAM {ram} GB", cfg.requested_ram_gb()),
        );
    }
    report.sorted()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage_id: String,
    pub exec_mode: ExecMode,
    pub scope: Scope,
    pub sample_ids: Vec<String>,
    /// Dataset labels read by this run.
    pub consumes: Vec<String>,
    /// Dataset label written by this run.
    pub produces: String,
    pub input_loc: Location,
    pub output_loc: Location,
    pub input_gb: f64,
    pub nodes: Vec<String>,
    /// Smallest core count among `nodes`.
    pub cores_per_node: u32,
    pub effective_cores: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTransfer {
    pub dataset: String,
    pub sample_ids: Vec<String>,
    pub from_loc: Location,
    pub to_loc: Location,
    pub size_gb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PlanStep {
    StageRun(StageRun),
    DataTransfer(DataTransfer),
}

impl PlanStep {
    pub fn label(&self) -> String {
        match self {
            PlanStep::StageRun(r) => {
                let who = if r.scope == Scope::PerBatch { BATCH_DATASET.to_string() } else { r.sample_ids.join(",") };
                format!("{} [{}]", r.stage_id, who)
            }
            PlanStep::DataTransfer(t) => {
                format!("stage {} {}->{}", t.dataset, t.from_loc.as_str(), t.to_loc.as_str())
            }
        }
    }

    pub fn sample_ids(&self) -> &[String] {
        match self {
            PlanStep::StageRun(r) => &r.sample_ids,
            PlanStep::DataTransfer(t) => &t.sample_ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub pipeline_id: String,
    pub cluster_id: String,
    pub config: SparkResourceConfig,
    /// Stage definitions the plan was compiled from; the simulator reads rates here.
    pub stages: Vec<Stage>,
    pub steps: Vec<PlanStep>,
}

impl ExecutionPlan {
    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn stage_runs(&self) -> impl Iterator<Item = &StageRun> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::StageRun(r) => Some(r),
            _ => None,
        })
    }

    pub fn transfers(&self) -> impl Iterator<Item = &DataTransfer> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::DataTransfer(t) => Some(t),
            _ => None,
        })
    }

    /// Fixed-width table for terminal output.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "plan {} on {} (config {})\n{:>4}  {:<12} {:<40} {:>10}  {}\n",
            self.pipeline_id, self.cluster_id, self.config, "#", "kind", "step", "GB", "where"
        );
        for (i, step) in self.steps.iter().enumerate() {
            let (kind, gb, place) = match step {
                PlanStep::StageRun(r) => (
                    "StageRun",
                    r.input_gb,
                    format!("{} ({} cores)", r.nodes.join(","), r.effective_cores),
                ),
                PlanStep::DataTransfer(t) => ("DataTransfer", t.size_gb, String::new()),
            };
            out.push_str(&format!("{:>4}  {:<12} {:<40} {:>10.3}  {}\n", i, kind, step.label(), gb, place));
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid pipeline:\n{0}")]
    InvalidPipeline(ValidationReport),
    #[error("invalid batch:\n{0}")]
    InvalidBatch(ValidationReport),
    #[error("invalid cluster:\n{0}")]
    InvalidCluster(ValidationReport),
    #[error("core bound violated: executors x cores = {requested} exceeds cluster cores {available}")]
    CoreBound { requested: u64, available: u64 },
    #[error("invalid resource config:\n{0}")]
    InvalidConfig(ValidationReport),
}

struct Dataset {
    loc: Location,
    size_gb: f64,
}

fn stage_in(steps: &mut Vec<PlanStep>, label: &str, ds: &mut Dataset, samples: &[String], to: Location) {
    if ds.loc != to {
        steps.push(PlanStep::DataTransfer(DataTransfer {
            dataset: label.to_string(),
            sample_ids: samples.to_vec(),
            from_loc: ds.loc,
            to_loc: to,
            size_gb: ds.size_gb,
        }));
        ds.loc = to;
    }
}

pub fn plan_execution(
    p: &Pipeline,
    b: &Batch,
    c: &Cluster,
    cfg: &SparkResourceConfig,
) -> Result<ExecutionPlan, PlanError> {
    let report = validate_pipeline(p);
    if report.has_errors() {
        return Err(PlanError::InvalidPipeline(report));
    }
    let report = validate_batch(b);
    if report.has_errors() {
        return Err(PlanError::InvalidBatch(report));
    }
    let report = c.validate();
    if report.has_errors() {
        return Err(PlanError::InvalidCluster(report));
    }
    let report = validate_config(cfg, c);
    if report.errors().any(|v| v.rule == "core-bound") {
        return Err(PlanError::CoreBound { requested: cfg.executor_cores(), available: c.total_cores() });
    }
    if report.has_errors() {
        return Err(PlanError::InvalidConfig(report));
    }

    let manager = c.manager().expect("validated cluster has a manager");
    // Global spark-worker placement: every node, manager included.
    let workers: Vec<String> = c.sorted_ids().into_iter().map(String::from).collect();
    let worker_cores = c.nodes.iter().map(|n| n.cores).min().unwrap_or(1);
    let distributed_cores = cfg.executor_cores().min(c.total_cores()).max(1);

    let placement = |stage: &Stage| -> (Vec<String>, u32, u64) {
        match stage.exec_mode {
            ExecMode::CentralizedWrapped => (vec![manager.id.clone()], manager.cores, u64::from(manager.cores)),
            ExecMode::DistributedNative => (workers.clone(), worker_cores, distributed_cores),
        }
    };

    let mut steps = Vec::new();
    let mut datasets: BTreeMap<String, Dataset> = BTreeMap::new();

    let (per_sample, per_batch): (Vec<&Stage>, Vec<&Stage>) =
        p.stages.iter().partition(|s| s.scope == Scope::PerSample);

    for sample in &b.samples {
        let label = format!("sample:{}", sample.id);
        let mut ds = Dataset { loc: INITIAL_LOCATION, size_gb: sample.size_gb };
        let ids = vec![sample.id.clone()];
        for stage in &per_sample {
            stage_in(&mut steps, &label, &mut ds, &ids, stage.input_loc);
            let (nodes, cores_per_node, effective_cores) = placement(stage);
            steps.push(PlanStep::StageRun(StageRun {
                stage_id: stage.id.clone(),
                exec_mode: stage.exec_mode,
                scope: stage.scope,
                sample_ids: ids.clone(),
                consumes: vec![label.clone()],
                produces: label.clone(),
                input_loc: stage.input_loc,
                output_loc: stage.output_loc,
                input_gb: ds.size_gb,
                nodes,
                cores_per_node,
                effective_cores,
            }));
            ds.size_gb *= stage.output_size_factor;
            ds.loc = stage.output_loc;
        }
        datasets.insert(label, ds);
    }

    let all_ids: Vec<String> = b.samples.iter().map(|s| s.id.clone()).collect();
    let mut merged: Option<Dataset> = None;
    for stage in &per_batch {
        let consumes: Vec<String>;
        let input_gb: f64;
        match merged.as_mut() {
            None => {
                consumes = b.samples.iter().map(|s| format!("sample:{}", s.id)).collect();
                let mut total = 0.0;
                for (label, sample) in consumes.iter().zip(&b.samples) {
                    let ds = datasets.get_mut(label).expect("every sample has a dataset");
                    stage_in(&mut steps, label, ds, std::slice::from_ref(&sample.id), stage.input_loc);
                    total += ds.size_gb;
                }
                input_gb = total;
            }
            Some(ds) => {
                consumes = vec![BATCH_DATASET.to_string()];
                stage_in(&mut steps, BATCH_DATASET, ds, &all_ids, stage.input_loc);
                input_gb = ds.size_gb;
            }
        }
        let (nodes, cores_per_node, effective_cores) = placement(stage);
        steps.push(PlanStep::StageRun(StageRun {
            stage_id: stage.id.clone(),
            exec_mode: stage.exec_mode,
            scope: stage.scope,
            sample_ids: all_ids.clone(),
            consumes,
            produces: BATCH_DATASET.to_string(),
            input_loc: stage.input_loc,
            output_loc: stage.output_loc,
            input_gb,
            nodes,
            cores_per_node,
            effective_cores,
        }));
        merged = Some(Dataset { loc: stage.output_loc, size_gb: input_gb * stage.output_size_factor });
    }

    Ok(ExecutionPlan {
        pipeline_id: p.id.clone(),
        cluster_id: c.id.clone(),
        config: *cfg,
        stages: p.stages.clone(),
        steps,
    })
}

/// Replays a plan while tracking every dataset's location and returns a
/// description of the first staging problem, if any: a stage run that finds
/// its input in the wrong place, a transfer that starts from the wrong
/// location, or two back-to-back transfers of one dataset.
pub fn check_staging(plan: &ExecutionPlan) -> Result<(), String> {
    let mut locs: BTreeMap<&str, Location> = BTreeMap::new();
    let mut last_transfer: Option<&str> = None;
    for (i, step) in plan.steps.iter().enumerate() {
        match step {
            PlanStep::DataTransfer(t) => {
                let current = locs.get(t.dataset.as_str()).copied().unwrap_or(INITIAL_LOCATION);
                if t.from_loc == t.to_loc {
                    return Err(format!("step {i}: transfer of {} is a no-op", t.dataset));
                }
                if t.from_loc != current {
                    return Err(format!("step {i}: {} is on {:?}, transfer starts from {:?}", t.dataset, current, t.from_loc));
                }
                if last_transfer == Some(t.dataset.as_str()) {
                    return Err(format!("step {i}: consecutive transfers of {}", t.dataset));
                }
                locs.insert(&t.dataset, t.to_loc);
                last_transfer = Some(&t.dataset);
            }
            PlanStep::StageRun(r) => {
                for ds in &r.consumes {
                    let current = locs.get(ds.as_str()).copied().unwrap_or(INITIAL_LOCATION);
                    if current != r.input_loc {
                        return Err(format!("step {i}: {} needs {} on {:?}, found {:?}", r.stage_id, ds, r.input_loc, current));
                    }
                }
                locs.insert(&r.produces, r.output_loc);
                last_transfer = None;
            }
        }
    }
    Ok(())
}

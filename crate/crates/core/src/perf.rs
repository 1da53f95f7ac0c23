//! Duration model and sequential simulator.
//!
//! Wrapped stages run on one machine and never speed up:
//!
//! ```text
//! fixed + rate * size
//! ```
//!
//! Native stages scale with cores up to a cap, and lose efficiency as nodes
//! are added:
//!
//! ```text
//! fixed + rate * size * baseline_cores / (nodes * min(cores_per_node, cap) * efficiency(nodes))
//! ```
//!
//! Rates are minutes per GB measured at the baseline point (one node with
//! `baseline_cores` cores). The Spark X/Y/W/Z settings do not enter the
//! model; measured times barely move across them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{ExecMode, Stage};
use crate::planner::{ExecutionPlan, PlanStep};

fn default_baseline_cores() -> u32 {
    8
}

fn default_core_cap() -> u32 {
    16
}

fn default_efficiency() -> BTreeMap<u32, f64> {
    BTreeMap::from([(1, 1.0)])
}

fn default_bandwidth() -> f64 {
    1.0
}

fn default_stage_core_caps() -> BTreeMap<String, u32> {
    // HC was not measured beyond 8 cores (a library problem at 16 cores);
    // hold it at the baseline rather than assume it scales.
    BTreeMap::from([("HC".to_string(), 8)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    #[serde(default = "default_baseline_cores")]
    pub baseline_cores: u32,
    /// Cores per node beyond which a native stage stops speeding up.
    #[serde(default = "default_core_cap")]
    pub core_cap: u32,
    /// Node count -> scale-out efficiency in (0, 1]; entry 1 must be 1.0.
    #[serde(default = "default_efficiency")]
    pub scaleout_efficiency: BTreeMap<u32, f64>,
    #[serde(default = "default_bandwidth")]
    pub staging_bandwidth_gb_per_min: f64,
    /// Stage id -> min/GB replacing the stage's own baseline rate.
    #[serde(default)]
    pub rate_overrides: BTreeMap<String, f64>,
    /// Stage id -> core cap replacing `core_cap` for that stage.
    #[serde(default = "default_stage_core_caps")]
    pub stage_core_caps: BTreeMap<String, u32>,
    /// Interpolate efficiency for node counts without an entry (linear between
    /// neighbours, constant beyond the ends). Off means such counts are errors.
    #[serde(default)]
    pub interpolate_efficiency: bool,
}

impl Default for PerfModel {
    fn default() -> Self {
        Self {
            baseline_cores: default_baseline_cores(),
            core_cap: default_core_cap(),
            scaleout_efficiency: default_efficiency(),
            staging_bandwidth_gb_per_min: default_bandwidth(),
            rate_overrides: BTreeMap::new(),
            stage_core_caps: default_stage_core_caps(),
            interpolate_efficiency: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("no scale-out efficiency for {0} nodes (calibrate it or enable interpolation)")]
    UnknownNodeCount(u32),
    #[error("invalid performance model: {0}")]
    InvalidModel(String),
    #[error("invalid duration input: {0}")]
    InvalidInput(String),
    #[error("plan references unknown stage {0}")]
    UnknownStage(String),
}

impl PerfModel {
    pub fn validate(&self) -> Result<(), PerfError> {
        let bad = |m: String| Err(PerfError::InvalidModel(m));
        if self.baseline_cores == 0 {
            return bad("baseline_cores must be >= 1".into());
        }
        if self.core_cap < self.baseline_cores {
            return bad(format!("core_cap {} below baseline_cores {}", self.core_cap, self.baseline_cores));
        }
        if self.scaleout_efficiency.get(&1) != Some(&1.0) {
            return bad("efficiency for 1 node must be exactly 1.0".into());
        }
        for (&n, &e) in &self.scaleout_efficiency {
            if n == 0 || !(e > 0.0 && e <= 1.0) {
                return bad(format!("efficiency({n}) = {e} must be in (0, 1] for n >= 1"));
            }
        }
        if self.staging_bandwidth_gb_per_min.is_nan() || self.staging_bandwidth_gb_per_min <= 0.0 {
            return bad("staging bandwidth must be > 0".into());
        }
        for (id, &r) in &self.rate_overrides {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("rate override for {id} must be finite and >= 0"));
            }
        }
        if let Some((id, _)) = self.stage_core_caps.iter().find(|(_, &c)| c == 0) {
            return bad(format!("core cap for {id} must be >= 1"));
        }
        Ok(())
    }

    pub fn rate(&self, stage: &Stage) -> f64 {
        self.rate_overrides.get(&stage.id).copied().unwrap_or(stage.rate_min_per_gb)
    }

    pub fn core_cap_for(&self, stage_id: &str) -> u32 {
        self.stage_core_caps.get(stage_id).copied().unwrap_or(self.core_cap)
    }

    pub fn efficiency(&self, nodes: u32) -> Result<f64, PerfError> {
        if let Some(&e) = self.scaleout_efficiency.get(&nodes) {
            return Ok(e);
        }
        if !self.interpolate_efficiency || nodes == 0 {
            return Err(PerfError::UnknownNodeCount(nodes));
        }
        let below = self.scaleout_efficiency.range(..nodes).next_back();
        let above = self.scaleout_efficiency.range(nodes..).next();
        match (below, above) {
            (Some((&n0, &e0)), Some((&n1, &e1))) => {
                let t = f64::from(nodes - n0) / f64::from(n1 - n0);
                Ok(e0 + t * (e1 - e0))
            }
            (Some((_, &e)), None) | (None, Some((_, &e))) => Ok(e),
            (None, None) => Err(PerfError::UnknownNodeCount(nodes)),
        }
    }
}

pub fn stage_duration(
    stage: &Stage,
    size_gb: f64,
    nodes: u32,
    cores_per_node: u32,
    model: &PerfModel,
) -> Result<f64, PerfError> {
    if !(size_gb >= 0.0 && size_gb.is_finite()) {
        return Err(PerfError::InvalidInput(format!("size_gb = {size_gb}")));
    }
    let rate = model.rate(stage);
    let fixed = stage.fixed_overhead_min;
    match stage.exec_mode {
        ExecMode::CentralizedWrapped => Ok(fixed + rate * size_gb),
        ExecMode::DistributedNative => {
            if nodes == 0 || cores_per_node == 0 {
                return Err(PerfError::InvalidInput(format!("{nodes} nodes x {cores_per_node} cores")));
            }
            let usable = cores_per_node.min(model.core_cap_for(&stage.id));
            let efficiency = model.efficiency(nodes)?;
            let parallel = f64::from(nodes) * f64::from(usable) * efficiency;
            Ok(fixed + rate * size_gb * f64::from(model.baseline_cores) / parallel)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    StageRun,
    DataTransfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    /// Index into the plan's steps.
    pub step: usize,
    pub kind: StepKind,
    pub label: String,
    /// Stage id for runs, dataset label for transfers.
    pub subject: String,
    pub phase: String,
    pub sample_ids: Vec<String>,
    pub size_gb: f64,
    pub start_min: f64,
    pub end_min: f64,
    /// Exact model duration; `end_min - start_min` carries clock rounding.
    pub minutes: f64,
}

impl TimelineEntry {
    pub fn duration_min(&self) -> f64 {
        self.minutes
    }
}

/// Phase label given to transfer steps.
pub const STAGING_PHASE: &str = "staging";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub entries: Vec<TimelineEntry>,
    pub makespan_min: f64,
    /// Minutes spent in stage runs.
    pub compute_min: f64,
    /// Minutes spent moving data between file systems.
    pub staging_min: f64,
    pub per_stage_min: BTreeMap<String, f64>,
    pub per_stage_gb: BTreeMap<String, f64>,
    /// Stage runs grouped by phase label; staging excluded.
    pub per_phase_min: BTreeMap<String, f64>,
}

impl Timeline {
    /// Percent of compute time per phase; staging is reported separately.
    pub fn phase_shares(&self) -> BTreeMap<String, f64> {
        self.per_phase_min
            .iter()
            .map(|(k, &v)| (k.clone(), if self.compute_min > 0.0 { 100.0 * v / self.compute_min } else { 0.0 }))
            .collect()
    }

    /// Average minutes per input GB of a stage across all its runs.
    pub fn rate_per_gb(&self, stage_id: &str) -> Option<f64> {
        let minutes = self.per_stage_min.get(stage_id)?;
        let gb = self.per_stage_gb.get(stage_id)?;
        (*gb > 0.0).then(|| minutes / gb)
    }

    pub fn stage_runs(&self) -> impl Iterator<Item = &TimelineEntry> {
        self.entries.iter().filter(|e| e.kind == StepKind::StageRun)
    }
}

/// Runs the plan step by step on one clock; steps never overlap.
pub fn simulate(plan: &ExecutionPlan, model: &PerfModel) -> Result<Timeline, PerfError> {
    model.validate()?;
    let mut tl = Timeline::default();
    let mut clock = 0.0;
    for (i, step) in plan.steps.iter().enumerate() {
        let (kind, subject, phase, size_gb, minutes) = match step {
            PlanStep::StageRun(run) => {
                let stage = plan.stage(&run.stage_id).ok_or_else(|| PerfError::UnknownStage(run.stage_id.clone()))?;
                let nodes = u32::try_from(run.nodes.len()).unwrap_or(u32::MAX);
                let minutes = stage_duration(stage, run.input_gb, nodes, run.cores_per_node, model)?;
                (StepKind::StageRun, stage.id.clone(), stage.phase_label().to_string(), run.input_gb, minutes)
            }
            PlanStep::DataTransfer(t) => (
                StepKind::DataTransfer,
                t.dataset.clone(),
                STAGING_PHASE.to_string(),
                t.size_gb,
                t.size_gb / model.staging_bandwidth_gb_per_min,
            ),
        };
        let start = clock;
        clock += minutes;
        match kind {
            StepKind::StageRun => {
                tl.compute_min += minutes;
                *tl.per_stage_min.entry(subject.clone()).or_insert(0.0) += minutes;
                *tl.per_stage_gb.entry(subject.clone()).or_insert(0.0) += size_gb;
                *tl.per_phase_min.entry(phase.clone()).or_insert(0.0) += minutes;
            }
            StepKind::DataTransfer => tl.staging_min += minutes,
        }
        tl.entries.push(TimelineEntry {
            step: i,
            kind,
            label: step.label(),
            subject,
            phase,
            sample_ids: step.sample_ids().to_vec(),
            size_gb,
            start_min: start,
            end_min: clock,
            minutes,
        });
    }
    tl.makespan_min = clock;
    Ok(tl)
}

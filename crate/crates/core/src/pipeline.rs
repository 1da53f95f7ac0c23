//! Pipelines, stages, samples and batches.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::report::ValidationReport;

/// How a stage runs on the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecMode {
    /// Native Spark tool, spread over every worker node, reads and writes the DFS.
    DistributedNative,
    /// Non-Spark tool wrapped through a shell pipe; runs on the manager only
    /// and needs its data on the local file system.
    CentralizedWrapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    PerSample,
    /// Barrier over the whole batch.
    PerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    #[serde(rename = "LocalFS")]
    LocalFs,
    #[serde(rename = "DFS")]
    Dfs,
}

impl Location {
    pub fn as_str(self) -> &'static str {
        match self {
            Location::LocalFs => "LocalFS",
            Location::Dfs => "DFS",
        }
    }
}

impl ExecMode {
    /// The only data location a stage of this mode can read from or write to.
    pub fn required_location(self) -> Location {
        match self {
            ExecMode::DistributedNative => Location::Dfs,
            ExecMode::CentralizedWrapped => Location::LocalFs,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::DistributedNative => "DistributedNative",
            ExecMode::CentralizedWrapped => "CentralizedWrapped",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub id: String,
    pub exec_mode: ExecMode,
    pub scope: Scope,
    pub input_loc: Location,
    pub output_loc: Location,
    /// Minutes per GB of input at the baseline resource point (1 node, 8 cores).
    pub rate_min_per_gb: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fixed_overhead_min: f64,
    /// Output dataset size as a multiple of the input size.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub output_size_factor: f64,
    /// Reporting group; defaults to the stage id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
}

impl Stage {
    pub fn new(
        id: impl Into<String>,
        exec_mode: ExecMode,
        scope: Scope,
        rate_min_per_gb: f64,
    ) -> Self {
        let loc = exec_mode.required_location();
        Self {
            id: id.into(),
            exec_mode,
            scope,
            input_loc: loc,
            output_loc: loc,
            rate_min_per_gb,
            fixed_overhead_min: 0.0,
            output_size_factor: 1.0,
            phase: None,
        }
    }

    pub fn with_fixed_overhead(mut self, minutes: f64) -> Self {
        self.fixed_overhead_min = minutes;
        self
    }

    pub fn with_phase(mut self, phase: impl Into<String>) -> Self {
        self.phase = Some(phase.into());
        self
    }

    pub fn phase_label(&self) -> &str {
        self.phase.as_deref().unwrap_or(&self.id)
    }

    fn check(&self, report: &mut ValidationReport) {
        let id = &self.id;
        if !(self.rate_min_per_gb >= 0.0 && self.rate_min_per_gb.is_finite()) {
            report.error(id, "negative-rate", format!("rate_min_per_gb = {} must be finite and >= 0", self.rate_min_per_gb));
        }
        if !(self.fixed_overhead_min >= 0.0 && self.fixed_overhead_min.is_finite()) {
            report.error(id, "negative-overhead", format!("fixed_overhead_min = {} must be finite and >= 0", self.fixed_overhead_min));
        }
        if !(self.output_size_factor > 0.0 && self.output_size_factor.is_finite()) {
            report.error(id, "output-size-factor", format!("output_size_factor = {} must be finite and > 0", self.output_size_factor));
        }
        let required = self.exec_mode.required_location();
        let mode = match self.exec_mode {
            ExecMode::DistributedNative => "distributed",
            ExecMode::CentralizedWrapped => "centralized",
        };
        if self.input_loc != required {
            report.error(
                id,
                &format!("{mode}-input-location"),
                format!("{} stage must read from {}, declares {}", self.exec_mode.as_str(), required.as_str(), self.input_loc.as_str()),
            );
        }
        if self.output_loc != required {
            report.error(
                id,
                &format!("{mode}-output-location"),
                format!("{} stage must write to {}, declares {}", self.exec_mode.as_str(), required.as_str(), self.output_loc.as_str()),
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub id: String,
    #[serde(default)]
    pub stages: Vec<Stage>,
}

impl Pipeline {
    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn has_mode(&self, mode: ExecMode) -> bool {
        self.stages.iter().any(|s| s.exec_mode == mode)
    }

    /// Pipeline restricted to the named stages, in pipeline order.
    pub fn subset(&self, ids: &[String]) -> Pipeline {
        Pipeline {
            id: format!("{}[{}]", self.id, ids.join("+")),
            stages: self.stages.iter().filter(|s| ids.contains(&s.id)).cloned().collect(),
        }
    }
}

/// Every violated invariant, sorted by stage id. An empty report means valid.
pub fn validate_pipeline(p: &Pipeline) -> ValidationReport {
    let mut report = ValidationReport::new();
    let mut seen = BTreeSet::new();
    for stage in &p.stages {
        if !seen.insert(stage.id.as_str()) {
            report.error(&stage.id, "duplicate-stage-id", "stage id appears more than once");
        }
        stage.check(&mut report);
    }
    if let Some(last_per_sample) = p.stages.iter().rposition(|s| s.scope == Scope::PerSample) {
        for stage in &p.stages[..last_per_sample] {
            if stage.scope == Scope::PerBatch {
                report.error(
                    &stage.id,
                    "batch-before-sample",
                    format!("per-batch stage precedes per-sample stage {}", p.stages[last_per_sample].id),
                );
            }
        }
    }
    report.sorted()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Compressed FastQ size in GB.
    pub size_gb: f64,
}

impl Sample {
    pub fn new(id: impl Into<String>, size_gb: f64) -> Self {
        Self { id: id.into(), size_gb }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    #[serde(default)]
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn total_gb(&self) -> f64 {
        self.samples.iter().map(|s| s.size_gb).sum()
    }

    pub fn sample(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Every sample size multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Batch {
        Batch::new(
            self.samples
                .iter()
                .map(|s| Sample::new(s.id.clone(), s.size_gb * factor))
                .collect(),
        )
    }
}

pub fn validate_batch(b: &Batch) -> ValidationReport {
    let mut report = ValidationReport::new();
    let mut seen = BTreeSet::new();
    for s in &b.samples {
        if !seen.insert(s.id.as_str()) {
            report.error(&s.id, "duplicate-sample-id", "sample id appears more than once");
        }
        if !(s.size_gb > 0.0 && s.size_gb.is_finite()) {
            report.error(&s.id, "sample-size", format!("size_gb = {} must be finite and > 0", s.size_gb));
        }
    }
    report.sorted()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BatchStats {
    pub count: usize,
    pub total_gb: f64,
    pub mean_gb: f64,
    pub min_gb: f64,
    pub max_gb: f64,
}

pub fn batch_stats(b: &Batch) -> BatchStats {
    if b.samples.is_empty() {
        return BatchStats::default();
    }
    let count = b.samples.len();
    let total_gb = b.total_gb();
    let sizes = b.samples.iter().map(|s| s.size_gb);
    BatchStats {
        count,
        total_gb,
        mean_gb: total_gb / count as f64,
        min_gb: sizes.clone().fold(f64::INFINITY, f64::min),
        max_gb: sizes.fold(f64::NEG_INFINITY, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn reference_pipeline_is_valid() {
        let p = reference::pipeline();
        assert_eq!(p.stages.len(), 6);
        assert!(validate_pipeline(&p).is_empty());
    }

    #[test]
    fn empty_pipeline_is_vacuously_valid() {
        let p = Pipeline { id: "empty".into(), stages: vec![] };
        assert!(validate_pipeline(&p).is_empty());
    }

    #[test]
    fn distributed_stage_reading_local_fs_is_one_violation() {
        let mut p = reference::pipeline();
        p.stages[1].input_loc = Location::LocalFs;
        let report = validate_pipeline(&p);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].subject, "BWA/MD");
        assert_eq!(report.violations[0].rule, "distributed-input-location");
    }

    #[test]
    fn centralized_stage_writing_dfs_is_flagged() {
        let mut p = reference::pipeline();
        p.stages[0].output_loc = Location::Dfs;
        let report = validate_pipeline(&p);
        assert_eq!(report.subjects(), vec!["FastqToSam"]);
    }

    #[test]
    fn per_batch_before_per_sample_is_flagged() {
        let p = Pipeline {
            id: "bad-order".into(),
            stages: vec![
                Stage::new("joint", ExecMode::CentralizedWrapped, Scope::PerBatch, 1.0),
                Stage::new("align", ExecMode::DistributedNative, Scope::PerSample, 1.0),
            ],
        };
        let report = validate_pipeline(&p);
        assert_eq!(report.subjects(), vec!["joint"]);
        assert_eq!(report.violations[0].rule, "batch-before-sample");
    }

    #[test]
    fn violations_sorted_by_stage_id_and_idempotent() {
        let mut stages = vec![
            Stage::new("zeta", ExecMode::DistributedNative, Scope::PerSample, -1.0),
            Stage::new("alpha", ExecMode::CentralizedWrapped, Scope::PerSample, 1.0).with_fixed_overhead(-2.0),
            Stage::new("alpha", ExecMode::CentralizedWrapped, Scope::PerSample, 1.0),
        ];
        let p = Pipeline { id: "x".into(), stages: stages.clone() };
        let first = validate_pipeline(&p);
        assert_eq!(first, validate_pipeline(&p));
        assert_eq!(first.subjects(), vec!["alpha", "alpha", "zeta"]);
        stages.reverse();
        let reversed = validate_pipeline(&Pipeline { id: "x".into(), stages });
        assert_eq!(first.subjects(), reversed.subjects());
    }

    #[test]
    fn stats_of_summary_batch() {
        // Six sizes with the reported range 10.8-15.9 GB and mean 13.5 GB.
        let b = Batch::new(
            [10.8, 12.6, 13.1, 14.2, 14.4, 15.9]
                .iter()
                .enumerate()
                .map(|(i, &gb)| Sample::new(format!("s{i}"), gb))
                .collect(),
        );
        let stats = batch_stats(&b);
        assert_eq!(stats.count, 6);
        approx::assert_abs_diff_eq!(stats.mean_gb, 13.5, epsilon = 1e-12);
        assert_eq!(stats.min_gb, 10.8);
        assert_eq!(stats.max_gb, 15.9);
    }

    #[test]
    fn stats_of_empty_batch_are_zero() {
        let stats = batch_stats(&Batch::default());
        assert_eq!(stats, BatchStats { count: 0, total_gb: 0.0, mean_gb: 0.0, min_gb: 0.0, max_gb: 0.0 });
    }

    #[test]
    fn stats_of_single_sample() {
        let stats = batch_stats(&Batch::new(vec![Sample::new("PFC-0028", 14.2)]));
        assert_eq!(stats.count, 1);
        for v in [stats.total_gb, stats.mean_gb, stats.min_gb, stats.max_gb] {
            assert_eq!(v, 14.2);
        }
    }

    #[test]
    fn batch_validation_catches_duplicates_and_sizes() {
        let b = Batch::new(vec![Sample::new("a", 1.0), Sample::new("a", 0.0)]);
        let report = validate_batch(&b);
        let rules: Vec<_> = report.violations.iter().map(|v| v.rule.as_str()).collect();
        assert_eq!(rules, vec!["duplicate-sample-id", "sample-size"]);
    }

    #[test]
    fn enum_strings_are_exact() {
        let json = serde_json::to_string(&reference::pipeline().stages[1]).unwrap();
        assert!(json.contains("\"DistributedNative\""));
        assert!(json.contains("\"PerSample\""));
        assert!(json.contains("\"DFS\""));
        let json = serde_json::to_string(&reference::pipeline().stages[4]).unwrap();
        assert!(json.contains("\"CentralizedWrapped\""));
        assert!(json.contains("\"PerBatch\""));
        assert!(json.contains("\"LocalFS\""));
        assert!(serde_json::from_str::<Location>("\"LocalFs\"").is_err());
    }

    proptest::proptest! {
        #[test]
        fn total_is_exact_sum(sizes in proptest::collection::vec(0.01f64..100.0, 0..20)) {
            let b = Batch::new(sizes.iter().enumerate().map(|(i, &s)| Sample::new(i.to_string(), s)).collect());
            let mut expected = 0.0;
            for s in &sizes {
                expected += s;
            }
            proptest::prop_assert_eq!(batch_stats(&b).total_gb, expected);
        }
    }
}

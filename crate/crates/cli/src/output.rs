//! Data-file writers. Nothing here reads the clock.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pipesim_core::cost::CostReport;
use pipesim_core::perf::{StepKind, Timeline, STAGING_PHASE};
use pipesim_core::planner::{ExecutionPlan, PlanStep};

use crate::commands::CliError;
use crate::Format;

pub struct Writer {
    dir: PathBuf,
    format: Format,
}

impl Writer {
    pub fn new(dir: PathBuf, format: Format) -> Self {
        Self { dir, format }
    }

    pub fn format(&self) -> Format {
        self.format
    }

    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{ext}"))
    }

    pub fn json<T: Serialize + ?Sized>(&self, stem: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(stem, "json");
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        write(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn csv<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let path = self.path(stem, "csv");
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        write(&path, &bytes)?;
        Ok(path)
    }

    /// Rows as CSV or the JSON array of the same rows, per `--format`.
    pub fn rows<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        match self.format {
            Format::Csv => self.csv(stem, rows),
            Format::Json => self.json(stem, rows),
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
pub struct TimelineRow<'a> {
    pub step: usize,
    pub kind: &'static str,
    pub label: &'a str,
    pub subject: &'a str,
    pub phase: &'a str,
    pub samples: String,
    pub size_gb: f64,
    pub start_min: f64,
    pub end_min: f64,
    pub duration_min: f64,
}

pub fn timeline_rows(tl: &Timeline) -> Vec<TimelineRow<'_>> {
    tl.entries
        .iter()
        .map(|e| TimelineRow {
            step: e.step,
            kind: match e.kind {
                StepKind::StageRun => "StageRun",
                StepKind::DataTransfer => "DataTransfer",
            },
            label: &e.label,
            subject: &e.subject,
            phase: &e.phase,
            samples: e.sample_ids.join(";"),
            size_gb: e.size_gb,
            start_min: e.start_min,
            end_min: e.end_min,
            duration_min: e.duration_min(),
        })
        .collect()
}

/// One row per stage run: sample x stage for per-sample stages, `batch` for
/// per-batch ones.
#[derive(Serialize)]
pub struct StageRow<'a> {
    pub sample: String,
    pub stage: &'a str,
    pub phase: &'a str,
    pub size_gb: f64,
    pub minutes: f64,
    pub share_pct: f64,
}

pub fn stage_rows<'a>(tl: &'a Timeline, plan: &ExecutionPlan) -> Vec<StageRow<'a>> {
    tl.stage_runs()
        .map(|e| {
            let per_batch = matches!(&plan.steps[e.step], PlanStep::StageRun(r) if r.scope == pipesim_core::pipeline::Scope::PerBatch);
            StageRow {
                sample: if per_batch { "batch".into() } else { e.sample_ids.join(";") },
                stage: &e.subject,
                phase: &e.phase,
                size_gb: e.size_gb,
                minutes: e.duration_min(),
                share_pct: if tl.compute_min > 0.0 { 100.0 * e.duration_min() / tl.compute_min } else { 0.0 },
            }
        })
        .collect()
}

#[derive(Serialize)]
pub struct PhaseRow {
    pub phase: String,
    pub minutes: f64,
    pub share_of_compute_pct: Option<f64>,
    pub share_of_makespan_pct: f64,
}

pub fn phase_rows(tl: &Timeline) -> Vec<PhaseRow> {
    let of_makespan = |m: f64| if tl.makespan_min > 0.0 { 100.0 * m / tl.makespan_min } else { 0.0 };
    let shares = tl.phase_shares();
    let mut rows: Vec<PhaseRow> = tl
        .per_phase_min
        .iter()
        .map(|(phase, &m)| PhaseRow {
            phase: phase.clone(),
            minutes: m,
            share_of_compute_pct: shares.get(phase).copied(),
            share_of_makespan_pct: of_makespan(m),
        })
        .collect();
    rows.push(PhaseRow {
        phase: STAGING_PHASE.into(),
        minutes: tl.staging_min,
        share_of_compute_pct: None,
        share_of_makespan_pct: of_makespan(tl.staging_min),
    });
    rows
}

#[derive(Serialize)]
pub struct MetricRow {
    pub metric: &'static str,
    pub value: Option<f64>,
}

pub fn write_cost(w: &Writer, report: &CostReport) -> Result<(), CliError> {
    match w.format {
        Format::Json => {
            w.json("cost", report)?;
        }
        Format::Csv => {
            let summary = [
                MetricRow { metric: "cluster_cost", value: Some(report.cluster_cost) },
                MetricRow { metric: "service_cost", value: Some(report.service_cost) },
                MetricRow { metric: "cost_ratio", value: report.cost_ratio },
                MetricRow { metric: "cluster_makespan_min", value: Some(report.cluster_makespan_min) },
                MetricRow { metric: "service_makespan_min", value: Some(report.service_makespan_min) },
                MetricRow { metric: "time_ratio", value: report.time_ratio },
            ];
            w.csv("cost-summary", &summary)?;
            w.csv("cost-samples", &report.per_sample)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
pub struct PlanRow<'a> {
    pub step: usize,
    pub kind: &'static str,
    pub subject: &'a str,
    pub samples: String,
    pub from_loc: &'static str,
    pub to_loc: &'static str,
    pub size_gb: f64,
    pub nodes: String,
    pub effective_cores: Option<u64>,
}

pub fn plan_rows(plan: &ExecutionPlan) -> Vec<PlanRow<'_>> {
    plan.steps
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            PlanStep::StageRun(r) => PlanRow {
                step: i,
                kind: "StageRun",
                subject: &r.stage_id,
                samples: r.sample_ids.join(";"),
                from_loc: r.input_loc.as_str(),
                to_loc: r.output_loc.as_str(),
                size_gb: r.input_gb,
                nodes: r.nodes.join(";"),
                effective_cores: Some(r.effective_cores),
            },
            PlanStep::DataTransfer(t) => PlanRow {
                step: i,
                kind: "DataTransfer",
                subject: &t.dataset,
                samples: t.sample_ids.join(";"),
                from_loc: t.from_loc.as_str(),
                to_loc: t.to_loc.as_str(),
                size_gb: t.size_gb,
                nodes: String::new(),
                effective_cores: None,
            },
        })
        .collect()
}

//! Fitting the performance model to measured runs.
//!
//! The fit minimises the sum of squared relative residuals
//! `(predicted - measured) / measured`. For a fixed core cap every other
//! parameter enters a prediction linearly, so each has a closed form:
//!
//! * rate scale `s`, from single-node observations:
//!   `predicted = F + s * V`
//! * inverse efficiency `x = 1 / efficiency(n)`, from observations on `n > 1` nodes:
//!   `predicted = F + s * C + x * s * D`
//!
//! where `F` is fixed overhead, `C` wrapped-stage work and `D` native-stage
//! work at full efficiency (`V = C + D`). The core cap is a grid search over
//! candidates; ties keep the seed's cap.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perf::{stage_duration, PerfError, PerfModel};
use crate::pipeline::{ExecMode, Pipeline, Stage};
use crate::planner::SparkResourceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub nodes: u32,
    pub cores_per_node: u32,
    /// Recorded for reference; the model does not use it.
    pub config: Option<SparkResourceConfig>,
    pub stages: Vec<String>,
    pub size_gb: f64,
    pub measured_min: f64,
}

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// One CSV row: `nodes,cores_per_node,config,stages,size_gb,minutes`.
/// `stages` joins stage ids with `+`; `config` is X/Y/W/Z or empty.
#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord {
    nodes: u32,
    cores_per_node: u32,
    config: String,
    stages: String,
    size_gb: f64,
    minutes: f64,
}

pub fn read_observations<R: Read>(reader: R) -> Result<Vec<Observation>, ObservationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ObservationRecord>().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let config = if rec.config.is_empty() {
            None
        } else {
            Some(rec.config.parse().map_err(|e: crate::planner::ParseConfigError| ObservationError::Row {
                row,
                message: e.to_string(),
            })?)
        };
        let stages: Vec<String> = rec.stages.split('+').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if stages.is_empty() {
            return Err(ObservationError::Row { row, message: "no stages".into() });
        }
        if !(rec.minutes > 0.0 && rec.minutes.is_finite()) {
            return Err(ObservationError::Row { row, message: format!("minutes = {} must be > 0", rec.minutes) });
        }
        out.push(Observation {
            nodes: rec.nodes,
            cores_per_node: rec.cores_per_node,
            config,
            stages,
            size_gb: rec.size_gb,
            measured_min: rec.minutes,
        });
    }
    Ok(out)
}

pub fn write_observations<W: std::io::Write>(writer: W, obs: &[Observation]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for o in obs {
        w.serialize(ObservationRecord {
            nodes: o.nodes,
            cores_per_node: o.cores_per_node,
            config: o.config.map(|c| c.to_string()).unwrap_or_default(),
            stages: o.stages.join("+"),
            size_gb: o.size_gb,
            minutes: o.measured_min,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub fit_core_cap: bool,
    /// Fit one multiplier on the baseline rates of every observed stage.
    pub fit_rate_scale: bool,
    /// Fit efficiency for every node count > 1 present in the observations.
    pub fit_efficiency: bool,
    pub core_cap_grid: Vec<u32>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fit_core_cap: true,
            fit_rate_scale: true,
            fit_efficiency: true,
            core_cap_grid: vec![8, 16, 24, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub nodes: u32,
    pub cores_per_node: u32,
    pub stages: String,
    pub size_gb: f64,
    pub measured_min: f64,
    pub predicted_min: f64,
    /// (predicted - measured) / measured
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub core_cap: u32,
    pub rate_scale: f64,
    pub efficiencies: BTreeMap<u32, f64>,
    /// Node counts whose least-squares efficiency exceeded 1 and was clamped.
    pub clamped: Vec<u32>,
    pub residuals: Vec<Residual>,
    pub max_abs_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: PerfModel,
    pub report: FitReport,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("underdetermined fit, cannot identify: {}", .0.join(", "))]
    Underdetermined(Vec<String>),
    #[error("observation references unknown stage {0}")]
    UnknownStage(String),
    #[error("observation {index}: {message}")]
    BadObservation { index: usize, message: String },
    #[error("fitted efficiency for {nodes} nodes is not positive")]
    Infeasible { nodes: u32 },
    #[error(transparent)]
    Model(#[from] PerfError),
}

/// Work components of one observation's prediction at a given core cap.
struct Parts {
    fixed: f64,
    wrapped: f64,
    native: f64,
}

fn parts(obs: &Observation, stages: &[&Stage], model: &PerfModel) -> Parts {
    let mut p = Parts { fixed: 0.0, wrapped: 0.0, native: 0.0 };
    for stage in stages {
        p.fixed += stage.fixed_overhead_min;
        let work = model.rate(stage) * obs.size_gb;
        match stage.exec_mode {
            ExecMode::CentralizedWrapped => p.wrapped += work,
            ExecMode::DistributedNative => {
                let usable = obs.cores_per_node.min(model.core_cap_for(&stage.id));
                p.native += work * f64::from(model.baseline_cores) / (f64::from(obs.nodes) * f64::from(usable));
            }
        }
    }
    p
}

/// Model prediction for an observation: sum of its stages' durations.
pub fn predict(obs: &Observation, pipeline: &Pipeline, model: &PerfModel) -> Result<f64, CalibrationError> {
    let mut total = 0.0;
    for id in &obs.stages {
        let stage = pipeline.stage(id).ok_or_else(|| CalibrationError::UnknownStage(id.clone()))?;
        total += stage_duration(stage, obs.size_gb, obs.nodes, obs.cores_per_node, model)?;
    }
    Ok(total)
}

/// Relative least squares for `measured ~ offset + k * slope`.
fn fit_linear(points: &[(f64, f64, f64)]) -> f64 {
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(offset, slope, measured)| {
        let w = 1.0 / (measured * measured);
        (num + w * slope * (measured - offset), den + w * slope * slope)
    });
    num / den
}

struct Candidate {
    cap: u32,
    scale: f64,
    efficiencies: BTreeMap<u32, f64>,
    clamped: Vec<u32>,
    cost: f64,
}

pub fn calibrate(
    observations: &[Observation],
    seed: &PerfModel,
    pipeline: &Pipeline,
    opts: &CalibrationOptions,
) -> Result<Calibration, CalibrationError> {
    seed.validate()?;
    let mut resolved: Vec<Vec<&Stage>> = Vec::with_capacity(observations.len());
    for (index, o) in observations.iter().enumerate() {
        let bad = |message: String| CalibrationError::BadObservation { index, message };
        if o.nodes == 0 || o.cores_per_node == 0 {
            return Err(bad("nodes and cores_per_node must be >= 1".into()));
        }
        if !(o.measured_min > 0.0 && o.measured_min.is_finite()) {
            return Err(bad(format!("measured_min = {} must be > 0", o.measured_min)));
        }
        if !(o.size_gb >= 0.0 && o.size_gb.is_finite()) {
            return Err(bad(format!("size_gb = {} must be >= 0", o.size_gb)));
        }
        let stages = o
            .stages
            .iter()
            .map(|id| pipeline.stage(id).ok_or_else(|| CalibrationError::UnknownStage(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        resolved.push(stages);
    }

    let single: Vec<usize> = (0..observations.len()).filter(|&i| observations[i].nodes == 1).collect();
    let single_cores: BTreeSet<u32> = single.iter().map(|&i| observations[i].cores_per_node).collect();
    let multi_counts: BTreeSet<u32> = observations.iter().map(|o| o.nodes).filter(|&n| n > 1).collect();

    let mut missing = Vec::new();
    if observations.is_empty() {
        if opts.fit_core_cap {
            missing.push("core_cap".to_string());
        }
        if opts.fit_rate_scale {
            missing.push("rate_scale".to_string());
        }
        if opts.fit_efficiency {
            missing.push("scaleout_efficiency".to_string());
        }
    } else {
        let needed = usize::from(opts.fit_core_cap) + usize::from(opts.fit_rate_scale);
        if needed > single_cores.len() {
            if opts.fit_rate_scale && single_cores.is_empty() {
                missing.push("rate_scale".to_string());
            }
            if opts.fit_core_cap && (single_cores.is_empty() || opts.fit_rate_scale) {
                missing.push("core_cap".to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(CalibrationError::Underdetermined(missing));
    }

    let mut caps = vec![seed.core_cap];
    if opts.fit_core_cap {
        caps.extend(opts.core_cap_grid.iter().copied().filter(|&c| c >= seed.baseline_cores && c != seed.core_cap));
    }

    let mut best: Option<Candidate> = None;
    for cap in caps {
        let trial = PerfModel { core_cap: cap, ..seed.clone() };
        let all_parts: Vec<Parts> = observations.iter().zip(&resolved).map(|(o, s)| parts(o, s, &trial)).collect();

        let scale = if opts.fit_rate_scale {
            let pts: Vec<_> = single
                .iter()
                .map(|&i| {
                    let p = &all_parts[i];
                    (p.fixed, p.wrapped + p.native, observations[i].measured_min)
                })
                .collect();
            fit_linear(&pts)
        } else {
            1.0
        };

        let mut efficiencies = BTreeMap::new();
        let mut clamped = Vec::new();
        for &n in &multi_counts {
            let e = if opts.fit_efficiency {
                let pts: Vec<_> = observations
                    .iter()
                    .zip(&all_parts)
                    .filter(|(o, _)| o.nodes == n)
                    .map(|(o, p)| (p.fixed + scale * p.wrapped, scale * p.native, o.measured_min))
                    .collect();
                let inverse = fit_linear(&pts);
                if !(inverse > 0.0 && inverse.is_finite()) {
                    return Err(CalibrationError::Infeasible { nodes: n });
                }
                let e = 1.0 / inverse;
                if e > 1.0 {
                    clamped.push(n);
                    1.0
                } else {
                    e
                }
            } else {
                trial.efficiency(n)?
            };
            efficiencies.insert(n, e);
        }

        let cost: f64 = observations
            .iter()
            .zip(&all_parts)
            .map(|(o, p)| {
                let e = if o.nodes == 1 { 1.0 } else { efficiencies[&o.nodes] };
                let predicted = p.fixed + scale * p.wrapped + scale * p.native / e;
                ((predicted - o.measured_min) / o.measured_min).powi(2)
            })
            .sum();

        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(Candidate { cap, scale, efficiencies, clamped, cost });
        }
    }
    let best = best.expect("at least the seed cap is evaluated");

    let mut model = seed.clone();
    model.core_cap = best.cap;
    if best.scale != 1.0 {
        let observed: BTreeSet<&str> = observations.iter().flat_map(|o| o.stages.iter().map(String::as_str)).collect();
        for id in observed {
            let stage = pipeline.stage(id).expect("resolved above");
            model.rate_overrides.insert(id.to_string(), seed.rate(stage) * best.scale);
        }
    }
    if opts.fit_efficiency {
        model.scaleout_efficiency.extend(best.efficiencies.iter().map(|(&n, &e)| (n, e)));
    }
    model.validate()?;

    let residuals = observations
        .iter()
        .map(|o| {
            let predicted = predict(o, pipeline, &model)?;
            Ok(Residual {
                nodes: o.nodes,
                cores_per_node: o.cores_per_node,
                stages: o.stages.join("+"),
                size_gb: o.size_gb,
                measured_min: o.measured_min,
                predicted_min: predicted,
                relative_error: (predicted - o.measured_min) / o.measured_min,
            })
        })
        .collect::<Result<Vec<_>, CalibrationError>>()?;
    let max_abs_relative_error = residuals.iter().map(|r| r.relative_error.abs()).fold(0.0, f64::max);

    Ok(Calibration {
        model,
        report: FitReport {
            core_cap: best.cap,
            rate_scale: best.scale,
            efficiencies: best.efficiencies,
            clamped: best.clamped,
            residuals,
            max_abs_relative_error,
        },
    })
}

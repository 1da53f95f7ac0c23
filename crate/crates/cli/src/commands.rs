use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use pipesim_core::calibrate::{self, CalibrationOptions};
use pipesim_core::config::{ConfigError, Scenario};
use pipesim_core::cost::{self, significant};
use pipesim_core::perf::{self, PerfModel, Timeline};
use pipesim_core::pipeline::{self, Batch, Pipeline};
use pipesim_core::planner::{self, ExecutionPlan, SparkResourceConfig};
use pipesim_core::topology::{self, Cluster};
use pipesim_core::ValidationReport;

use crate::output::{self, Writer};
use crate::{Axis, Cli, Command, Format};

/// `Domain` exits 1 (violations, infeasible fits); `Io` exits 2.
#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Io(m) => f.write_str(m.trim_end()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid { .. } => CliError::Domain(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

fn domain(e: impl fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

struct Context {
    scenario: Scenario,
    writer: Writer,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let mut scenario = Scenario::load(&cli.scenario)?;
        if cli.interpolate_efficiency {
            scenario.model.interpolate_efficiency = true;
        }
        let dir = cli
            .out
            .clone()
            .or_else(|| scenario.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let writer = Writer::new(dir, cli.format);
        Ok(Self { scenario, writer })
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::Validate => validate(&ctx),
        Command::Plan => plan(&ctx),
        Command::Simulate => simulate(&ctx),
        Command::Calibrate { observations, fix_core_cap, fix_rates } => {
            calibrate(&ctx, observations, !fix_core_cap, !fix_rates)
        }
        Command::Sweep { axis, values, stages, sample } => {
            sweep(&ctx, *axis, values, stages.as_deref(), sample.as_deref())
        }
        Command::Compare { sample, makespan } => compare(&ctx, sample.as_deref(), *makespan),
    }
}

fn warn_all(report: &ValidationReport) {
    for v in report.warnings() {
        eprintln!("{v}");
    }
}

fn validate(ctx: &Context) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let mut report = ValidationReport::new();
    report.extend(pipeline::validate_pipeline(&s.pipeline));
    report.extend(pipeline::validate_batch(&s.batch));
    report.extend(s.cluster.validate());
    report.extend(planner::validate_config(&s.resources, &s.cluster));
    if let Err(e) = s.model.validate() {
        report.error("model", "perf-model", e.to_string());
    }
    if !s.services.is_empty() {
        match topology::plan_placement(&s.cluster, &s.services) {
            Ok(pl) => report.extend(topology::validate_placement(&s.cluster, &s.pipeline, &pl)),
            Err(e) => report.error("services", "placement", e.to_string()),
        }
    }
    let report = report.sorted();
    for v in &report.violations {
        eprintln!("{v}");
    }
    if report.has_errors() {
        return Err(CliError::Domain(format!("{} violation(s)", report.errors().count())));
    }
    println!("ok: {} ({} warning(s))", s.path.display(), report.warnings().count());
    Ok(())
}

fn build_plan(p: &Pipeline, b: &Batch, c: &Cluster, cfg: &SparkResourceConfig) -> Result<ExecutionPlan, CliError> {
    let plan = planner::plan_execution(p, b, c, cfg).map_err(domain)?;
    Ok(plan)
}

fn plan(ctx: &Context) -> Result<(), CliError> {
    let s = &ctx.scenario;
    warn_all(&planner::validate_config(&s.resources, &s.cluster));
    let plan = build_plan(&s.pipeline, &s.batch, &s.cluster, &s.resources)?;
    print!("{}", plan.to_table());
    match ctx.writer.format() {
        Format::Json => ctx.writer.json("plan", &plan)?,
        Format::Csv => ctx.writer.csv("plan", &output::plan_rows(&plan))?,
    };
    Ok(())
}

fn run_scenario(s: &Scenario, batch: &Batch) -> Result<(ExecutionPlan, Timeline), CliError> {
    warn_all(&planner::validate_config(&s.resources, &s.cluster));
    let plan = build_plan(&s.pipeline, batch, &s.cluster, &s.resources)?;
    let tl = perf::simulate(&plan, &s.model).map_err(domain)?;
    Ok((plan, tl))
}

fn simulate(ctx: &Context) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let (plan, tl) = run_scenario(s, &s.batch)?;
    let report = cost::compare(&tl, &s.cluster, &s.batch, &s.pricing);

    ctx.writer.rows("timeline", &output::timeline_rows(&tl))?;
    ctx.writer.rows("stages", &output::stage_rows(&tl, &plan))?;
    ctx.writer.rows("phases", &output::phase_rows(&tl))?;
    output::write_cost(&ctx.writer, &report)?;

    println!(
        "makespan {:.1} min (compute {:.1}, staging {:.1})",
        tl.makespan_min, tl.compute_min, tl.staging_min
    );
    for (phase, share) in tl.phase_shares() {
        println!("  {phase:<20} {share:>6.2}% of compute");
    }
    println!();
    print!("{report}");
    Ok(())
}

fn calibrate(ctx: &Context, observations: &Path, fit_core_cap: bool, fit_rates: bool) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let file = File::open(observations).map_err(|e| CliError::Io(format!("{}: {e}", observations.display())))?;
    let obs = calibrate::read_observations(file).map_err(|e| CliError::Io(format!("{}: {e}", observations.display())))?;
    let opts = CalibrationOptions { fit_core_cap, fit_rate_scale: fit_rates, ..CalibrationOptions::default() };
    let fit = calibrate::calibrate(&obs, &s.model, &s.pipeline, &opts).map_err(domain)?;

    ctx.writer.json("perf-model-calibrated", &fit.model)?;
    ctx.writer.rows("residuals", &fit.report.residuals)?;

    let r = &fit.report;
    println!("core_cap    {}", r.core_cap);
    println!("rate_scale  {:.4}", r.rate_scale);
    for (n, e) in &r.efficiencies {
        let note = if r.clamped.contains(n) { " (clamped)" } else { "" };
        println!("eff[{n}]      {e:.4}{note}");
    }
    println!();
    println!("{:>5} {:>5} {:<20} {:>8} {:>10} {:>10} {:>8}", "nodes", "cores", "stages", "GB", "measured", "predicted", "err %");
    for x in &r.residuals {
        println!(
            "{:>5} {:>5} {:<20} {:>8.2} {:>10.1} {:>10.1} {:>8.2}",
            x.nodes,
            x.cores_per_node,
            x.stages,
            x.size_gb,
            x.measured_min,
            x.predicted_min,
            100.0 * x.relative_error
        );
    }
    println!("max |error| {:.2}%", 100.0 * r.max_abs_relative_error);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    axis: &'static str,
    value: String,
    nodes: usize,
    cores_per_node: u32,
    config: String,
    stages: String,
    samples: String,
    size_gb: f64,
    compute_min: f64,
    staging_min: f64,
    makespan_min: f64,
    cluster_cost: f64,
    ram_warning: bool,
}

fn select_batch(batch: &Batch, sample: Option<&str>) -> Result<Batch, CliError> {
    match sample {
        None => Ok(batch.clone()),
        Some(id) => batch
            .sample(id)
            .map(|s| Batch::new(vec![s.clone()]))
            .ok_or_else(|| CliError::Domain(format!("sample {id} is not in the batch"))),
    }
}

fn select_stages(p: &Pipeline, stages: Option<&str>) -> Result<Pipeline, CliError> {
    let Some(list) = stages else { return Ok(p.clone()) };
    let ids: Vec<String> = list.split('+').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if let Some(bad) = ids.iter().find(|id| p.stage(id).is_none()) {
        return Err(CliError::Domain(format!("unknown stage {bad}")));
    }
    Ok(p.subset(&ids))
}

fn parse_count(axis: &str, v: &str) -> Result<u32, CliError> {
    match v.trim().parse::<u32>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(CliError::Domain(format!("{axis} value {v:?} must be a positive integer"))),
    }
}

/// Node and core sweeps scale the scenario's manager node; RAM and price
/// scale with cores.
fn sweep_point(
    s: &Scenario,
    axis: Axis,
    value: &str,
    p: &Pipeline,
    batch: &Batch,
    model: &PerfModel,
) -> Result<SweepRow, CliError> {
    let base = s
        .cluster
        .manager()
        .ok_or_else(|| CliError::Domain(format!("cluster {} has no manager", s.cluster.id)))?;
    let (cluster, cfg, name) = match axis {
        Axis::Nodes => {
            let n = parse_count("nodes", value)?;
            (Cluster::homogeneous(n as usize, base.cores, base.ram_gb, base.hourly_price), s.resources, "nodes")
        }
        Axis::Cores => {
            let c = parse_count("cores", value)?;
            let f = f64::from(c) / f64::from(base.cores);
            (Cluster::homogeneous(1, c, base.ram_gb * f, base.hourly_price * f), s.resources, "cores")
        }
        Axis::Config => {
            let cfg = value.trim().parse::<SparkResourceConfig>().map_err(domain)?;
            (s.cluster.clone(), cfg, "config")
        }
    };
    let ram_warning = planner::validate_config(&cfg, &cluster).warnings().next().is_some();
    let plan = build_plan(p, batch, &cluster, &cfg)?;
    let tl = perf::simulate(&plan, model).map_err(|e| CliError::Domain(format!("{name}={value}: {e}")))?;
    Ok(SweepRow {
        axis: name,
        value: value.trim().to_string(),
        nodes: cluster.nodes.len(),
        cores_per_node: cluster.nodes.iter().map(|n| n.cores).min().unwrap_or(0),
        config: cfg.to_string(),
        stages: p.stages.iter().map(|st| st.id.as_str()).collect::<Vec<_>>().join("+"),
        samples: batch.samples.iter().map(|x| x.id.as_str()).collect::<Vec<_>>().join(";"),
        size_gb: batch.total_gb(),
        compute_min: tl.compute_min,
        staging_min: tl.staging_min,
        makespan_min: tl.makespan_min,
        cluster_cost: cost::cluster_cost(&tl, &cluster),
        ram_warning,
    })
}

fn sweep(ctx: &Context, axis: Axis, values: &[String], stages: Option<&str>, sample: Option<&str>) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let p = select_stages(&s.pipeline, stages)?;
    let batch = select_batch(&s.batch, sample)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|v| sweep_point(s, axis, v, &p, &batch, &s.model))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let stem = match axis {
        Axis::Nodes => "sweep-nodes",
        Axis::Cores => "sweep-cores",
        Axis::Config => "sweep-config",
    };
    ctx.writer.rows(stem, &rows)?;
    println!(
        "{:<12} {:>5} {:>5} {:>12} {:>12} {:>12} {:>10}",
        "value",
        "nodes",
        "cores",
        "compute min",
        "makespan",
        "config",
        "cost"
    );
    for r in &rows {
        println!(
            "{:<12} {:>5} {:>5} {:>12.1} {:>12.1} {:>12} {:>10.2}{}",
            r.value,
            r.nodes,
            r.cores_per_node,
            r.compute_min,
            r.makespan_min,
            r.config,
            r.cluster_cost,
            if r.ram_warning { "  (RAM oversubscribed)" } else { "" }
        );
    }
    Ok(())
}

fn compare(ctx: &Context, sample: Option<&str>, makespan: Option<f64>) -> Result<(), CliError> {
    let s = &ctx.scenario;
    let batch = select_batch(&s.batch, sample)?;
    let (_, tl) = run_scenario(s, &batch)?;
    let report = match makespan {
        Some(m) if !(m >= 0.0 && m.is_finite()) => {
            return Err(CliError::Domain(format!("makespan {m} must be >= 0")));
        }
        Some(m) => cost::compare_with_makespan(m, Some(&tl), &s.cluster, &batch, &s.pricing),
        None => cost::compare(&tl, &s.cluster, &batch, &s.pricing),
    };
    output::write_cost(&ctx.writer, &report)?;
    print!("{report}");
    let fmt = |r: Option<f64>| r.map(|v| significant(v, 3)).unwrap_or_else(|| "n/a".into());
    println!();
    println!("cost ratio (cluster/service) {}", fmt(report.cost_ratio));
    println!("time ratio (cluster/service) {}", fmt(report.time_ratio));
    if makespan.is_some() {
        println!("model makespan {:.1} min", tl.makespan_min);
    }
    Ok(())
}

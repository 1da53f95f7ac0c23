//! Pricing a simulated run against a per-GB managed service.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::perf::Timeline;
use crate::pipeline::Batch;
use crate::topology::Cluster;

/// How allocated VM time is rounded before billing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Billing {
    #[default]
    Continuous,
    PerMinute,
    PerHour,
}

impl Billing {
    pub fn billed_hours(self, minutes: f64) -> f64 {
        match self {
            Billing::Continuous => minutes / 60.0,
            Billing::PerMinute => minutes.ceil() / 60.0,
            Billing::PerHour => (minutes / 60.0).ceil(),
        }
    }
}

fn default_service_minutes() -> f64 {
    77.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub currency: String,
    pub service_rate_per_gb: f64,
    /// Service turnaround per sample; the service is a black box, so this is an input.
    #[serde(default = "default_service_minutes")]
    pub service_minutes_per_sample: f64,
    #[serde(default)]
    pub billing: Billing,
}

impl Pricing {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.service_rate_per_gb >= 0.0 && self.service_rate_per_gb.is_finite()) {
            return Err(format!("service_rate_per_gb = {} must be >= 0", self.service_rate_per_gb));
        }
        if !(self.service_minutes_per_sample >= 0.0 && self.service_minutes_per_sample.is_finite()) {
            return Err(format!("service_minutes_per_sample = {} must be >= 0", self.service_minutes_per_sample));
        }
        Ok(())
    }
}

/// Every node is billed for the whole makespan, continuously.
pub fn cluster_cost(timeline: &Timeline, cluster: &Cluster) -> f64 {
    cluster_cost_billed(timeline.makespan_min, cluster, Billing::Continuous)
}

pub fn cluster_cost_billed(makespan_min: f64, cluster: &Cluster, billing: Billing) -> f64 {
    let hours = billing.billed_hours(makespan_min);
    cluster.nodes.iter().map(|n| n.hourly_price * hours).sum()
}

pub fn service_cost(batch: &Batch, pricing: &Pricing) -> f64 {
    pricing.service_rate_per_gb * batch.total_gb()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCost {
    pub sample: String,
    pub size_gb: f64,
    /// Cluster minutes attributed to this sample; shared steps split by size.
    pub cluster_min: f64,
    pub cluster_cost: f64,
    pub service_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub currency: String,
    pub cluster_cost: f64,
    pub service_cost: f64,
    pub cluster_makespan_min: f64,
    pub service_makespan_min: f64,
    /// cluster / service; absent when the service figure is zero.
    pub cost_ratio: Option<f64>,
    pub time_ratio: Option<f64>,
    pub per_sample: Vec<SampleCost>,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

/// Cluster minutes per sample. A step covering several samples is split in
/// proportion to their sizes.
fn attribute(timeline: &Timeline, batch: &Batch) -> BTreeMap<String, f64> {
    let size: BTreeMap<&str, f64> = batch.samples.iter().map(|s| (s.id.as_str(), s.size_gb)).collect();
    let mut minutes: BTreeMap<String, f64> = batch.samples.iter().map(|s| (s.id.clone(), 0.0)).collect();
    for e in &timeline.entries {
        let total: f64 = e.sample_ids.iter().filter_map(|id| size.get(id.as_str())).sum();
        if total <= 0.0 {
            continue;
        }
        for id in &e.sample_ids {
            if let (Some(&gb), Some(m)) = (size.get(id.as_str()), minutes.get_mut(id)) {
                *m += e.duration_min() * gb / total;
            }
        }
    }
    minutes
}

pub fn compare(timeline: &Timeline, cluster: &Cluster, batch: &Batch, pricing: &Pricing) -> CostReport {
    compare_with_makespan(timeline.makespan_min, Some(timeline), cluster, batch, pricing)
}

/// Compare using an externally supplied cluster makespan (e.g. a measured
/// one). Per-sample attribution uses the timeline when given, sample sizes
/// otherwise.
pub fn compare_with_makespan(
    makespan_min: f64,
    timeline: Option<&Timeline>,
    cluster: &Cluster,
    batch: &Batch,
    pricing: &Pricing,
) -> CostReport {
    let cluster_total = cluster_cost_billed(makespan_min, cluster, pricing.billing);
    let service_total = service_cost(batch, pricing);
    let service_makespan = pricing.service_minutes_per_sample * batch.samples.len() as f64;

    let attributed = match timeline {
        Some(tl) if tl.makespan_min > 0.0 => {
            let scale = makespan_min / tl.makespan_min;
            attribute(tl, batch).into_iter().map(|(k, v)| (k, v * scale)).collect()
        }
        _ => {
            let total = batch.total_gb();
            batch
                .samples
                .iter()
                .map(|s| (s.id.clone(), if total > 0.0 { makespan_min * s.size_gb / total } else { 0.0 }))
                .collect::<BTreeMap<_, _>>()
        }
    };
    let per_sample = batch
        .samples
        .iter()
        .map(|s| {
            let cluster_min = attributed.get(&s.id).copied().unwrap_or(0.0);
            SampleCost {
                sample: s.id.clone(),
                size_gb: s.size_gb,
                cluster_min,
                cluster_cost: if makespan_min > 0.0 { cluster_total * cluster_min / makespan_min } else { 0.0 },
                service_cost: pricing.service_rate_per_gb * s.size_gb,
            }
        })
        .collect();

    CostReport {
        currency: pricing.currency.clone(),
        cluster_cost: cluster_total,
        service_cost: service_total,
        cluster_makespan_min: makespan_min,
        service_makespan_min: service_makespan,
        cost_ratio: ratio(cluster_total, service_total),
        time_ratio: ratio(makespan_min, service_makespan),
        per_sample,
    }
}

/// Formats `v` to `digits` significant figures.
pub fn significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.currency;
        let opt = |r: Option<f64>| r.map(|v| significant(v, 3)).unwrap_or_else(|| "n/a".into());
        writeln!(f, "{:<22} {:>14} {:>14} {:>8}", "", "cluster", "service", "ratio")?;
        writeln!(
            f,
            "{:<22} {:>14} {:>14} {:>8}",
            format!("cost ({c})"),
            format!("{:.2}", self.cluster_cost),
            format!("{:.2}", self.service_cost),
            opt(self.cost_ratio)
        )?;
        writeln!(
            f,
            "{:<22} {:>14} {:>14} {:>8}",
            "makespan (min)",
            format!("{:.1}", self.cluster_makespan_min),
            format!("{:.1}", self.service_makespan_min),
            opt(self.time_ratio)
        )?;
        writeln!(f)?;
        writeln!(f, "{:<12} {:>8} {:>12} {:>14} {:>14}", "sample", "GB", "cluster min", "cluster cost", "service cost")?;
        for s in &self.per_sample {
            writeln!(
                f,
                "{:<12} {:>8.2} {:>12.1} {:>14.2} {:>14.2}",
                s.sample, s.size_gb, s.cluster_min, s.cluster_cost, s.service_cost
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::{simulate, PerfModel};
    use crate::pipeline::Sample;
    use crate::planner::plan_execution;
    use crate::reference;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn six_sample_timeline() -> Timeline {
        let plan = plan_execution(&reference::pipeline(), &reference::batch(), &reference::single_node(), &reference::configs()[0]).unwrap();
        simulate(&plan, &PerfModel::default()).unwrap()
    }

    #[test]
    fn service_cost_of_six_samples() {
        assert_abs_diff_eq!(service_cost(&reference::batch(), &reference::pricing()), 18.61, epsilon = 0.01);
    }

    #[test]
    fn service_cost_single_and_empty() {
        assert_abs_diff_eq!(service_cost(&reference::pfc_0028(), &reference::pricing()), 3.08, epsilon = 0.01);
        assert_eq!(service_cost(&Batch::default(), &reference::pricing()), 0.0);
    }

    #[test]
    fn cluster_cost_near_estimate() {
        let cost = cluster_cost(&six_sample_timeline(), &reference::single_node());
        assert!((cost - 28.0).abs() <= 2.8, "{cost}");
    }

    #[test]
    fn zero_timeline_costs_nothing() {
        assert_eq!(cluster_cost(&Timeline::default(), &reference::swarm_cluster()), 0.0);
    }

    #[test]
    fn cost_linear_in_price() {
        let tl = six_sample_timeline();
        let mut c = reference::swarm_cluster();
        let base = cluster_cost(&tl, &c);
        for n in &mut c.nodes {
            n.hourly_price *= 2.0;
        }
        assert_eq!(cluster_cost(&tl, &c), 2.0 * base);
    }

    #[test]
    fn billing_rounding() {
        assert_eq!(Billing::Continuous.billed_hours(90.0), 1.5);
        assert_eq!(Billing::PerHour.billed_hours(61.0), 2.0);
        assert_eq!(Billing::PerMinute.billed_hours(59.5), 1.0);
    }

    #[test]
    fn compare_reference_scenario() {
        let tl = six_sample_timeline();
        let report = compare(&tl, &reference::single_node(), &reference::batch(), &reference::pricing());
        let r = report.cost_ratio.unwrap();
        assert!((r - 28.0 / 18.61).abs() < 0.15, "{r}");
        assert_eq!(report.service_makespan_min, 6.0 * 77.0);
        let attributed: f64 = report.per_sample.iter().map(|s| s.cluster_min).sum();
        assert_relative_eq!(attributed, tl.makespan_min, max_relative = 1e-12);
        let costs: f64 = report.per_sample.iter().map(|s| s.cluster_cost).sum();
        assert_relative_eq!(costs, report.cluster_cost, max_relative = 1e-12);
    }

    #[test]
    fn time_ratio_for_reference_sample() {
        let report = compare_with_makespan(446.0, None, &reference::single_node(), &reference::pfc_0028(), &reference::pricing());
        assert_eq!(significant(report.time_ratio.unwrap(), 3), "5.79");
    }

    #[test]
    fn identical_costs_ratio_one() {
        // 1 GB at 1/GB vs one node at 1/h for 60 min
        let mut cluster = reference::single_node();
        cluster.nodes[0].hourly_price = 1.0;
        let pricing = Pricing { service_rate_per_gb: 1.0, ..reference::pricing() };
        let batch = Batch::new(vec![Sample::new("a", 1.0)]);
        let report = compare_with_makespan(60.0, None, &cluster, &batch, &pricing);
        assert_eq!(report.cost_ratio, Some(1.0));
    }

    #[test]
    fn significant_figures() {
        assert_eq!(significant(5.792207, 3), "5.79");
        assert_eq!(significant(1.5046, 3), "1.50");
        assert_eq!(significant(123.4, 3), "123");
        assert_eq!(significant(0.012345, 2), "0.012");
    }
}

//! Swarm cluster model and container placement.
//!
//! Three strategies are supported: `ManagerOnly` pins a service to the swarm
//! manager, `Global` puts exactly one replica on every node (manager
//! included), and `EmptiestNode` places replicas one at a time on the node
//! with the fewest containers so far. Load is a container count; ties go to
//! the node holding fewer replicas of the same service, then to the
//! lexicographically smallest node id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{ExecMode, Pipeline};
use crate::report::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRole {
    Manager,
    Worker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub cores: u32,
    pub ram_gb: f64,
    /// Currency units per hour while allocated.
    pub hourly_price: f64,
    pub role: NodeRole,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, cores: u32, ram_gb: f64, hourly_price: f64, role: NodeRole) -> Self {
        Self { id: id.into(), cores, ram_gb, hourly_price, role }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    #[serde(default)]
    pub id: String,
    pub nodes: Vec<NodeSpec>,
}

impl Cluster {
    /// `count` identical nodes; the first (`node-1`) is the manager.
    pub fn homogeneous(count: usize, cores: u32, ram_gb: f64, hourly_price: f64) -> Self {
        let nodes = (1..=count)
            .map(|i| {
                let role = if i == 1 { NodeRole::Manager } else { NodeRole::Worker };
                NodeSpec::new(format!("node-{i}"), cores, ram_gb, hourly_price, role)
            })
            .collect();
        Cluster { id: format!("{count}x{cores}"), nodes }
    }

    pub fn manager(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.role == NodeRole::Manager)
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn total_cores(&self) -> u64 {
        self.nodes.iter().map(|n| u64::from(n.cores)).sum()
    }

    pub fn total_ram_gb(&self) -> f64 {
        self.nodes.iter().map(|n| n.ram_gb).sum()
    }

    pub fn hourly_price(&self) -> f64 {
        self.nodes.iter().map(|n| n.hourly_price).sum()
    }

    /// Node ids in lexicographic order.
    pub fn sorted_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        ids.sort_unstable();
        ids
    }

    pub fn validate(&self) -> ValidationReport {
        let subject = if self.id.is_empty() { "cluster" } else { self.id.as_str() };
        let mut report = ValidationReport::new();
        if self.nodes.is_empty() {
            report.error(subject, "empty-cluster", "cluster has no nodes");
        }
        let managers = self.nodes.iter().filter(|n| n.role == NodeRole::Manager).count();
        if !self.nodes.is_empty() && managers != 1 {
            report.error(subject, "manager-count", format!("expected exactly one Manager node, found {managers}"));
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                report.error(&n.id, "duplicate-node-id", "node id appears more than once");
            }
            if n.cores == 0 {
                report.error(&n.id, "node-cores", "cores must be >= 1");
            }
            if !(n.ram_gb > 0.0 && n.ram_gb.is_finite()) {
                report.error(&n.id, "node-ram", format!("ram_gb = {} must be finite and > 0", n.ram_gb));
            }
            if !(n.hourly_price >= 0.0 && n.hourly_price.is_finite()) {
                report.error(&n.id, "node-price", format!("hourly_price = {} must be finite and >= 0", n.hourly_price));
            }
        }
        report.sorted()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementStrategy {
    ManagerOnly,
    Global,
    EmptiestNode,
}

/// What a service is for; validators look services up by role, not by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ServiceRole {
    SparkMaster,
    HdfsNamenode,
    SparkWorker,
    HdfsDatanode,
    /// Docker image carrying the reference genome.
    ReferenceImage,
    /// DFS exposed as a local volume for non-Spark tools.
    VolumeMount,
    #[default]
    Other,
}

fn one_instance() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: String,
    pub placement: PlacementStrategy,
    /// Only used by `EmptiestNode`.
    #[serde(default = "one_instance")]
    pub instances_requested: u32,
    #[serde(default)]
    pub role: ServiceRole,
}

impl ServiceSpec {
    pub fn new(id: impl Into<String>, placement: PlacementStrategy, role: ServiceRole) -> Self {
        Self { id: id.into(), placement, instances_requested: 1, role }
    }

    pub fn emptiest(id: impl Into<String>, instances: u32) -> Self {
        Self {
            id: id.into(),
            placement: PlacementStrategy::EmptiestNode,
            instances_requested: instances,
            role: ServiceRole::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceAssignment {
    pub role: ServiceRole,
    pub strategy: PlacementStrategy,
    /// One entry per container; a node appears twice if it hosts two replicas.
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub assignments: BTreeMap<String, ServiceAssignment>,
}

impl Placement {
    pub fn nodes_for(&self, service: &str) -> &[String] {
        self.assignments.get(service).map(|a| a.nodes.as_slice()).unwrap_or(&[])
    }

    pub fn by_role(&self, role: ServiceRole) -> impl Iterator<Item = (&String, &ServiceAssignment)> {
        self.assignments.iter().filter(move |(_, a)| a.role == role)
    }

    /// Container count per node.
    pub fn loads(&self) -> BTreeMap<String, usize> {
        let mut loads = BTreeMap::new();
        for a in self.assignments.values() {
            for n in &a.nodes {
                *loads.entry(n.clone()).or_insert(0) += 1;
            }
        }
        loads
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid cluster:\n{0}")]
    InvalidCluster(ValidationReport),
    #[error("service {0} is listed more than once")]
    DuplicateService(String),
    #[error("service {0} requests zero instances")]
    ZeroInstances(String),
}

pub fn plan_placement(c: &Cluster, services: &[ServiceSpec]) -> Result<Placement, TopologyError> {
    plan_placement_with_loads(c, services, &BTreeMap::new())
}

/// Like [`plan_placement`], starting from containers already running on the
/// cluster (`prior` maps node id to container count).
pub fn plan_placement_with_loads(
    c: &Cluster,
    services: &[ServiceSpec],
    prior: &BTreeMap<String, usize>,
) -> Result<Placement, TopologyError> {
    let report = c.validate();
    if report.has_errors() {
        return Err(TopologyError::InvalidCluster(report));
    }
    let manager = c.manager().expect("validated cluster has a manager").id.clone();
    let ids = c.sorted_ids();
    let mut loads: BTreeMap<&str, usize> = ids
        .iter()
        .map(|&id| (id, prior.get(id).copied().unwrap_or(0)))
        .collect();

    let mut placement = Placement::default();
    for svc in services {
        if placement.assignments.contains_key(&svc.id) {
            return Err(TopologyError::DuplicateService(svc.id.clone()));
        }
        let nodes: Vec<String> = match svc.placement {
            PlacementStrategy::ManagerOnly => vec![manager.clone()],
            PlacementStrategy::Global => ids.iter().map(|s| s.to_string()).collect(),
            PlacementStrategy::EmptiestNode => {
                if svc.instances_requested == 0 {
                    return Err(TopologyError::ZeroInstances(svc.id.clone()));
                }
                let mut own: BTreeMap<&str, usize> = BTreeMap::new();
                let mut picked = Vec::with_capacity(svc.instances_requested as usize);
                for _ in 0..svc.instances_requested {
                    let node = *ids
                        .iter()
                        .min_by_key(|&&id| (loads[id], own.get(id).copied().unwrap_or(0), id))
                        .expect("non-empty cluster");
                    *loads.get_mut(node).unwrap() += 1;
                    *own.entry(node).or_insert(0) += 1;
                    picked.push(node.to_string());
                }
                picked
            }
        };
        if svc.placement != PlacementStrategy::EmptiestNode {
            for n in &nodes {
                *loads.get_mut(n.as_str()).unwrap() += 1;
            }
        }
        placement.assignments.insert(
            svc.id.clone(),
            ServiceAssignment { role: svc.role, strategy: svc.placement, nodes },
        );
    }
    Ok(placement)
}

/// Checks that a placement can host the pipeline's data-access needs.
pub fn validate_placement(c: &Cluster, p: &Pipeline, pl: &Placement) -> ValidationReport {
    let mut report = ValidationReport::new();
    let all_nodes: BTreeSet<&str> = c.nodes.iter().map(|n| n.id.as_str()).collect();

    for (svc, a) in &pl.assignments {
        for n in &a.nodes {
            if !all_nodes.contains(n.as_str()) {
                report.error(svc, "unknown-node", format!("assigned to node {n} which is not in the cluster"));
            }
        }
    }

    if p.has_mode(ExecMode::DistributedNative) {
        let datanodes: Vec<_> = pl.by_role(ServiceRole::HdfsDatanode).collect();
        if datanodes.is_empty() {
            report.error("placement", "datanode-missing", "distributed stages need an HdfsDatanode service");
        }
        for (svc, a) in datanodes {
            let covered: BTreeSet<&str> = a.nodes.iter().map(String::as_str).collect();
            if a.strategy != PlacementStrategy::Global || covered != all_nodes {
                report.error(svc, "datanode-not-global", "HDFS datanode service must be deployed globally");
            }
        }

        let worker_nodes: BTreeSet<&str> = pl
            .by_role(ServiceRole::SparkWorker)
            .flat_map(|(_, a)| a.nodes.iter().map(String::as_str))
            .collect();
        let reference_nodes: BTreeSet<&str> = pl
            .by_role(ServiceRole::ReferenceImage)
            .flat_map(|(_, a)| a.nodes.iter().map(String::as_str))
            .collect();
        let uncovered: Vec<&str> = worker_nodes.difference(&reference_nodes).copied().collect();
        if !uncovered.is_empty() {
            let subject = pl
                .by_role(ServiceRole::ReferenceImage)
                .map(|(id, _)| id.as_str())
                .next()
                .unwrap_or("placement");
            report.error(
                subject,
                "reference-not-replicated",
                format!("reference image missing on worker nodes: {}", uncovered.join(", ")),
            );
        }
    }

    if p.has_mode(ExecMode::CentralizedWrapped) {
        let mounted = c.manager().is_some_and(|m| {
            pl.by_role(ServiceRole::VolumeMount).any(|(_, a)| a.nodes.contains(&m.id))
        });
        if !mounted {
            report.error(
                "placement",
                "manager-volume-missing",
                "centralized stages need a VolumeMount service on the manager node",
            );
        }
    }
    report.sorted()
}

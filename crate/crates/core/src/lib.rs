//! Planner and performance/cost model for hybrid distributed genomics
//! pipelines.
//!
//! A pipeline mixes native Spark stages (distributed over every node, data on
//! the DFS) with wrapped non-Spark tools (run on the swarm manager, data on
//! the local file system). This crate validates such pipelines, places the
//! supporting services on a swarm, compiles runs into ordered execution plans
//! with the staging transfers they need, predicts their duration, fits the
//! duration model to measured scaling data, and prices runs against a per-GB
//! managed service.
//!
//! ```
//! use pipesim_core::{perf, planner, reference};
//!
//! let plan = planner::plan_execution(
//!     &reference::pipeline(),
//!     &reference::pfc_0028(),
//!     &reference::single_node(),
//!     &reference::configs()[0],
//! )
//! .unwrap();
//! let timeline = perf::simulate(&plan, &perf::PerfModel::default()).unwrap();
//! assert!(timeline.makespan_min > 0.0);
//! ```

pub mod calibrate;
pub mod config;
pub mod cost;
pub mod perf;
pub mod pipeline;
pub mod planner;
pub mod reference;
pub mod report;
pub mod topology;

pub use report::{Severity, ValidationReport, Violation};

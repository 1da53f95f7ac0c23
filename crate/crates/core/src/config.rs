//! Loading scenarios from JSON configuration files.
//!
//! A scenario file names the other files relative to its own directory:
//!
//! ```json
//! {
//!   "pipeline": "pipeline.json",
//!   "batch": "batch.json",
//!   "cluster": "cluster-single.json",
//!   "services": "services.json",
//!   "resources": "20/2/4/16",
//!   "model": "perf-model.json",
//!   "pricing": "pricing.json",
//!   "output_dir": "out"
//! }
//! ```
//!
//! `services` and `model` are optional (no services; default model).
//! `resources` is either an X/Y/W/Z string or an object with the four fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Pricing;
use crate::perf::PerfModel;
use crate::pipeline::{Batch, Pipeline};
use crate::planner::SparkResourceConfig;
use crate::topology::{Cluster, ServiceSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResourceSpec {
    Text(String),
    Fields(SparkResourceConfig),
}

/// The on-disk scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub pipeline: PathBuf,
    pub batch: PathBuf,
    pub cluster: PathBuf,
    #[serde(default)]
    pub services: Option<PathBuf>,
    pub resources: ResourceSpec,
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub pricing: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A scenario with every referenced file loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub path: PathBuf,
    pub pipeline: Pipeline,
    pub batch: Batch,
    pub cluster: Cluster,
    pub services: Vec<ServiceSpec>,
    pub resources: SparkResourceConfig,
    pub model: PerfModel,
    pub pricing: Pricing,
    pub output_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let cfg: ScenarioConfig = read_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &Path| base.join(p);
        let resources = match &cfg.resources {
            ResourceSpec::Fields(c) => *c,
            ResourceSpec::Text(s) => s.parse().map_err(|e: crate::planner::ParseConfigError| ConfigError::Invalid {
                path: path.to_path_buf(),
                message: format!("resources: {e}"),
            })?,
        };
        let pricing: Pricing = read_json(&resolve(&cfg.pricing))?;
        pricing
            .validate()
            .map_err(|message| ConfigError::Invalid { path: resolve(&cfg.pricing), message })?;
        Ok(Scenario {
            path: path.to_path_buf(),
            pipeline: read_json(&resolve(&cfg.pipeline))?,
            batch: read_json(&resolve(&cfg.batch))?,
            cluster: read_json(&resolve(&cfg.cluster))?,
            services: match &cfg.services {
                Some(p) => read_json(&resolve(p))?,
                None => Vec::new(),
            },
            resources,
            model: match &cfg.model {
                Some(p) => read_json(&resolve(p))?,
                None => PerfModel::default(),
            },
            pricing,
            output_dir: cfg.output_dir.as_deref().map(resolve),
        })
    }
}

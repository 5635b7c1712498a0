//! Experiment pipeline: generate, reference, targets, run, time, report.
//!
//! Output layout below the configured directory:
//!
//! ```text
//! graph.chimera                              working graph
//! instances/<class>/<size>/<index>.ising
//! reference/<class>/<size>/<index>.samples
//! targets/<class>/<size>/<index>.json
//! samples/<class>/<size>/<index>/<solver>.samples
//! results/<class>/<size>/<index>.jsonl       append-only run records
//! timing/timing.json
//! report.csv, report.json, relative.csv
//! ```

mod config;
mod pipeline;
mod report;
mod timing;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::generators::{GeneratorError, ProblemClass};
use crate::ising::IsingError;
use crate::metrics::MetricsError;
use crate::rng::derive_seed;
use crate::solvers::SolverError;
use crate::topology::{apply_defects, build_chimera, random_defect_mask, square_subgraph, TopologyError, WorkingGraph};

pub use config::{ExperimentConfig, GraphConfig, Profile, ReferenceSection, SolverGrid, TimingSection};
pub use pipeline::{
    cmd_generate, cmd_reference, cmd_run, cmd_targets, read_results, InstanceResults, Record, RunSummary, TargetFile,
    RESULTS_SCHEMA,
};
pub use report::{cmd_report, write_report, Report, ReportCell, ReportRelative};
pub use timing::{
    calibrate_cell, cmd_time, cmd_time_solver, measure_per_sweep, timer_resolution, CellTiming, TimingTable,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing input {0}")]
    Missing(PathBuf),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("timer resolution too coarse: {0}")]
    Timer(String),
    #[error("{0}: {1}")]
    Instance(String, String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        HarnessError::Format { path: path.to_path_buf(), msg: msg.to_string() }
    }
}

/// One cell member of the instance suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceKey {
    pub class: ProblemClass,
    pub size: usize,
    pub index: usize,
}

impl InstanceKey {
    /// `<class slug>/<size>/<index>`
    pub fn rel(&self) -> PathBuf {
        PathBuf::from(self.class.slug()).join(self.size.to_string()).join(self.index.to_string())
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.class, self.size, self.index)
    }

    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(master, &format!("instance/{}/{}/{}", self.class, self.size, self.index))
    }
}

/// Paths of every pipeline artifact below one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn graph(&self) -> PathBuf {
        self.root.join("graph.chimera")
    }

    fn with_ext(&self, dir: &str, key: &InstanceKey, ext: &str) -> PathBuf {
        let mut p = self.root.join(dir).join(key.rel());
        p.set_extension(ext);
        p
    }

    pub fn instance(&self, key: &InstanceKey) -> PathBuf {
        self.with_ext("instances", key, "ising")
    }

    pub fn reference(&self, key: &InstanceKey) -> PathBuf {
        self.with_ext("reference", key, "samples")
    }

    pub fn targets(&self, key: &InstanceKey) -> PathBuf {
        self.with_ext("targets", key, "json")
    }

    pub fn results(&self, key: &InstanceKey) -> PathBuf {
        self.with_ext("results", key, "jsonl")
    }

    pub fn samples(&self, key: &InstanceKey, solver: &str) -> PathBuf {
        self.root.join("samples").join(key.rel()).join(format!("{}.samples", solver.replace([':', '@'], "_")))
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("timing").join("timing.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn relative_csv(&self) -> PathBuf {
        self.root.join("relative.csv")
    }
}

impl ExperimentConfig {
    pub fn layout(&self) -> Layout {
        Layout::new(&self.out)
    }

    /// All instances in class, size, index order.
    pub fn instance_keys(&self) -> Vec<InstanceKey> {
        let mut out = Vec::new();
        for &class in &self.classes {
            for &size in &self.sizes {
                for index in 0..self.instances_per_cell {
                    out.push(InstanceKey { class, size, index });
                }
            }
        }
        out
    }

    /// The defected reference graph every instance graph is cut from.
    pub fn working_graph(&self) -> Result<WorkingGraph, HarnessError> {
        let full = build_chimera(self.graph.size)?;
        let inactive = if self.graph.inactive.is_empty() {
            random_defect_mask(self.graph.size, self.graph.defects, derive_seed(self.seed, "defects"))?
        } else {
            self.graph.inactive.iter().copied().collect()
        };
        Ok(apply_defects(&full, &inactive)?)
    }

    /// Instance graphs per size.
    pub fn size_graphs(&self) -> Result<Vec<(usize, Arc<WorkingGraph>)>, HarnessError> {
        let g = self.working_graph()?;
        let mut sizes = self.sizes.clone();
        sizes.sort_unstable();
        sizes.dedup();
        sizes.into_iter().map(|s| Ok((s, Arc::new(square_subgraph(&g, s)?)))).collect()
    }
}

/// Write through a temporary sibling and rename, creating parents.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String, HarnessError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(HarnessError::Missing(path.to_path_buf())),
        Err(e) => Err(HarnessError::io(path, e)),
    }
}

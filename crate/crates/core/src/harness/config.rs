//! Experiment configuration and the built-in profiles.
//!
//! A config file is TOML. Every key is optional: missing keys fall back to
//! the profile named by `profile` (default `desk`). Schema:
//!
//! ```toml
//! profile = "desk"            # desk | paper, base for missing keys
//! seed = 1                    # master seed
//! out = "runs/desk"           # output directory
//! classes = ["RAN1", "AC3-odd", "FL3:a=0.25"]
//! sizes = [2, 3, 4]           # Chimera sizes C_s of the instance suite
//! instances_per_cell = 20
//! quantiles = [0.001, 0.01, 0.1]
//! confidence = 0.95
//!
//! [graph]                     # working graph all instances are cut from
//! size = 4
//! defects = 2                 # random inactive qubits
//! inactive = []               # or an explicit list of qubit ids
//!
//! [reference]
//! gauges = 5
//! samples_per_gauge = 100
//! sweeps = 100
//! schedule = "scaled"
//!
//! [solvers]
//! samples = 100
//! sa_sweeps = [10, 20, 40, 100, 200, 400, 1000, 2000, 4000, 10000]
//! sa_schedules = ["unscaled", "scaled"]
//! msa_sweeps = [...]          # empty disables multi-spin SA
//! hfs = true
//! hfs_patience = 10
//! external = true             # add estimates for published SA codes
//! adaptive_extension = false  # resample censored sets
//! adaptive_max_samples = 1000
//!
//! [timing]
//! min_sweeps = 100000         # per-sweep calibration budget
//! min_tree_sweeps = 10000
//! init_repeats = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::generators::ProblemClass;
use crate::solvers::{ReferenceConfig, SAParams, ScheduleKind, SolverId, TimingModel, DEFAULT_PATIENCE, SWEEP_GRID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(HarnessError::Config(format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub size: usize,
    pub defects: usize,
    #[serde(default)]
    pub inactive: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub gauges: usize,
    pub samples_per_gauge: usize,
    pub sweeps: u64,
    pub schedule: ScheduleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverGrid {
    pub samples: usize,
    pub sa_sweeps: Vec<u64>,
    pub sa_schedules: Vec<ScheduleKind>,
    pub msa_sweeps: Vec<u64>,
    pub hfs: bool,
    pub hfs_patience: usize,
    pub external: bool,
    pub adaptive_extension: bool,
    pub adaptive_max_samples: usize,
}

impl SolverGrid {
    /// Every in-house parameterization in run order.
    pub fn solver_ids(&self) -> Vec<SolverId> {
        let mut out = Vec::new();
        for &schedule in &self.sa_schedules {
            for &sweeps in &self.sa_sweeps {
                out.push(SolverId::Sa { sweeps, schedule });
            }
        }
        out.extend(self.msa_sweeps.iter().map(|&sweeps| SolverId::Msa { sweeps }));
        if self.hfs {
            out.push(SolverId::Hfs);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub min_sweeps: u64,
    pub min_tree_sweeps: u64,
    pub init_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    pub classes: Vec<ProblemClass>,
    pub sizes: Vec<usize>,
    pub instances_per_cell: usize,
    pub quantiles: Vec<f64>,
    pub confidence: f64,
    pub graph: GraphConfig,
    pub reference: ReferenceSection,
    pub solvers: SolverGrid,
    pub timing: TimingSection,
}

fn classes(names: &[&str]) -> Vec<ProblemClass> {
    names.iter().map(|c| c.parse().expect("built-in class")).collect()
}

impl ExperimentConfig {
    /// Small suite that runs end to end on one core in minutes.
    pub fn desk() -> Self {
        ExperimentConfig {
            profile: Profile::Desk,
            seed: 1,
            out: PathBuf::from("runs/desk"),
            classes: classes(&["RAN1", "AC3-odd", "FL3:a=0.25"]),
            sizes: vec![2, 3, 4],
            instances_per_cell: 20,
            quantiles: vec![0.001, 0.01, 0.1],
            confidence: 0.95,
            graph: GraphConfig { size: 4, defects: 2, inactive: vec![] },
            reference: ReferenceSection { gauges: 5, samples_per_gauge: 100, sweeps: 100, schedule: ScheduleKind::Scaled },
            solvers: SolverGrid {
                samples: 100,
                sa_sweeps: SWEEP_GRID.to_vec(),
                sa_schedules: vec![ScheduleKind::Unscaled, ScheduleKind::Scaled],
                msa_sweeps: SWEEP_GRID.to_vec(),
                hfs: true,
                hfs_patience: DEFAULT_PATIENCE,
                external: true,
                adaptive_extension: false,
                adaptive_max_samples: 1000,
            },
            timing: TimingSection { min_sweeps: 100_000, min_tree_sweeps: 10_000, init_repeats: 10 },
        }
    }

    /// Full-scale protocol: six classes on C4 to C12, 100 inputs each.
    pub fn paper() -> Self {
        let mut c = ExperimentConfig::desk();
        c.profile = Profile::Paper;
        c.out = PathBuf::from("runs/paper");
        c.classes = classes(&["RAN1", "RAN3", "RAN7", "RAN127", "AC3-odd", "FL3:a=0.25"]);
        c.sizes = (4..=12).collect();
        c.instances_per_cell = 100;
        c.graph = GraphConfig { size: 12, defects: 55, inactive: vec![] };
        c.reference.gauges = 50;
        c.reference.samples_per_gauge = 1000;
        c.solvers.samples = 1000;
        c.solvers.adaptive_max_samples = 10_000;
        c.timing.min_tree_sweeps = 100_000;
        c
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Desk => ExperimentConfig::desk(),
            Profile::Paper => ExperimentConfig::paper(),
        }
    }

    /// Parse TOML, filling missing keys from the profile named in the text,
    /// or from `default_profile` when it names none.
    pub fn from_toml(text: &str, default_profile: Profile) -> Result<Self, HarnessError> {
        let cfg_err = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        let user: toml::Table = text.parse().map_err(|e| cfg_err(&e))?;
        let profile = match user.get("profile") {
            Some(v) => v.as_str().ok_or_else(|| cfg_err(&"profile must be a string"))?.parse()?,
            None => default_profile,
        };
        let base = toml::Table::try_from(ExperimentConfig::for_profile(profile)).map_err(|e| cfg_err(&e))?;
        let merged = merge(base, user);
        let cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, default_profile: Profile) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, default_profile)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.classes.is_empty() || self.sizes.is_empty() || self.quantiles.is_empty() {
            return bad("classes, sizes and quantiles must be nonempty".into());
        }
        if self.instances_per_cell == 0 {
            return bad("instances_per_cell must be at least 1".into());
        }
        if let Some(&s) = self.sizes.iter().find(|&&s| s == 0 || s > self.graph.size) {
            return bad(format!("size {s} outside 1..={}", self.graph.size));
        }
        if let Some(q) = self.quantiles.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return bad(format!("quantile {q} outside (0, 1)"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence {} outside (0, 1)", self.confidence));
        }
        for c in &self.classes {
            c.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if self.solvers.samples == 0 {
            return bad("solvers.samples must be at least 1".into());
        }
        for &sweeps in self.solvers.sa_sweeps.iter().chain(&self.solvers.msa_sweeps).chain([&self.reference.sweeps]) {
            if sweeps == 0 {
                return bad("sweep counts must be at least 1".into());
            }
        }
        if self.solvers.hfs && self.solvers.hfs_patience == 0 {
            return bad("hfs_patience must be at least 1".into());
        }
        self.reference_config().inner.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.reference.gauges == 0 || self.reference.samples_per_gauge == 0 {
            return bad("reference gauges and samples_per_gauge must be at least 1".into());
        }
        if self.timing.init_repeats == 0 {
            return bad("timing.init_repeats must be at least 1".into());
        }
        Ok(())
    }

    pub fn reference_config(&self) -> ReferenceConfig {
        ReferenceConfig {
            gauges: self.reference.gauges,
            samples_per_gauge: self.reference.samples_per_gauge,
            inner: SAParams::new(self.reference.sweeps, self.reference.schedule),
            timing: TimingModel::reference(),
        }
    }

    /// Sorted, deduplicated quantiles.
    pub fn quantile_list(&self) -> Vec<f64> {
        let mut q = self.quantiles.clone();
        q.sort_by(f64::total_cmp);
        q.dedup();
        q
    }
}

/// Recursive table merge; `over` wins on conflicts.
fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge(std::mem::take(b), o);
                *b = merged;
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

//! Samplers and the timed sample sets they produce.

mod hfs;
mod multispin;
mod reference;
mod sa;
mod sample_set;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ising::IsingError;

pub use hfs::{
    hfs_sample, hfs_sample_set, minimize_on_forest, random_maximal_tree, HalfCellGraph, HfsSample, HfsSolver,
    DEFAULT_PATIENCE,
};
pub use multispin::{multispin_sa_batch, msa_sample_set, MultiSpinSa, REPLICAS};
pub use reference::{reference_sample_run, ReferenceConfig};
pub use sa::{sa_sample, sa_sample_set, SAParams, SASchedule, SaKernel, SWEEP_GRID};
pub use sample_set::{Sample, SampleSet, SAMPLES_SCHEMA};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("multi-replica annealing needs |J| = 1 and h = 0 everywhere")]
    NotRangeOne,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("selected half-cells do not induce a forest")]
    NotAForest,
    #[error("cannot parse solver id `{0}`")]
    BadId(String),
    #[error("malformed sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Ising(#[from] IsingError),
}

/// A duration in integer nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nanos(pub u64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);

    pub const fn from_micros(us: u64) -> Self {
        Nanos(us * 1_000)
    }

    /// `ms` given in tenths of a millisecond to keep `11.6 ms` exact.
    pub const fn from_tenth_millis(tenths: u64) -> Self {
        Nanos(tenths * 100_000)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl std::ops::Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl std::ops::Mul<u64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: u64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

/// Per-solver timing components.
///
/// `t_i` is paid once per programming step (per gauge batch on the reference
/// solver), `t_a + t_r` once per sample. `batch` is the number of samples
/// produced together by one anneal; when it exceeds 1, `t_a` and `t_r` are
/// per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingModel {
    pub t_i: Nanos,
    pub t_a: Nanos,
    pub t_r: Nanos,
    #[serde(default = "one")]
    pub batch: u32,
}

fn one() -> u32 {
    1
}

/// Programming time of the reference annealer.
pub const REFERENCE_T_I: Nanos = Nanos::from_tenth_millis(116);
/// Anneal time of the reference annealer.
pub const REFERENCE_T_A: Nanos = Nanos::from_micros(20);
/// Readout time of the reference annealer.
pub const REFERENCE_T_R: Nanos = Nanos::from_micros(320);

impl TimingModel {
    pub fn new(t_i: Nanos, t_a: Nanos, t_r: Nanos) -> Self {
        TimingModel { t_i, t_a, t_r, batch: 1 }
    }

    /// Hardware timing table of the reference annealer.
    pub fn reference() -> Self {
        TimingModel::new(REFERENCE_T_I, REFERENCE_T_A, REFERENCE_T_R)
    }

    /// Software timings record no readout cost.
    pub fn software(t_i: Nanos, t_a: Nanos) -> Self {
        TimingModel::new(t_i, t_a, Nanos::ZERO)
    }

    /// `t_s = t_a + t_r`.
    pub fn sample_time(&self) -> Nanos {
        self.t_a + self.t_r
    }

    /// `T = t_i + R t_s` for one programming step and `R` samples.
    pub fn total_time(&self, samples: u64) -> Nanos {
        self.t_i + self.sample_time() * samples
    }
}

/// Measured cost of a software sampler: one initialization plus a per-sweep
/// (or per-tree-sweep) rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCost {
    pub init: Nanos,
    pub per_sweep_ns: f64,
}

impl SweepCost {
    /// Zero cost, for runs that only care about energies.
    pub const UNCALIBRATED: SweepCost = SweepCost { init: Nanos::ZERO, per_sweep_ns: 0.0 };

    pub fn duration(&self, sweeps: u64) -> Nanos {
        Nanos((self.per_sweep_ns * sweeps as f64).round() as u64)
    }
}

/// Cooling schedule variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Unscaled,
    Scaled,
}

/// Parsed solver identifier: `sa:<sweeps>:<scaled|unscaled>`, `msa:<sweeps>`,
/// `hfs:tw4` or `ref:<inner sa id>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverId {
    Sa { sweeps: u64, schedule: ScheduleKind },
    Msa { sweeps: u64 },
    Hfs,
    Reference { sweeps: u64, schedule: ScheduleKind },
}

impl SolverId {
    /// Solver family used for portfolio selection.
    pub fn family(&self) -> &'static str {
        match self {
            SolverId::Sa { .. } => "sa",
            SolverId::Msa { .. } => "msa",
            SolverId::Hfs => "hfs",
            SolverId::Reference { .. } => "ref",
        }
    }

    pub fn sweeps(&self) -> Option<u64> {
        match *self {
            SolverId::Sa { sweeps, .. } | SolverId::Msa { sweeps } | SolverId::Reference { sweeps, .. } => Some(sweeps),
            SolverId::Hfs => None,
        }
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sched = |s: ScheduleKind| match s {
            ScheduleKind::Unscaled => "unscaled",
            ScheduleKind::Scaled => "scaled",
        };
        match *self {
            SolverId::Sa { sweeps, schedule } => write!(f, "sa:{sweeps}:{}", sched(schedule)),
            SolverId::Msa { sweeps } => write!(f, "msa:{sweeps}"),
            SolverId::Hfs => write!(f, "hfs:tw4"),
            SolverId::Reference { sweeps, schedule } => write!(f, "ref:sa:{sweeps}:{}", sched(schedule)),
        }
    }
}

impl FromStr for SolverId {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SolverError::BadId(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let sweeps = |t: &str| t.parse::<u64>().ok().filter(|&n| n >= 1).ok_or_else(bad);
        let schedule = |t: &str| match t {
            "scaled" => Ok(ScheduleKind::Scaled),
            "unscaled" => Ok(ScheduleKind::Unscaled),
            _ => Err(bad()),
        };
        match parts.as_slice() {
            ["sa", n, sch] => Ok(SolverId::Sa { sweeps: sweeps(n)?, schedule: schedule(sch)? }),
            ["msa", n] => Ok(SolverId::Msa { sweeps: sweeps(n)? }),
            ["hfs", "tw4"] => Ok(SolverId::Hfs),
            ["ref", "sa", n, sch] => Ok(SolverId::Reference { sweeps: sweeps(n)?, schedule: schedule(sch)? }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for SolverId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SolverId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

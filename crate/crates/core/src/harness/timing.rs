//! Wall-clock calibration of the software samplers.
//!
//! Initialization is timed `init_repeats` times and the minimum kept; sweep
//! cost is the mean over complete anneals totalling at least `min_sweeps`
//! sweeps, so schedule effects and post-processing are amortized in. Any interval shorter
//! than 100 timer ticks is re-measured over a geometrically growing batch.
//! Calibration runs on the calling thread and never concurrently with other
//! jobs.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{read_file, write_file, ExperimentConfig, HarnessError, InstanceKey, TimingSection};
use crate::generators::{generate, GeneratorSpec, ProblemClass};
use crate::ising::{IsingProblem, SpinConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers::{
    hfs_sample, HfsSolver, MultiSpinSa, Nanos, SAParams, SaKernel, ScheduleKind, SolverId, SweepCost, TimingModel,
    REPLICAS,
};
use crate::topology::WorkingGraph;

const TIMING_SCHEMA: u32 = 1;
/// Measured intervals must span this many timer ticks.
const TICKS_FLOOR: u32 = 100;
/// Give up on batching beyond this many repetitions.
const MAX_BATCH: u64 = 1 << 24;

/// Calibrated costs of one (class, size) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub class: ProblemClass,
    pub size: usize,
    pub spins: usize,
    pub sa: SweepCost,
    /// Cost of one word-wide sweep over all replicas; range-1 classes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msa: Option<SweepCost>,
    /// Cost per tree sweep.
    pub hfs: SweepCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub schema: u32,
    pub timer_resolution: Nanos,
    pub cells: BTreeMap<String, CellTiming>,
}

impl TimingTable {
    pub fn key(class: &ProblemClass, size: usize) -> String {
        format!("{class}/{size}")
    }

    pub fn get(&self, class: &ProblemClass, size: usize) -> Option<&CellTiming> {
        self.cells.get(&Self::key(class, size))
    }

    pub fn load(path: &std::path::Path) -> Result<Option<Self>, HarnessError> {
        match read_file(path) {
            Ok(text) => {
                let t: TimingTable = serde_json::from_str(&text).map_err(|e| HarnessError::format(path, e))?;
                if t.schema != TIMING_SCHEMA {
                    return Err(HarnessError::format(path, format!("unsupported schema {}", t.schema)));
                }
                Ok(Some(t))
            }
            Err(HarnessError::Missing(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Smallest nonzero step of the monotonic clock.
pub fn timer_resolution() -> Result<Nanos, HarnessError> {
    let mut best = Duration::MAX;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        let mut spins = 0;
        while b == a && spins < 1_000_000 {
            b = Instant::now();
            spins += 1;
        }
        if b > a {
            best = best.min(b - a);
        }
    }
    if best == Duration::MAX {
        return Err(HarnessError::Timer("clock did not advance".into()));
    }
    if best > Duration::from_millis(1) {
        return Err(HarnessError::Timer(format!("{best:?} per tick")));
    }
    Ok(Nanos(best.as_nanos().max(1) as u64))
}

/// Mean duration of `f`, repeating it in batches until one batch spans the
/// tick floor.
fn time_batched(resolution: Nanos, mut f: impl FnMut()) -> Result<f64, HarnessError> {
    let floor = Duration::from_nanos(resolution.0 * TICKS_FLOOR as u64);
    let mut reps = 1u64;
    loop {
        let t = Instant::now();
        for _ in 0..reps {
            f();
        }
        let dt = t.elapsed();
        if dt >= floor {
            return Ok(dt.as_nanos() as f64 / reps as f64);
        }
        if reps >= MAX_BATCH {
            return Err(HarnessError::Timer(format!("{reps} repetitions still below {floor:?}")));
        }
        reps *= 2;
    }
}

/// Minimum over `repeats` batched timings of `init`.
fn measure_init<T>(resolution: Nanos, repeats: usize, mut init: impl FnMut() -> T) -> Result<Nanos, HarnessError> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        best = best.min(time_batched(resolution, || {
            black_box(init());
        })?);
    }
    Ok(Nanos(best.round() as u64))
}

/// Mean cost of one `step`, each covering `work` sweeps, over at least
/// `min_work` sweeps and at least the tick floor.
pub fn measure_per_sweep(
    resolution: Nanos,
    min_work: u64,
    work: u64,
    mut step: impl FnMut(),
) -> Result<f64, HarnessError> {
    let floor = Duration::from_nanos(resolution.0 * TICKS_FLOOR as u64);
    let mut done = 0u64;
    let t = Instant::now();
    while done < min_work.max(1) || t.elapsed() < floor {
        step();
        done += work;
    }
    Ok(t.elapsed().as_nanos() as f64 / done as f64)
}

/// Sweeps per calibration anneal.
const CALIBRATION_SWEEPS: u64 = 1000;

fn sa_cost(p: &IsingProblem, t: &TimingSection, res: Nanos) -> Result<SweepCost, HarnessError> {
    let params = SAParams::new(CALIBRATION_SWEEPS, ScheduleKind::Unscaled);
    let init = measure_init(res, t.init_repeats, || {
        let k = SaKernel::new(p, params).expect("valid params");
        let s = SpinConfig::random(p.num_spins(), &mut rng_from_seed(0));
        (k.params().sweeps, s)
    })?;
    let mut kernel = SaKernel::new(p, params)?;
    let mut rng = rng_from_seed(1);
    let per = measure_per_sweep(res, t.min_sweeps, CALIBRATION_SWEEPS, || {
        black_box(kernel.anneal(&mut rng));
    })?;
    Ok(SweepCost { init, per_sweep_ns: per })
}

fn msa_cost(p: &IsingProblem, t: &TimingSection, res: Nanos) -> Result<SweepCost, HarnessError> {
    let params = SAParams::new(CALIBRATION_SWEEPS, ScheduleKind::Unscaled);
    let init = measure_init(res, t.init_repeats, || MultiSpinSa::new(p, params).is_ok())?;
    let mut solver = MultiSpinSa::new(p, params)?;
    let mut rng = rng_from_seed(2);
    let per = measure_per_sweep(res, t.min_sweeps, CALIBRATION_SWEEPS, || {
        black_box(solver.batch(&mut rng));
    })?;
    Ok(SweepCost { init, per_sweep_ns: per })
}

fn hfs_cost(p: &IsingProblem, patience: usize, t: &TimingSection, res: Nanos) -> Result<SweepCost, HarnessError> {
    let init = measure_init(res, t.init_repeats, || HfsSolver::new(p, patience).expect("patience >= 1"))?;
    let solver = HfsSolver::new(p, patience)?;
    let mut rng = rng_from_seed(3);
    let mut spins = SpinConfig::random(p.num_spins(), &mut rng).into_inner();
    let chunk = 10;
    let per = measure_per_sweep(res, t.min_tree_sweeps, chunk, || {
        for _ in 0..chunk {
            solver.tree_sweep(&mut spins, &mut rng);
        }
    })?;
    Ok(SweepCost { init, per_sweep_ns: per })
}

fn calibration_problem(cfg: &ExperimentConfig, class: ProblemClass, graph: &Arc<WorkingGraph>) -> Result<IsingProblem, HarnessError> {
    let key = InstanceKey { class, size: graph.size(), index: 0 };
    let seed = derive_seed(key.seed(cfg.seed), "calibration");
    Ok(generate(graph, &GeneratorSpec { class, seed })?.problem)
}

/// Calibrate all samplers on a representative instance of one cell.
pub fn calibrate_cell(
    cfg: &ExperimentConfig,
    class: ProblemClass,
    graph: &Arc<WorkingGraph>,
    res: Nanos,
) -> Result<CellTiming, HarnessError> {
    let p = calibration_problem(cfg, class, graph)?;
    let msa = if class.range() == 1 && !cfg.solvers.msa_sweeps.is_empty() {
        Some(msa_cost(&p, &cfg.timing, res)?)
    } else {
        None
    };
    Ok(CellTiming {
        class,
        size: graph.size(),
        spins: p.num_spins(),
        sa: sa_cost(&p, &cfg.timing, res)?,
        msa,
        hfs: hfs_cost(&p, cfg.solvers.hfs_patience, &cfg.timing, res)?,
    })
}

/// Calibrate every (class, size) cell missing from the on-disk table and
/// persist the result. Existing entries are kept.
pub fn cmd_time(cfg: &ExperimentConfig) -> Result<TimingTable, HarnessError> {
    let path = cfg.layout().timing();
    let res = timer_resolution()?;
    let mut table = TimingTable::load(&path)?.unwrap_or(TimingTable {
        schema: TIMING_SCHEMA,
        timer_resolution: res,
        cells: BTreeMap::new(),
    });
    let mut changed = false;
    for (size, graph) in cfg.size_graphs()? {
        for &class in &cfg.classes {
            if table.get(&class, size).is_none() {
                table.cells.insert(TimingTable::key(&class, size), calibrate_cell(cfg, class, &graph, res)?);
                changed = true;
            }
        }
    }
    if changed || !path.exists() {
        let text = serde_json::to_string_pretty(&table).expect("serializable") + "\n";
        write_file(&path, text.as_bytes())?;
    }
    Ok(table)
}

/// Timing model of one solver parameterization on one instance.
///
/// SA and multi-spin SA: `t_a = per-sweep cost * sweeps`. HFS: `t_a` is the
/// per-tree-sweep cost times the mean tree sweeps of `hfs_probe` samples.
/// Software models carry `t_r = 0`; the reference model is the fixed table.
pub fn cmd_time_solver(
    id: &SolverId,
    p: &IsingProblem,
    cfg: &ExperimentConfig,
) -> Result<TimingModel, HarnessError> {
    const HFS_PROBE: u64 = 20;
    let res = timer_resolution()?;
    let t = &cfg.timing;
    match *id {
        SolverId::Sa { sweeps, .. } => {
            let c = sa_cost(p, t, res)?;
            Ok(TimingModel::software(c.init, c.duration(sweeps)))
        }
        SolverId::Msa { sweeps } => {
            let c = msa_cost(p, t, res)?;
            let mut m = TimingModel::software(c.init, c.duration(sweeps));
            m.batch = REPLICAS as u32;
            Ok(m)
        }
        SolverId::Hfs => {
            let c = hfs_cost(p, cfg.solvers.hfs_patience, t, res)?;
            let mut total = 0u64;
            for s in 0..HFS_PROBE {
                total += hfs_sample(p, cfg.solvers.hfs_patience, s)?.tree_sweeps;
            }
            let mean = total as f64 / HFS_PROBE as f64;
            Ok(TimingModel::software(c.init, Nanos((c.per_sweep_ns * mean).round() as u64)))
        }
        SolverId::Reference { .. } => Ok(TimingModel::reference()),
    }
}

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::timing::{CellTiming, TimingTable};
use super::{read_file, write_file, ExperimentConfig, HarnessError, InstanceKey, Layout};
use crate::generators::{generate, GeneratedInstance, GeneratorSpec};
use crate::ising::IsingProblem;
use crate::metrics::{
    estimate_external_ttt, portfolio_best, stt, target_energy, ttt, ExternalTiming, Metric, SolverStats, TargetSpec,
};
use crate::par;
use crate::rng::derive_seed;
use crate::solvers::{
    hfs_sample_set, msa_sample_set, reference_sample_run, sa_sample_set, SAParams, SampleSet, SolverError, SolverId,
    SweepCost,
};
use crate::topology::WorkingGraph;

/// Version tag of results files.
pub const RESULTS_SCHEMA: u32 = 1;

/// Family name of the best software entry across all software families.
pub const SOFTWARE: &str = "software";

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header { schema: u32, instance: String, spins: usize },
    /// Stats of one parameterization, one entry per quantile.
    Solver { family: String, solver: String, samples: usize, mean_work: f64, stats: Vec<SolverStats> },
    Skip { family: String, solver: String, reason: String },
    Portfolio { family: String, metric: Metric, q: f64, best: Option<SolverStats> },
    Done,
}

/// Targets file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFile {
    pub reference: SolverId,
    pub samples: usize,
    pub targets: Vec<TargetSpec>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub instances: usize,
    /// Instances skipped because their results were complete.
    pub already_done: usize,
    pub solver_records: usize,
    pub skips: usize,
}

fn load_instance(layout: &Layout, key: &InstanceKey) -> Result<GeneratedInstance, HarnessError> {
    let path = layout.instance(key);
    let text = read_file(&path)?;
    GeneratedInstance::from_text(&text).map_err(|e| HarnessError::format(&path, e))
}

fn graph_for(graphs: &[(usize, Arc<WorkingGraph>)], size: usize) -> &Arc<WorkingGraph> {
    &graphs.iter().find(|(s, _)| *s == size).expect("sizes come from the config").1
}

/// Write the working graph and every instance. Files are a pure function of
/// the config, so reruns reproduce them byte for byte.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<usize, HarnessError> {
    cfg.validate()?;
    let layout = cfg.layout();
    write_file(&layout.graph(), cfg.working_graph()?.to_text().as_bytes())?;
    let graphs = cfg.size_graphs()?;
    let keys = cfg.instance_keys();
    par::try_map(&keys, |key| {
        let spec = GeneratorSpec { class: key.class, seed: key.seed(cfg.seed) };
        let inst = generate(graph_for(&graphs, key.size), &spec)
            .map_err(|e| HarnessError::Instance(key.label(), e.to_string()))?;
        write_file(&layout.instance(key), inst.to_text().as_bytes())
    })?;
    Ok(keys.len())
}

fn compute_targets(cfg: &ExperimentConfig, set: &SampleSet) -> Result<TargetFile, HarnessError> {
    let targets = cfg.quantile_list().into_iter().map(|q| target_energy(set, q)).collect::<Result<_, _>>()?;
    Ok(TargetFile { reference: set.solver, samples: set.len(), targets })
}

fn write_targets(layout: &Layout, key: &InstanceKey, t: &TargetFile) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(t).expect("serializable") + "\n";
    write_file(&layout.targets(key), text.as_bytes())
}

fn read_samples(path: &Path) -> Result<SampleSet, HarnessError> {
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::Missing(path.to_path_buf()),
        _ => HarnessError::io(path, e),
    })?;
    SampleSet::read_from(std::io::BufReader::new(f)).map_err(|e| HarnessError::format(path, e))
}

/// Reference runs plus targets for every instance. A reference file that
/// already holds the configured run is reused.
pub fn cmd_reference(cfg: &ExperimentConfig) -> Result<usize, HarnessError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let rc = cfg.reference_config();
    let keys = cfg.instance_keys();
    par::try_map(&keys, |key| {
        let path = layout.reference(key);
        let existing = read_samples(&path).ok().filter(|s| s.solver == rc.id() && s.len() == rc.total_samples());
        let set = match existing {
            Some(s) => s,
            None => {
                let inst = load_instance(&layout, key)?;
                let set = reference_sample_run(&inst.problem, &rc, derive_seed(key.seed(cfg.seed), "reference"))?;
                write_file(&path, &set.to_bytes())?;
                set
            }
        };
        write_targets(&layout, key, &compute_targets(cfg, &set)?)
    })?;
    Ok(keys.len())
}

/// Recompute targets from persisted reference samples.
pub fn cmd_targets(cfg: &ExperimentConfig) -> Result<usize, HarnessError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let keys = cfg.instance_keys();
    par::try_map(&keys, |key| {
        let set = read_samples(&layout.reference(key))?;
        write_targets(&layout, key, &compute_targets(cfg, &set)?)
    })?;
    Ok(keys.len())
}

fn read_targets(layout: &Layout, key: &InstanceKey) -> Result<TargetFile, HarnessError> {
    let path = layout.targets(key);
    serde_json::from_str(&read_file(&path)?).map_err(|e| HarnessError::format(&path, e))
}

/// Parsed results of one instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceResults {
    pub records: Vec<Record>,
    pub done: bool,
}

/// Read a results file, ignoring a torn final line. Returns the records and
/// the byte length of the intact prefix.
fn read_results_prefix(path: &Path) -> Result<Option<(InstanceResults, u64)>, HarnessError> {
    let text = match read_file(path) {
        Ok(t) => t,
        Err(HarnessError::Missing(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut out = InstanceResults::default();
    let mut good = 0u64;
    for line in text.split_inclusive('\n') {
        if !line.ends_with('\n') {
            break;
        }
        let Ok(rec) = serde_json::from_str::<Record>(line.trim_end()) else { break };
        good += line.len() as u64;
        if rec == Record::Done {
            out.done = true;
        }
        out.records.push(rec);
    }
    Ok(Some((out, good)))
}

pub fn read_results(path: &Path) -> Result<InstanceResults, HarnessError> {
    match read_results_prefix(path)? {
        Some((r, _)) => Ok(r),
        None => Err(HarnessError::Missing(path.to_path_buf())),
    }
}

struct Appender {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl Appender {
    fn push(&mut self, rec: &Record) -> Result<(), HarnessError> {
        let mut line = serde_json::to_vec(rec).expect("serializable");
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// Open for appending after the intact prefix, keeping only header, solver
/// and skip records of a matching header. Returns already finished labels.
fn open_results(path: &Path, key: &InstanceKey, spins: usize) -> Result<(Appender, Vec<Record>, bool), HarnessError> {
    let header = Record::Header { schema: RESULTS_SCHEMA, instance: key.label(), spins };
    let mut kept = Vec::new();
    let mut keep_len = 0u64;
    if let Some((prev, _)) = read_results_prefix(path)? {
        if prev.done && prev.records.first() == Some(&header) {
            let file = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| HarnessError::io(path, e))?;
            return Ok((Appender { file, path: path.to_path_buf() }, prev.records, true));
        }
        if prev.records.first() == Some(&header) {
            let text = read_file(path)?;
            let mut offset = 0u64;
            for (line, rec) in text.split_inclusive('\n').zip(prev.records) {
                if !matches!(rec, Record::Header { .. } | Record::Solver { .. } | Record::Skip { .. }) {
                    break;
                }
                offset += line.len() as u64;
                kept.push(rec);
            }
            keep_len = offset;
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = std::fs::OpenOptions::new()
        .create(true)
        .truncate(false)
        .read(true)
        .write(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    file.set_len(keep_len).map_err(|e| HarnessError::io(path, e))?;
    let mut file = file;
    std::io::Seek::seek(&mut file, std::io::SeekFrom::End(0)).map_err(|e| HarnessError::io(path, e))?;
    let mut app = Appender { file, path: path.to_path_buf() };
    if kept.is_empty() {
        app.push(&header)?;
        kept.push(header);
    }
    Ok((app, kept, false))
}

fn solver_seed(instance_seed: u64, id: &SolverId) -> u64 {
    derive_seed(instance_seed, &format!("solver/{id}"))
}

fn sample_software(
    p: &IsingProblem,
    id: &SolverId,
    count: usize,
    seed: u64,
    cell: &CellTiming,
    patience: usize,
) -> Result<SampleSet, SolverError> {
    match *id {
        SolverId::Sa { sweeps, schedule } => sa_sample_set(p, &SAParams::new(sweeps, schedule), count, seed, &cell.sa),
        SolverId::Msa { sweeps } => {
            let cost = cell.msa.unwrap_or(SweepCost::UNCALIBRATED);
            msa_sample_set(p, &SAParams::new(sweeps, crate::solvers::ScheduleKind::Unscaled), count, seed, &cost)
        }
        SolverId::Hfs => hfs_sample_set(p, patience, count, seed, &cell.hfs),
        SolverId::Reference { .. } => Err(SolverError::BadParams("reference runs are not part of the grid".into())),
    }
}

fn scored(set: &SampleSet, targets: &[TargetSpec]) -> Result<Vec<SolverStats>, HarnessError> {
    targets.iter().map(|t| Ok(ttt(&stt(set, t)?, &set.timing))).collect()
}

/// Sample one grid entry, doubling the sample count while any target is
/// censored when adaptive extension is on.
#[allow(clippy::too_many_arguments)]
fn sample_record(
    cfg: &ExperimentConfig,
    layout: &Layout,
    key: &InstanceKey,
    cell: &CellTiming,
    p: &IsingProblem,
    targets: &[TargetSpec],
    id: &SolverId,
    seed: u64,
) -> Result<Record, HarnessError> {
    let label = id.to_string();
    let mut n = cfg.solvers.samples;
    loop {
        let set = match sample_software(p, id, n, seed, cell, cfg.solvers.hfs_patience) {
            Ok(set) => set,
            Err(e @ SolverError::NotRangeOne) => {
                return Ok(Record::Skip { family: id.family().into(), solver: label, reason: e.to_string() })
            }
            Err(e) => return Err(HarnessError::Instance(key.label(), e.to_string())),
        };
        let stats = scored(&set, targets)?;
        if cfg.solvers.adaptive_extension && stats.iter().any(|s| s.censored()) && n < cfg.solvers.adaptive_max_samples {
            n = (2 * n).min(cfg.solvers.adaptive_max_samples);
            continue;
        }
        write_file(&layout.samples(key, &label), &set.to_bytes())?;
        return Ok(Record::Solver {
            family: id.family().into(),
            solver: label,
            samples: set.len(),
            mean_work: set.mean_work(),
            stats,
        });
    }
}

fn run_instance(
    cfg: &ExperimentConfig,
    layout: &Layout,
    key: &InstanceKey,
    cell: &CellTiming,
) -> Result<(bool, usize, usize), HarnessError> {
    let inst = load_instance(layout, key)?;
    let p = &inst.problem;
    let targets = read_targets(layout, key)?.targets;
    let (mut out, mut records, done) = open_results(&layout.results(key), key, p.num_spins())?;
    let count = |recs: &[Record]| {
        let solvers = recs.iter().filter(|r| matches!(r, Record::Solver { .. })).count();
        let skips = recs.iter().filter(|r| matches!(r, Record::Skip { .. })).count();
        (solvers, skips)
    };
    if done {
        let (s, k) = count(&records);
        return Ok((true, s, k));
    }
    let finished = |recs: &[Record], label: &str| {
        recs.iter().any(|r| matches!(r, Record::Solver { solver, .. } | Record::Skip { solver, .. } if solver == label))
    };
    let iseed = key.seed(cfg.seed);

    // the reference scored against its own targets
    let rid = cfg.reference_config().id();
    if !finished(&records, &rid.to_string()) {
        let set = read_samples(&layout.reference(key))?;
        let rec = Record::Solver {
            family: rid.family().into(),
            solver: rid.to_string(),
            samples: set.len(),
            mean_work: set.mean_work(),
            stats: scored(&set, &targets)?,
        };
        out.push(&rec)?;
        records.push(rec);
    }

    let ext = if cfg.solvers.external {
        vec![ExternalTiming::an_ss_ge_fi(), ExternalTiming::an_ms_r1_nf()]
    } else {
        vec![]
    };
    for id in cfg.solvers.solver_ids() {
        let label = id.to_string();
        let prior = records.iter().find(|r| {
            matches!(r, Record::Solver { solver, .. } | Record::Skip { solver, .. } if *solver == label)
        });
        let rec = match prior {
            Some(r) => r.clone(),
            None => {
                let rec = sample_record(cfg, layout, key, cell, p, &targets, &id, solver_seed(iseed, &id))?;
                out.push(&rec)?;
                records.push(rec.clone());
                rec
            }
        };
        if let (SolverId::Sa { .. }, Record::Solver { stats, .. }) = (id, &rec) {
            for x in &ext {
                let elabel = format!("{}@{label}", x.name);
                if finished(&records, &elabel) {
                    continue;
                }
                let family = format!("ext:{}", x.name);
                let erec = if x.batch.is_some() && (key.class.range() != 1 || p.h().iter().any(|&h| h != 0)) {
                    Record::Skip { family, solver: elabel, reason: "batched code needs a range-1 instance".into() }
                } else {
                    let est = stats
                        .iter()
                        .map(|s| estimate_external_ttt(s, x, p.num_spins()))
                        .collect::<Result<Vec<_>, _>>()?;
                    Record::Solver { family, solver: elabel, samples: stats[0].trials as usize, mean_work: 0.0, stats: est }
                };
                out.push(&erec)?;
                records.push(erec);
            }
        }
    }

    for rec in portfolios(&records, &targets) {
        out.push(&rec)?;
    }
    out.push(&Record::Done)?;
    let (s, k) = count(&records);
    Ok((false, s, k))
}

/// Best entry per family, metric and quantile, plus the best software entry
/// overall.
fn portfolios(records: &[Record], targets: &[TargetSpec]) -> Vec<Record> {
    let mut families: Vec<&str> = records
        .iter()
        .filter_map(|r| match r {
            Record::Solver { family, .. } | Record::Skip { family, .. } => Some(family.as_str()),
            _ => None,
        })
        .collect();
    families.sort_unstable();
    families.dedup();
    families.push(SOFTWARE);
    let mut out = Vec::new();
    for family in families {
        for metric in Metric::ALL {
            for (qi, t) in targets.iter().enumerate() {
                let entries: Vec<SolverStats> = records
                    .iter()
                    .filter_map(|r| match r {
                        Record::Solver { family: f, stats, .. }
                            if f == family || (family == SOFTWARE && f != "ref") =>
                        {
                            Some(stats[qi].clone())
                        }
                        _ => None,
                    })
                    .collect();
                out.push(Record::Portfolio {
                    family: family.into(),
                    metric,
                    q: t.q,
                    best: portfolio_best(&entries, metric).cloned(),
                });
            }
        }
    }
    out
}

/// Score every solver of the grid on every instance. Missing timing cells are
/// calibrated first, sequentially; instances then run in parallel.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let table: TimingTable = super::timing::cmd_time(cfg)?;
    let keys = cfg.instance_keys();
    let results = par::try_map(&keys, |key| {
        let cell = table
            .get(&key.class, key.size)
            .ok_or_else(|| HarnessError::Missing(layout.timing()))?;
        run_instance(cfg, &layout, key, cell)
    })?;
    let mut summary = RunSummary { instances: keys.len(), ..Default::default() };
    for (done, s, k) in results {
        summary.already_done += done as usize;
        summary.solver_records += s;
        summary.skips += k;
    }
    Ok(summary)
}

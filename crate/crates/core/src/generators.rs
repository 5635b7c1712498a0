//! Seeded instance generators for the RAN, AC and FL problem classes.
//!
//! * `RANr`: `h = 0`, each `J` uniform over the `2r` nonzero integers in `[-r, r]`.
//! * `ACk` / `ACk-odd`: in-cell `J` uniform over `{-1, +1}`, inter-cell `J`
//!   uniform over `{-k, +k}`; the odd variant adds a `+-1` field to every
//!   spin whose incident couplings sum to an even number.
//! * `FLr:a=<alpha>`: `round(alpha * n)` frustrated loops summed into `J`,
//!   each with one `+1` and `L - 1` `-1` couplings, rejecting loops that
//!   would push any `|J|` above `r`. The all-up state is a planted ground
//!   state with energy `sum(2 - L)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ising::{IsingError, IsingProblem, SpinConfig};
use crate::rng::{rng_from_seed, Rng};
use crate::topology::{ChimeraCoord, WorkingGraph};

/// Loops shorter than this are rejected by default.
pub const DEFAULT_MIN_LOOP_LEN: usize = 8;
/// Attempts per loop constraint before giving up.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;
/// Constraint-to-qubit ratio of the FL class.
pub const DEFAULT_FL_ALPHA: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("range must be at least 1")]
    BadRange,
    #[error("inter-tile multiplier {0} must be odd and at least 1")]
    BadMultiplier(u32),
    #[error("constraint ratio {0} must lie in (0, 1]")]
    BadAlpha(f64),
    #[error("no admissible loop after {attempts} attempts for constraint {constraint}")]
    LoopGeneration { constraint: usize, attempts: usize },
    #[error("cannot parse generator spec `{0}`")]
    Spec(String),
    #[error(transparent)]
    Ising(#[from] IsingError),
}

/// A problem class with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProblemClass {
    Ran { range: u32 },
    Ac { k: u32, odd: bool },
    Fl { range: u32, alpha: f64 },
}

impl ProblemClass {
    /// Declared weight range of instances in the class.
    pub fn range(&self) -> u32 {
        match *self {
            ProblemClass::Ran { range } | ProblemClass::Fl { range, .. } => range,
            ProblemClass::Ac { k, odd } => k.max(u32::from(odd)).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        match *self {
            ProblemClass::Ran { range: 0 } => Err(GeneratorError::BadRange),
            ProblemClass::Ac { k, .. } if k == 0 || k % 2 == 0 => Err(GeneratorError::BadMultiplier(k)),
            ProblemClass::Fl { range: 0, .. } => Err(GeneratorError::BadRange),
            ProblemClass::Fl { alpha, .. } if !(alpha > 0.0 && alpha <= 1.0) => Err(GeneratorError::BadAlpha(alpha)),
            _ => Ok(()),
        }
    }

    /// Directory-safe form of the label.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "_").replace('=', "")
    }
}

impl fmt::Display for ProblemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ProblemClass::Ran { range } => write!(f, "RAN{range}"),
            ProblemClass::Ac { k, odd: false } => write!(f, "AC{k}"),
            ProblemClass::Ac { k, odd: true } => write!(f, "AC{k}-odd"),
            ProblemClass::Fl { range, alpha } => write!(f, "FL{range}:a={alpha}"),
        }
    }
}

impl FromStr for ProblemClass {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeneratorError::Spec(s.to_string());
        let num = |t: &str| t.parse::<u32>().map_err(|_| bad());
        let class = if let Some(rest) = s.strip_prefix("RAN") {
            ProblemClass::Ran { range: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("AC") {
            match rest.strip_suffix("-odd") {
                Some(k) => ProblemClass::Ac { k: num(k)?, odd: true },
                None => ProblemClass::Ac { k: num(rest)?, odd: false },
            }
        } else if let Some(rest) = s.strip_prefix("FL") {
            let (r, alpha) = match rest.split_once(':') {
                Some((r, opt)) => {
                    let a = opt.strip_prefix("a=").ok_or_else(bad)?;
                    (r, a.parse::<f64>().map_err(|_| bad())?)
                }
                None => (rest, DEFAULT_FL_ALPHA),
            };
            ProblemClass::Fl { range: num(r)?, alpha }
        } else {
            return Err(bad());
        };
        class.validate()?;
        Ok(class)
    }
}

impl TryFrom<String> for ProblemClass {
    type Error = GeneratorError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ProblemClass> for String {
    fn from(c: ProblemClass) -> String {
        c.to_string()
    }
}

/// A class plus the seed of one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub class: ProblemClass,
    pub seed: u64,
}

/// Knobs of the frustrated-loop construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopOptions {
    pub min_len: usize,
    pub max_attempts: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions { min_len: DEFAULT_MIN_LOOP_LEN, max_attempts: DEFAULT_MAX_ATTEMPTS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedInstance {
    pub problem: IsingProblem,
    pub planted_config: Option<SpinConfig>,
    pub planted_energy: Option<i64>,
    /// Lengths of the planted loops (FL only).
    pub loop_lengths: Vec<usize>,
}

impl GeneratedInstance {
    fn plain(problem: IsingProblem) -> Self {
        GeneratedInstance { problem, planted_config: None, planted_energy: None, loop_lengths: Vec::new() }
    }

    /// `.ising` text plus an optional trailing `planted <energy>` line.
    pub fn to_text(&self) -> String {
        let mut out = self.problem.to_text();
        if let Some(e) = self.planted_energy {
            out.push_str(&format!("planted {e}\n"));
        }
        out
    }

    /// Parse [`Self::to_text`] output. The planted configuration is not part
    /// of the file and comes back as `None`.
    pub fn from_text(text: &str) -> Result<Self, GeneratorError> {
        let mut planted = None;
        let mut body = String::with_capacity(text.len());
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("planted ") {
                planted = Some(rest.trim().parse::<i64>().map_err(|_| GeneratorError::Spec(line.to_string()))?);
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut inst = GeneratedInstance::plain(IsingProblem::from_text(&body, None)?);
        inst.planted_energy = planted;
        Ok(inst)
    }
}

/// Generate one instance of `spec.class` on `graph`.
pub fn generate(graph: &Arc<WorkingGraph>, spec: &GeneratorSpec) -> Result<GeneratedInstance, GeneratorError> {
    spec.class.validate()?;
    match spec.class {
        ProblemClass::Ran { range } => gen_ran(graph, range, spec.seed),
        ProblemClass::Ac { k, odd } => gen_ac_odd(graph, k, odd, spec.seed),
        ProblemClass::Fl { range, alpha } => gen_fl(graph, range, alpha, spec.seed, LoopOptions::default()),
    }
}

pub fn gen_ran(graph: &Arc<WorkingGraph>, range: u32, seed: u64) -> Result<GeneratedInstance, GeneratorError> {
    if range == 0 {
        return Err(GeneratorError::BadRange);
    }
    let mut rng = rng_from_seed(seed);
    let r = range as i32;
    let j = (0..graph.num_edges())
        .map(|_| {
            // 2r values: 0..r map to -r..-1, r..2r map to 1..r
            let x = rng.random_range(0..2 * r);
            if x < r { x - r } else { x - r + 1 }
        })
        .collect();
    let problem = IsingProblem::new(graph.clone(), range, vec![0; graph.num_active()], j)?;
    Ok(GeneratedInstance::plain(problem))
}

pub fn gen_ac_odd(graph: &Arc<WorkingGraph>, k: u32, odd_fields: bool, seed: u64) -> Result<GeneratedInstance, GeneratorError> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(GeneratorError::BadMultiplier(k));
    }
    let mut rng = rng_from_seed(seed);
    let size = graph.size();
    let j: Vec<i32> = graph
        .edges()
        .iter()
        .map(|&(u, v)| {
            let (a, b) = (ChimeraCoord::from_id(u, size), ChimeraCoord::from_id(v, size));
            let mag = if (a.row, a.col) == (b.row, b.col) { 1 } else { k as i32 };
            if rng.random::<bool>() { mag } else { -mag }
        })
        .collect();
    let mut h = vec![0i32; graph.num_active()];
    if odd_fields {
        let mut sums = vec![0i64; graph.num_active()];
        for (&(u, v), &w) in graph.edges().iter().zip(&j) {
            sums[graph.dense_index(u).unwrap()] += w as i64;
            sums[graph.dense_index(v).unwrap()] += w as i64;
        }
        for (hi, s) in h.iter_mut().zip(&sums) {
            if s % 2 == 0 {
                *hi = if rng.random::<bool>() { 1 } else { -1 };
            }
        }
    }
    let problem = IsingProblem::new(graph.clone(), k, h, j)?;
    Ok(GeneratedInstance::plain(problem))
}

/// Number of loop constraints for `n` active qubits at ratio `alpha`.
pub fn loop_count(n: usize, alpha: f64) -> usize {
    (alpha * n as f64).round() as usize
}

/// Non-backtracking random walk from a random active vertex until the first
/// revisit; returns the closed cycle as a vertex sequence.
fn random_loop(graph: &WorkingGraph, rng: &mut Rng) -> Option<Vec<u32>> {
    let start = *graph.active_ids().choose(rng)?;
    let mut path = vec![start];
    let mut position = std::collections::HashMap::from([(start, 0usize)]);
    let mut prev: Option<u32> = None;
    let mut cur = start;
    loop {
        let nbs: Vec<u32> = graph
            .neighbors(cur)
            .ok()?
            .iter()
            .copied()
            .filter(|&w| Some(w) != prev)
            .collect();
        let next = *nbs.choose(rng)?;
        if let Some(&at) = position.get(&next) {
            return Some(path.split_off(at));
        }
        position.insert(next, path.len());
        path.push(next);
        prev = Some(cur);
        cur = next;
    }
}

pub fn gen_fl(
    graph: &Arc<WorkingGraph>,
    range: u32,
    alpha: f64,
    seed: u64,
    opts: LoopOptions,
) -> Result<GeneratedInstance, GeneratorError> {
    if range == 0 {
        return Err(GeneratorError::BadRange);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(GeneratorError::BadAlpha(alpha));
    }
    let mut rng = rng_from_seed(seed);
    let m = loop_count(graph.num_active(), alpha);
    let mut j = vec![0i32; graph.num_edges()];
    let mut lengths = Vec::with_capacity(m);
    let r = range as i32;
    for constraint in 0..m {
        let mut placed = false;
        for _ in 0..opts.max_attempts {
            let Some(cycle) = random_loop(graph, &mut rng) else { continue };
            if cycle.len() < opts.min_len.max(3) {
                continue;
            }
            let len = cycle.len();
            let edges: Vec<usize> = (0..len)
                .map(|i| graph.edge_index(cycle[i], cycle[(i + 1) % len]).unwrap())
                .collect();
            let frustrated = rng.random_range(0..len);
            let fits = edges.iter().enumerate().all(|(i, &e)| {
                let d = if i == frustrated { 1 } else { -1 };
                (j[e] + d).abs() <= r
            });
            if !fits {
                continue;
            }
            for (i, &e) in edges.iter().enumerate() {
                j[e] += if i == frustrated { 1 } else { -1 };
            }
            lengths.push(len);
            placed = true;
            break;
        }
        if !placed {
            return Err(GeneratorError::LoopGeneration { constraint, attempts: opts.max_attempts });
        }
    }
    let problem = IsingProblem::new(graph.clone(), range, vec![0; graph.num_active()], j)?;
    let planted_energy = lengths.iter().map(|&l| 2 - l as i64).sum();
    Ok(GeneratedInstance {
        planted_config: Some(SpinConfig::all_up(problem.num_spins())),
        problem,
        planted_energy: Some(planted_energy),
        loop_lengths: lengths,
    })
}

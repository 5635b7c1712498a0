//! Ising instances on working graphs: energy, gauge transforms, greedy descent
//! and the `.ising` text format.
//!
//! All weights are integers and energies are exact `i64`. Per-spin vectors are
//! indexed densely over the active vertices in ascending id order (see
//! [`WorkingGraph::dense_index`]).

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::topology::{TopologyError, WorkingGraph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsingError {
    #[error("expected {expected} spins, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("spin value {0} is not +1 or -1")]
    NotASpin(i8),
    #[error("weight {value} exceeds declared range {range}")]
    OutOfRange { value: i32, range: u32 },
    #[error("range must be at least 1")]
    ZeroRange,
    #[error("instance line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// A vector of +1/-1 values, one per active vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self, IsingError> {
        if let Some(&bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(IsingError::NotASpin(bad));
        }
        Ok(SpinConfig(spins))
    }

    pub fn all_up(n: usize) -> Self {
        SpinConfig(vec![1; n])
    }

    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinConfig((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [i8] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }

    /// Elementwise product `g . s`.
    pub fn gauged(&self, g: &GaugeTransform) -> Result<SpinConfig, IsingError> {
        check_len(g.0.len(), self.0.len())?;
        Ok(SpinConfig(self.0.iter().zip(&g.0).map(|(s, g)| s * g).collect()))
    }

    /// Every spin negated.
    pub fn flipped(&self) -> SpinConfig {
        SpinConfig(self.0.iter().map(|s| -s).collect())
    }
}

/// A sign vector `g` mapping `(h, J)` to `(g_i h_i, g_i g_j J_ij)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaugeTransform(Vec<i8>);

impl GaugeTransform {
    pub fn new(signs: Vec<i8>) -> Result<Self, IsingError> {
        Ok(GaugeTransform(SpinConfig::new(signs)?.0))
    }

    pub fn identity(n: usize) -> Self {
        GaugeTransform(vec![1; n])
    }

    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        GaugeTransform(SpinConfig::random(n, rng).0)
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), IsingError> {
    if expected == got {
        Ok(())
    } else {
        Err(IsingError::ShapeMismatch { expected, got })
    }
}

/// Integer fields `h` and couplings `J` on a working graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsingProblem {
    graph: Arc<WorkingGraph>,
    range: u32,
    h: Vec<i32>,
    j: Vec<i32>,
    // dense CSR: neighbor dense index and coupling
    offsets: Vec<u32>,
    couplings: Vec<(u32, i32)>,
}

impl IsingProblem {
    /// `h` is dense over active vertices, `j` follows `graph.edges()`.
    pub fn new(graph: Arc<WorkingGraph>, range: u32, h: Vec<i32>, j: Vec<i32>) -> Result<Self, IsingError> {
        if range == 0 {
            return Err(IsingError::ZeroRange);
        }
        check_len(graph.num_active(), h.len())?;
        check_len(graph.num_edges(), j.len())?;
        if let Some(&value) = h.iter().chain(&j).find(|w| w.unsigned_abs() > range) {
            return Err(IsingError::OutOfRange { value, range });
        }
        let n = graph.num_active();
        let mut degree = vec![0u32; n];
        let dense_edges: Vec<(usize, usize)> = graph
            .edges()
            .iter()
            .map(|&(u, v)| (graph.dense_index(u).unwrap(), graph.dense_index(v).unwrap()))
            .collect();
        for &(a, b) in &dense_edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0u32);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill: Vec<u32> = offsets.clone();
        let mut couplings = vec![(0u32, 0i32); *offsets.last().unwrap() as usize];
        for (&(a, b), &w) in dense_edges.iter().zip(&j) {
            couplings[fill[a] as usize] = (b as u32, w);
            fill[a] += 1;
            couplings[fill[b] as usize] = (a as u32, w);
            fill[b] += 1;
        }
        Ok(IsingProblem { graph, range, h, j, offsets, couplings })
    }

    pub fn graph(&self) -> &Arc<WorkingGraph> {
        &self.graph
    }

    /// Declared range `r` of the instance class.
    pub fn range(&self) -> u32 {
        self.range
    }

    /// Largest `|h_i|` or `|J_ij|` actually present (at least 1).
    pub fn max_abs_weight(&self) -> u32 {
        self.h
            .iter()
            .chain(&self.j)
            .map(|w| w.unsigned_abs())
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn num_spins(&self) -> usize {
        self.h.len()
    }

    pub fn h(&self) -> &[i32] {
        &self.h
    }

    pub fn j(&self) -> &[i32] {
        &self.j
    }

    /// `(neighbor dense index, J)` pairs of spin `i`.
    #[inline]
    pub fn couplings(&self, i: usize) -> &[(u32, i32)] {
        &self.couplings[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    /// `h_i + sum_j J_ij s_j`; flipping spin `i` changes the energy by
    /// `-2 s_i * local_field`.
    #[inline]
    pub fn local_field(&self, i: usize, spins: &[i8]) -> i64 {
        let mut f = self.h[i] as i64;
        for &(k, w) in self.couplings(i) {
            f += w as i64 * spins[k as usize] as i64;
        }
        f
    }

    pub fn check_config(&self, s: &SpinConfig) -> Result<(), IsingError> {
        check_len(self.num_spins(), s.len())
    }

    pub fn energy(&self, s: &SpinConfig) -> Result<i64, IsingError> {
        self.check_config(s)?;
        Ok(self.energy_unchecked(s.as_slice()))
    }

    pub(crate) fn energy_unchecked(&self, s: &[i8]) -> i64 {
        let field: i64 = self.h.iter().zip(s).map(|(&h, &x)| h as i64 * x as i64).sum();
        let mut pair = 0i64;
        for i in 0..s.len() {
            for &(k, w) in self.couplings(i) {
                if (k as usize) > i {
                    pair += w as i64 * s[i] as i64 * s[k as usize] as i64;
                }
            }
        }
        field + pair
    }

    /// The gauge-transformed problem `h'_i = g_i h_i`, `J'_ij = g_i g_j J_ij`.
    pub fn apply_gauge(&self, g: &GaugeTransform) -> Result<IsingProblem, IsingError> {
        check_len(self.num_spins(), g.0.len())?;
        let g = &g.0;
        let h = self.h.iter().zip(g).map(|(&h, &gi)| h * gi as i32).collect();
        let j = self
            .graph
            .edges()
            .iter()
            .zip(&self.j)
            .map(|(&(u, v), &w)| {
                let a = self.graph.dense_index(u).unwrap();
                let b = self.graph.dense_index(v).unwrap();
                w * (g[a] * g[b]) as i32
            })
            .collect();
        IsingProblem::new(self.graph.clone(), self.range, h, j)
    }

    /// First-improvement descent: sweep spins in ascending id order, flip any
    /// spin whose flip strictly lowers the energy, and repeat full passes until
    /// a pass makes no flip.
    pub fn greedy_descent(&self, s: &SpinConfig) -> Result<SpinConfig, IsingError> {
        self.check_config(s)?;
        let mut out = s.clone();
        self.greedy_descent_in_place(out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn greedy_descent_in_place(&self, spins: &mut [i8]) {
        loop {
            let mut flipped = false;
            for i in 0..spins.len() {
                // delta = -2 s_i f_i < 0  <=>  s_i f_i > 0
                if spins[i] as i64 * self.local_field(i, spins) > 0 {
                    spins[i] = -spins[i];
                    flipped = true;
                }
            }
            if !flipped {
                break;
            }
        }
    }

    /// True if no single spin flip strictly lowers the energy.
    pub fn is_one_flip_minimal(&self, s: &SpinConfig) -> bool {
        let spins = s.as_slice();
        (0..spins.len()).all(|i| spins[i] as i64 * self.local_field(i, spins) <= 0)
    }

    /// Serialize as a self-contained `.ising` document with the graph inline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "ising inline {}", self.range).unwrap();
        out.push_str(&self.graph.to_text());
        for (&id, &h) in self.graph.active_ids().iter().zip(&self.h) {
            if h != 0 {
                writeln!(out, "h {id} {h}").unwrap();
            }
        }
        for (&(u, v), &w) in self.graph.edges().iter().zip(&self.j) {
            writeln!(out, "J {u} {v} {w}").unwrap();
        }
        out
    }

    /// Parse a `.ising` document. The header either says `inline`, in which
    /// case the graph lines follow, or names a graph file resolved against
    /// `base_dir`.
    pub fn from_text(text: &str, base_dir: Option<&Path>) -> Result<Self, IsingError> {
        let err = |line: usize, msg: &str| IsingError::Parse { line: line + 1, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(0, "empty instance"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 || head[0] != "ising" {
            return Err(err(hl, "expected `ising <graph> <range>`"));
        }
        let range: u32 = head[2].parse().map_err(|_| err(hl, "bad range"))?;

        let mut graph_text = String::new();
        let mut h_lines = Vec::new();
        let mut j_lines = Vec::new();
        for (ln, line) in lines {
            match line.split_whitespace().next() {
                Some("chimera" | "x" | "e") => {
                    graph_text.push_str(line);
                    graph_text.push('\n');
                }
                Some("h") => h_lines.push((ln, line)),
                Some("J") => j_lines.push((ln, line)),
                _ => return Err(err(ln, "unrecognized line")),
            }
        }
        let graph = if head[1] == "inline" {
            WorkingGraph::from_text(&graph_text)?
        } else {
            if !graph_text.is_empty() {
                return Err(err(hl, "graph lines present but header names a graph file"));
            }
            let path = base_dir.map_or_else(|| Path::new(head[1]).to_path_buf(), |d| d.join(head[1]));
            let body = std::fs::read_to_string(&path)
                .map_err(|e| err(hl, &format!("cannot read {}: {e}", path.display())))?;
            WorkingGraph::from_text(&body)?
        };

        let mut h = vec![0i32; graph.num_active()];
        for (ln, line) in h_lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let (Some(id), Some(val), 3) = (
                f.get(1).and_then(|x| x.parse::<u32>().ok()),
                f.get(2).and_then(|x| x.parse::<i32>().ok()),
                f.len(),
            ) else {
                return Err(err(ln, "expected `h <id> <value>`"));
            };
            let d = graph.dense_index(id).ok_or_else(|| err(ln, "field on inactive vertex"))?;
            h[d] = val;
        }
        let mut j = vec![0i32; graph.num_edges()];
        for (ln, line) in j_lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let parsed = (
                f.get(1).and_then(|x| x.parse::<u32>().ok()),
                f.get(2).and_then(|x| x.parse::<u32>().ok()),
                f.get(3).and_then(|x| x.parse::<i32>().ok()),
            );
            let (Some(u), Some(v), Some(val)) = parsed else {
                return Err(err(ln, "expected `J <u> <v> <value>`"));
            };
            if f.len() != 4 {
                return Err(err(ln, "expected `J <u> <v> <value>`"));
            }
            let e = graph.edge_index(u, v).ok_or_else(|| err(ln, "coupling on a missing edge"))?;
            j[e] = val;
        }
        IsingProblem::new(Arc::new(graph), range, h, j)
    }
}

/// Energy of `s`; shorthand for [`IsingProblem::energy`].
pub fn energy(p: &IsingProblem, s: &SpinConfig) -> Result<i64, IsingError> {
    p.energy(s)
}

/// Gauge-transformed problem; shorthand for [`IsingProblem::apply_gauge`].
pub fn apply_gauge(p: &IsingProblem, g: &GaugeTransform) -> Result<IsingProblem, IsingError> {
    p.apply_gauge(g)
}

/// Greedy 1-flip descent; shorthand for [`IsingProblem::greedy_descent`].
pub fn greedy_descent(p: &IsingProblem, s: &SpinConfig) -> Result<SpinConfig, IsingError> {
    p.greedy_descent(s)
}

/// A uniformly random problem with weights in `[-range, range]` (zeros
/// allowed). Used by tests and benches that need arbitrary instances.
pub fn random_problem<R: rand::Rng + ?Sized>(graph: Arc<WorkingGraph>, range: u32, rng: &mut R) -> IsingProblem {
    let r = range as i32;
    let h = (0..graph.num_active()).map(|_| rng.random_range(-r..=r)).collect();
    let j = (0..graph.num_edges()).map(|_| rng.random_range(-r..=r)).collect();
    IsingProblem::new(graph, range, h, j).expect("weights are within range")
}

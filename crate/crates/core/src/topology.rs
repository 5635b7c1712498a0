//! Chimera graphs and working graphs with inactive qubits.
//!
//! A Chimera graph `C_s` is an `s x s` grid of `K4,4` cells. Vertex ids are
//! laid out row-major over cells with the vertical (V) half before the
//! horizontal (H) half: `id = 8 * (row * s + col) + 4 * side + unit`.
//! V-side qubits couple to the cell below, H-side qubits to the cell to the
//! right, so every inter-cell coupler is a fixed stride away.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from_seed;

/// Largest supported Chimera size.
pub const MAX_SIZE: usize = 16;

/// Vertices per unit cell.
pub const CELL_VERTICES: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("chimera size {0} outside [1, {MAX_SIZE}]")]
    SizeOutOfRange(usize),
    #[error("vertex {vertex} out of range for C{size}")]
    VertexOutOfRange { vertex: u32, size: usize },
    #[error("vertex {0} is inactive")]
    InactiveVertex(u32),
    #[error("subgraph size {sub} exceeds parent size {parent}")]
    SubgraphTooLarge { sub: usize, parent: usize },
    #[error("({0}, {1}) is not a coupler between active qubits")]
    InvalidEdge(u32, u32),
    #[error("graph file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Half-cell selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    /// Couples north-south to the vertically adjacent cells.
    V,
    /// Couples east-west to the horizontally adjacent cells.
    H,
}

impl Side {
    fn index(self) -> usize {
        match self {
            Side::V => 0,
            Side::H => 1,
        }
    }
}

/// Position of a qubit inside `C_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChimeraCoord {
    pub row: usize,
    pub col: usize,
    pub side: Side,
    pub unit: usize,
}

impl ChimeraCoord {
    pub fn to_id(self, size: usize) -> u32 {
        (CELL_VERTICES * (self.row * size + self.col) + 4 * self.side.index() + self.unit) as u32
    }

    pub fn from_id(id: u32, size: usize) -> Self {
        let id = id as usize;
        let cell = id / CELL_VERTICES;
        let within = id % CELL_VERTICES;
        ChimeraCoord {
            row: cell / size,
            col: cell % size,
            side: if within < 4 { Side::V } else { Side::H },
            unit: within % 4,
        }
    }
}

/// Whether `(u, v)` is a coupler of the defect-free `C_s`.
pub fn is_chimera_coupler(size: usize, u: u32, v: u32) -> bool {
    let n = (CELL_VERTICES * size * size) as u32;
    if u >= n || v >= n || u == v {
        return false;
    }
    let a = ChimeraCoord::from_id(u, size);
    let b = ChimeraCoord::from_id(v, size);
    if a.row == b.row && a.col == b.col {
        return a.side != b.side;
    }
    if a.side != b.side || a.unit != b.unit {
        return false;
    }
    match a.side {
        Side::V => a.col == b.col && a.row.abs_diff(b.row) == 1,
        Side::H => a.row == b.row && a.col.abs_diff(b.col) == 1,
    }
}

/// A Chimera graph with a set of active qubits and the couplers among them.
///
/// Immutable after construction. Besides the canonical edge list it carries
/// a CSR adjacency and the dense index of every active vertex (position in
/// ascending id order), which is how per-spin data is laid out everywhere
/// else in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingGraph {
    size: usize,
    active: Vec<bool>,
    active_ids: Vec<u32>,
    dense: Vec<Option<u32>>,
    edges: Vec<(u32, u32)>,
    adj_offsets: Vec<usize>,
    adj: Vec<u32>,
}

impl WorkingGraph {
    /// Build a working graph from an active mask and an edge list.
    ///
    /// Edges are canonicalized to `u < v`, sorted and deduplicated; each must
    /// be a Chimera coupler between active qubits.
    pub fn from_parts(
        size: usize,
        active: Vec<bool>,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, TopologyError> {
        check_size(size)?;
        let n = CELL_VERTICES * size * size;
        assert_eq!(active.len(), n, "active mask length must be 8s^2");
        let mut canon = Vec::new();
        for (a, b) in edges {
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !is_chimera_coupler(size, u, v) || !active[u as usize] || !active[v as usize] {
                return Err(TopologyError::InvalidEdge(u, v));
            }
            canon.push((u, v));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut active_ids = Vec::new();
        let mut dense = vec![None; n];
        for (id, &on) in active.iter().enumerate() {
            if on {
                dense[id] = Some(active_ids.len() as u32);
                active_ids.push(id as u32);
            }
        }

        let mut degree = vec![0usize; n];
        for &(u, v) in &canon {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut adj_offsets = Vec::with_capacity(n + 1);
        adj_offsets.push(0);
        for d in &degree {
            adj_offsets.push(adj_offsets.last().unwrap() + d);
        }
        let mut fill = adj_offsets.clone();
        let mut adj = vec![0u32; adj_offsets[n]];
        for &(u, v) in &canon {
            adj[fill[u as usize]] = v;
            fill[u as usize] += 1;
            adj[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for v in 0..n {
            adj[adj_offsets[v]..adj_offsets[v + 1]].sort_unstable();
        }

        Ok(WorkingGraph {
            size,
            active,
            active_ids,
            dense,
            edges: canon,
            adj_offsets,
            adj,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of qubit slots, `8s^2`, active or not.
    pub fn num_slots(&self) -> usize {
        self.active.len()
    }

    pub fn num_active(&self) -> usize {
        self.active_ids.len()
    }

    pub fn is_active(&self, v: u32) -> bool {
        self.active.get(v as usize).copied().unwrap_or(false)
    }

    /// Active vertex ids in ascending order.
    pub fn active_ids(&self) -> &[u32] {
        &self.active_ids
    }

    /// Inactive vertex ids in ascending order.
    pub fn inactive_ids(&self) -> Vec<u32> {
        (0..self.num_slots() as u32).filter(|&v| !self.is_active(v)).collect()
    }

    /// Position of `v` among the active vertices.
    pub fn dense_index(&self, v: u32) -> Option<usize> {
        self.dense.get(v as usize).copied().flatten().map(|d| d as usize)
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Index of the edge `(u, v)` in [`Self::edges`].
    pub fn edge_index(&self, u: u32, v: u32) -> Option<usize> {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).ok()
    }

    /// Active neighbors of `v`, ascending by id.
    pub fn neighbors(&self, v: u32) -> Result<&[u32], TopologyError> {
        if v as usize >= self.num_slots() {
            return Err(TopologyError::VertexOutOfRange { vertex: v, size: self.size });
        }
        if !self.is_active(v) {
            return Err(TopologyError::InactiveVertex(v));
        }
        let v = v as usize;
        Ok(&self.adj[self.adj_offsets[v]..self.adj_offsets[v + 1]])
    }

    pub fn degree(&self, v: u32) -> usize {
        let v = v as usize;
        self.adj_offsets[v + 1] - self.adj_offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        self.active_ids.iter().map(|&v| self.degree(v)).max().unwrap_or(0)
    }

    /// Serialize in the line-oriented graph format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "chimera {} {}", self.size, self.num_active()).unwrap();
        for v in self.inactive_ids() {
            writeln!(out, "x {v}").unwrap();
        }
        for &(u, v) in &self.edges {
            writeln!(out, "e {u} {v}").unwrap();
        }
        out
    }

    /// Parse the line-oriented graph format written by [`Self::to_text`].
    pub fn from_text(text: &str) -> Result<Self, TopologyError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(TopologyError::Parse {
            line: 1,
            msg: "empty graph file".into(),
        })?;
        let parse_err = |line: usize, msg: &str| TopologyError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "chimera" {
            return Err(parse_err(hline, "expected `chimera <s> <n_active>`"));
        }
        let size: usize = fields[1].parse().map_err(|_| parse_err(hline, "bad size"))?;
        let n_active: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(hline, "bad active count"))?;
        check_size(size)?;
        let n = CELL_VERTICES * size * size;
        let mut active = vec![true; n];
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let id = |s: &str| -> Result<u32, TopologyError> {
                let v: u32 = s.parse().map_err(|_| parse_err(lineno, "bad vertex id"))?;
                if v as usize >= n {
                    return Err(TopologyError::VertexOutOfRange { vertex: v, size });
                }
                Ok(v)
            };
            match f.as_slice() {
                ["x", v] => active[id(v)? as usize] = false,
                ["e", u, v] => edges.push((id(u)?, id(v)?)),
                _ => return Err(parse_err(lineno, "expected `x <id>` or `e <u> <v>`")),
            }
        }
        let g = WorkingGraph::from_parts(size, active, edges)?;
        if g.num_active() != n_active {
            return Err(parse_err(hline, "active count does not match inactive lines"));
        }
        Ok(g)
    }
}

fn check_size(size: usize) -> Result<(), TopologyError> {
    if (1..=MAX_SIZE).contains(&size) {
        Ok(())
    } else {
        Err(TopologyError::SizeOutOfRange(size))
    }
}

/// Closed-form edge count of the defect-free `C_s`.
pub fn chimera_edge_count(size: usize) -> usize {
    16 * size * size + 8 * size * size.saturating_sub(1)
}

/// The defect-free Chimera graph `C_s`.
pub fn build_chimera(size: usize) -> Result<WorkingGraph, TopologyError> {
    check_size(size)?;
    let n = CELL_VERTICES * size * size;
    let mut edges = Vec::with_capacity(chimera_edge_count(size));
    for row in 0..size {
        for col in 0..size {
            let at = |side, unit| ChimeraCoord { row, col, side, unit }.to_id(size);
            for a in 0..4 {
                for b in 0..4 {
                    edges.push((at(Side::V, a), at(Side::H, b)));
                }
                if row + 1 < size {
                    let below = ChimeraCoord { row: row + 1, col, side: Side::V, unit: a };
                    edges.push((at(Side::V, a), below.to_id(size)));
                }
                if col + 1 < size {
                    let right = ChimeraCoord { row, col: col + 1, side: Side::H, unit: a };
                    edges.push((at(Side::H, a), right.to_id(size)));
                }
            }
        }
    }
    WorkingGraph::from_parts(size, vec![true; n], edges)
}

/// Remove the `inactive` qubits and their couplers from `g`.
pub fn apply_defects(
    g: &WorkingGraph,
    inactive: &BTreeSet<u32>,
) -> Result<WorkingGraph, TopologyError> {
    let mut active = g.active.clone();
    for &v in inactive {
        if v as usize >= g.num_slots() {
            return Err(TopologyError::VertexOutOfRange { vertex: v, size: g.size });
        }
        active[v as usize] = false;
    }
    let edges: Vec<(u32, u32)> = g
        .edges
        .iter()
        .copied()
        .filter(|&(u, v)| active[u as usize] && active[v as usize])
        .collect();
    WorkingGraph::from_parts(g.size, active, edges)
}

/// `count` distinct qubits of `C_size` chosen uniformly from `seed`.
pub fn random_defect_mask(size: usize, count: usize, seed: u64) -> Result<BTreeSet<u32>, TopologyError> {
    check_size(size)?;
    let n = CELL_VERTICES * size * size;
    if count > n {
        return Err(TopologyError::VertexOutOfRange { vertex: count as u32, size });
    }
    let mut rng = rng_from_seed(seed);
    Ok(index::sample(&mut rng, n, count).iter().map(|v| v as u32).collect())
}

/// Induced working graph on the cells with `row < sub` and `col < sub`,
/// relabelled as a `C_sub`. Inactive qubits stay inactive.
pub fn square_subgraph(g: &WorkingGraph, sub: usize) -> Result<WorkingGraph, TopologyError> {
    if sub > g.size {
        return Err(TopologyError::SubgraphTooLarge { sub, parent: g.size });
    }
    check_size(sub)?;
    let remap = |v: u32| -> Option<u32> {
        let c = ChimeraCoord::from_id(v, g.size);
        (c.row < sub && c.col < sub).then(|| c.to_id(sub))
    };
    let mut active = vec![false; CELL_VERTICES * sub * sub];
    for &v in g.active_ids() {
        if let Some(w) = remap(v) {
            active[w as usize] = true;
        }
    }
    let edges: Vec<(u32, u32)> = g
        .edges
        .iter()
        .filter_map(|&(u, v)| Some((remap(u)?, remap(v)?)))
        .collect();
    WorkingGraph::from_parts(sub, active, edges)
}

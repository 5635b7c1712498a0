//! Tree-of-half-cells local search.
//!
//! Each half-cell (the four V or four H qubits of a cell) is one node of a
//! contact graph: the two halves of a cell touch, and every half touches its
//! same-side partner in the adjacent cell along its coupling direction.
//! Subsets of half-cells that induce a tree in this graph can be minimized
//! exactly, conditioned on all other spins, by min-sum dynamic programming
//! with at most 16 states per node. The sampler repeatedly draws a random
//! maximal induced tree and replaces its spins by the conditional optimum,
//! stopping after a run of non-improving trees.

use std::collections::VecDeque;

use rand::Rng as _;

use super::{Nanos, Sample, SampleSet, SolverError, SolverId, SweepCost, TimingModel};
use crate::ising::{IsingProblem, SpinConfig};
use crate::rng::{rng_from_seed, stream_seed, Rng};
use crate::topology::{ChimeraCoord, Side, WorkingGraph};

/// Consecutive non-improving tree optimizations before a sample is returned.
pub const DEFAULT_PATIENCE: usize = 10;

/// Half-cell contact graph of a working graph.
#[derive(Debug, Clone)]
pub struct HalfCellGraph {
    /// Dense spin indices in each node, ascending.
    members: Vec<Vec<u32>>,
    node_of: Vec<u32>,
    adj: Vec<Vec<u32>>,
}

impl HalfCellGraph {
    pub fn new(graph: &WorkingGraph) -> Self {
        let s = graph.size();
        let nodes = 2 * s * s;
        let node = |row: usize, col: usize, side: Side| 2 * (row * s + col) + usize::from(side == Side::H);
        let mut members = vec![Vec::new(); nodes];
        let mut node_of = vec![0u32; graph.num_active()];
        for (d, &id) in graph.active_ids().iter().enumerate() {
            let c = ChimeraCoord::from_id(id, s);
            let k = node(c.row, c.col, c.side);
            members[k].push(d as u32);
            node_of[d] = k as u32;
        }
        let mut adj = vec![Vec::new(); nodes];
        let mut link = |a: usize, b: usize| {
            adj[a].push(b as u32);
            adj[b].push(a as u32);
        };
        for row in 0..s {
            for col in 0..s {
                link(node(row, col, Side::V), node(row, col, Side::H));
                if row + 1 < s {
                    link(node(row, col, Side::V), node(row + 1, col, Side::V));
                }
                if col + 1 < s {
                    link(node(row, col, Side::H), node(row, col + 1, Side::H));
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        HalfCellGraph { members, node_of, adj }
    }

    pub fn num_nodes(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, node: usize) -> &[u32] {
        &self.members[node]
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adj[node]
    }

    pub fn node_of(&self, spin: usize) -> usize {
        self.node_of[spin] as usize
    }
}

/// A random maximal subset of nodes inducing a tree: shuffle, seed with the
/// first node, then keep adding uniformly chosen frontier nodes that have
/// exactly one selected neighbor until none remain.
pub fn random_maximal_tree(hcg: &HalfCellGraph, rng: &mut Rng) -> Vec<bool> {
    let n = hcg.num_nodes();
    let mut selected = vec![false; n];
    let mut touching = vec![0u8; n];
    let root = rng.random_range(0..n);
    let mut frontier: Vec<u32> = Vec::new();
    let mut add = |v: usize, selected: &mut Vec<bool>, frontier: &mut Vec<u32>| {
        selected[v] = true;
        for &w in hcg.neighbors(v) {
            let w = w as usize;
            touching[w] = touching[w].saturating_add(1);
            if !selected[w] && touching[w] == 1 {
                frontier.push(w as u32);
            }
        }
    };
    add(root, &mut selected, &mut frontier);
    // entries go stale when a second selected neighbor appears
    let touching_of = |v: usize, sel: &Vec<bool>| hcg.neighbors(v).iter().filter(|&&w| sel[w as usize]).count();
    while !frontier.is_empty() {
        let k = rng.random_range(0..frontier.len());
        let v = frontier.swap_remove(k) as usize;
        if selected[v] || touching_of(v, &selected) != 1 {
            continue;
        }
        add(v, &mut selected, &mut frontier);
    }
    selected
}

/// State `b` of a node assigns spin `t` to `+1` when bit `t` is set.
#[inline]
fn spin_of(state: usize, t: usize) -> i64 {
    if (state >> t) & 1 == 1 { 1 } else { -1 }
}

/// Replace the spins of the selected nodes by a minimizer of the energy
/// conditioned on all unselected spins. The selection must induce a forest.
/// Ties resolve to the lowest-numbered state. Returns the energy change.
pub fn minimize_on_forest(
    problem: &IsingProblem,
    hcg: &HalfCellGraph,
    selected: &[bool],
    spins: &mut [i8],
) -> Result<i64, SolverError> {
    let n = hcg.num_nodes();
    // BFS forest with parent pointers; a visited non-parent neighbor is a cycle
    let mut parent = vec![u32::MAX; n];
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    for root in 0..n {
        if !selected[root] || seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in hcg.neighbors(v) {
                let w = w as usize;
                if !selected[w] || w == parent[v] as usize {
                    continue;
                }
                if seen[w] {
                    return Err(SolverError::NotAForest);
                }
                seen[w] = true;
                parent[w] = v as u32;
                queue.push_back(w);
            }
        }
    }

    // unary costs: fields plus couplings to spins outside the selection
    let mut cost: Vec<[i64; 16]> = vec![[0; 16]; n];
    for &v in &order {
        let members = hcg.members(v);
        for (t, &i) in members.iter().enumerate() {
            let i = i as usize;
            let mut field = problem.h()[i] as i64;
            for &(k, w) in problem.couplings(i) {
                if !selected[hcg.node_of(k as usize)] {
                    field += w as i64 * spins[k as usize] as i64;
                }
            }
            for (state, c) in cost[v].iter_mut().enumerate().take(1 << members.len()) {
                *c += field * spin_of(state, t);
            }
        }
    }

    let before = problem.energy_unchecked(spins);
    let mut choice: Vec<[u8; 16]> = vec![[0; 16]; n];
    // leaves to roots
    for &v in order.iter().rev() {
        let p = parent[v];
        if p == u32::MAX {
            continue;
        }
        let p = p as usize;
        let (mv, mp) = (hcg.members(v), hcg.members(p));
        // couplings between the two nodes as (t in v, t in p, J)
        let mut links: Vec<(usize, usize, i64)> = Vec::new();
        for (tv, &i) in mv.iter().enumerate() {
            for &(k, w) in problem.couplings(i as usize) {
                if let Some(tp) = mp.iter().position(|&m| m == k) {
                    links.push((tv, tp, w as i64));
                }
            }
        }
        for a in 0..(1usize << mp.len()) {
            let mut best = i64::MAX;
            let mut arg = 0u8;
            for (b, &own) in cost[v].iter().enumerate().take(1usize << mv.len()) {
                let pair: i64 = links.iter().map(|&(tv, tp, w)| w * spin_of(b, tv) * spin_of(a, tp)).sum();
                let c = own + pair;
                if c < best {
                    best = c;
                    arg = b as u8;
                }
            }
            cost[p][a] += best;
            choice[v][a] = arg;
        }
    }
    // roots to leaves
    let mut state = vec![0usize; n];
    for &v in &order {
        let k = 1usize << hcg.members(v).len();
        state[v] = if parent[v] == u32::MAX {
            (0..k).min_by_key(|&b| (cost[v][b], b)).unwrap()
        } else {
            choice[v][state[parent[v] as usize]] as usize
        };
        for (t, &i) in hcg.members(v).iter().enumerate() {
            spins[i as usize] = spin_of(state[v], t) as i8;
        }
    }
    Ok(problem.energy_unchecked(spins) - before)
}

/// Result of one HFS descent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HfsSample {
    pub config: SpinConfig,
    pub energy: i64,
    /// Tree optimizations performed.
    pub tree_sweeps: u64,
}

/// Prepared tree sampler for one instance.
pub struct HfsSolver<'p> {
    problem: &'p IsingProblem,
    hcg: HalfCellGraph,
    patience: usize,
}

impl<'p> HfsSolver<'p> {
    pub fn new(problem: &'p IsingProblem, patience: usize) -> Result<Self, SolverError> {
        if patience == 0 {
            return Err(SolverError::BadParams("patience must be at least 1".into()));
        }
        Ok(HfsSolver { problem, hcg: HalfCellGraph::new(problem.graph()), patience })
    }

    pub fn contact_graph(&self) -> &HalfCellGraph {
        &self.hcg
    }

    /// One random maximal tree optimization in place; returns the energy change.
    pub fn tree_sweep(&self, spins: &mut [i8], rng: &mut Rng) -> i64 {
        let tree = random_maximal_tree(&self.hcg, rng);
        minimize_on_forest(self.problem, &self.hcg, &tree, spins).expect("maximal trees are forests")
    }

    pub fn sample(&self, rng: &mut Rng) -> HfsSample {
        let mut spins = SpinConfig::random(self.problem.num_spins(), rng).into_inner();
        let mut stale = 0;
        let mut tree_sweeps = 0u64;
        while stale < self.patience {
            let delta = self.tree_sweep(&mut spins, rng);
            tree_sweeps += 1;
            if delta < 0 {
                stale = 0;
            } else {
                stale += 1;
            }
        }
        self.problem.greedy_descent_in_place(&mut spins);
        let energy = self.problem.energy_unchecked(&spins);
        HfsSample { config: SpinConfig::new(spins).expect("+-1"), energy, tree_sweeps }
    }
}

/// One seeded descent with the given patience.
pub fn hfs_sample(p: &IsingProblem, patience: usize, seed: u64) -> Result<HfsSample, SolverError> {
    Ok(HfsSolver::new(p, patience)?.sample(&mut rng_from_seed(seed)))
}

/// `count` independent descents. Per-sample anneal time is tree sweeps times
/// `cost.per_sweep_ns`; the timing model's `t_a` uses the mean tree-sweep
/// count per sample.
pub fn hfs_sample_set(
    p: &IsingProblem,
    patience: usize,
    count: usize,
    seed: u64,
    cost: &SweepCost,
) -> Result<SampleSet, SolverError> {
    if count == 0 {
        return Err(SolverError::BadParams("sample count must be at least 1".into()));
    }
    let solver = HfsSolver::new(p, patience)?;
    let mut samples = Vec::with_capacity(count);
    let mut configs = Vec::with_capacity(count);
    for i in 0..count {
        let s = solver.sample(&mut rng_from_seed(stream_seed(seed, i as u64)));
        samples.push(Sample { energy: s.energy, anneal: cost.duration(s.tree_sweeps), work: s.tree_sweeps, batch: None });
        configs.push(s.config);
    }
    let mean_sweeps = samples.iter().map(|s| s.work as f64).sum::<f64>() / count as f64;
    let t_a = Nanos((cost.per_sweep_ns * mean_sweeps).round() as u64);
    Ok(SampleSet { solver: SolverId::Hfs, samples, configs, timing: TimingModel::software(cost.init, t_a) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_ran;
    use crate::ising::random_problem;
    use crate::topology::{apply_defects, build_chimera};
    use std::sync::Arc;

    fn brute_ground(p: &IsingProblem) -> i64 {
        let n = p.num_spins();
        (0u64..1 << n)
            .map(|bits| {
                let s: Vec<i8> = (0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
                p.energy_unchecked(&s)
            })
            .min()
            .unwrap()
    }

    fn is_induced_forest(hcg: &HalfCellGraph, sel: &[bool]) -> bool {
        let k = sel.iter().filter(|&&b| b).count();
        let e = (0..hcg.num_nodes())
            .filter(|&v| sel[v])
            .flat_map(|v| hcg.neighbors(v).iter().map(move |&w| (v, w as usize)))
            .filter(|&(v, w)| v < w && sel[w])
            .count();
        // forest iff edges = nodes - components; check connectivity too for trees
        let mut comp = 0;
        let mut seen = vec![false; sel.len()];
        for r in 0..sel.len() {
            if sel[r] && !seen[r] {
                comp += 1;
                let mut stack = vec![r];
                seen[r] = true;
                while let Some(v) = stack.pop() {
                    for &w in hcg.neighbors(v) {
                        let w = w as usize;
                        if sel[w] && !seen[w] {
                            seen[w] = true;
                            stack.push(w);
                        }
                    }
                }
            }
        }
        e + comp == k
    }

    #[test]
    fn contact_graph_shape() {
        let g = build_chimera(3).unwrap();
        let hcg = HalfCellGraph::new(&g);
        assert_eq!(hcg.num_nodes(), 18);
        // edges: 9 cells + 2 * 3 * 2 chains
        let edges: usize = (0..18).map(|v| hcg.neighbors(v).len()).sum::<usize>() / 2;
        assert_eq!(edges, 9 + 12);
        assert!((0..18).all(|v| hcg.members(v).len() == 4));
    }

    #[test]
    fn maximal_trees_are_trees_and_maximal() {
        let g = build_chimera(4).unwrap();
        let hcg = HalfCellGraph::new(&g);
        let mut rng = rng_from_seed(0);
        for _ in 0..200 {
            let sel = random_maximal_tree(&hcg, &mut rng);
            assert!(is_induced_forest(&hcg, &sel));
            for v in 0..hcg.num_nodes() {
                if !sel[v] {
                    let mut with = sel.clone();
                    with[v] = true;
                    let touching = hcg.neighbors(v).iter().filter(|&&w| sel[w as usize]).count();
                    assert!(touching != 1 || !is_induced_forest(&hcg, &with), "not maximal");
                }
            }
        }
    }

    /// Exhaustive conditional oracle: enumerate all states of the free spins
    /// with everything else held fixed.
    fn brute_conditional(p: &IsingProblem, free: &[usize], spins: &[i8]) -> i64 {
        let mut s = spins.to_vec();
        (0u64..1 << free.len())
            .map(|bits| {
                for (t, &i) in free.iter().enumerate() {
                    s[i] = if bits >> t & 1 == 1 { 1 } else { -1 };
                }
                p.energy_unchecked(&s)
            })
            .min()
            .unwrap()
    }

    #[test]
    fn forest_dp_matches_enumeration() {
        let mut rng = rng_from_seed(4);
        let base = build_chimera(2).unwrap();
        let mut checked = 0;
        while checked < 200 {
            let mask = crate::topology::random_defect_mask(2, rng.random_range(0..6), rng.random()).unwrap();
            let g = Arc::new(apply_defects(&base, &mask).unwrap());
            let p = random_problem(g.clone(), 5, &mut rng);
            let hcg = HalfCellGraph::new(&g);
            let sel: Vec<bool> = (0..hcg.num_nodes()).map(|_| rng.random_bool(0.5)).collect();
            let free: Vec<usize> = (0..p.num_spins()).filter(|&i| sel[hcg.node_of(i)]).collect();
            if free.len() > 16 {
                continue;
            }
            let mut spins = SpinConfig::random(p.num_spins(), &mut rng).into_inner();
            let fixed_before = spins.clone();
            let expected = brute_conditional(&p, &free, &spins);
            match minimize_on_forest(&p, &hcg, &sel, &mut spins) {
                Ok(_) => {
                    assert_eq!(p.energy_unchecked(&spins), expected);
                    for i in 0..spins.len() {
                        if !sel[hcg.node_of(i)] {
                            assert_eq!(spins[i], fixed_before[i]);
                        }
                    }
                    checked += 1;
                }
                Err(SolverError::NotAForest) => assert!(!is_induced_forest(&hcg, &sel)),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn single_cell_is_solved_exactly() {
        let g = Arc::new(build_chimera(1).unwrap());
        let mut rng = rng_from_seed(8);
        for seed in 0..50 {
            let p = random_problem(g.clone(), 3, &mut rng);
            let hfs = HfsSolver::new(&p, 1).unwrap();
            let mut r = rng_from_seed(seed);
            let mut spins = SpinConfig::random(8, &mut r).into_inner();
            hfs.tree_sweep(&mut spins, &mut r);
            assert_eq!(p.energy_unchecked(&spins), brute_ground(&p));
            assert_eq!(hfs_sample(&p, DEFAULT_PATIENCE, seed).unwrap().energy, brute_ground(&p));
        }
    }

    #[test]
    fn descent_never_worsens_the_start() {
        let g = Arc::new(build_chimera(3).unwrap());
        let p = gen_ran(&g, 3, 2).unwrap().problem;
        let hfs = HfsSolver::new(&p, 5).unwrap();
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let start = SpinConfig::random(p.num_spins(), &mut rng.clone());
            let s = hfs.sample(&mut rng);
            assert!(s.energy <= p.energy(&start).unwrap());
            assert!(s.tree_sweeps >= 5);
            assert!(p.is_one_flip_minimal(&s.config));
        }
    }

    #[test]
    fn sample_set_timing() {
        let g = Arc::new(build_chimera(2).unwrap());
        let p = gen_ran(&g, 1, 2).unwrap().problem;
        let cost = SweepCost { init: Nanos(3), per_sweep_ns: 10.0 };
        let set = hfs_sample_set(&p, 4, 10, 1, &cost).unwrap();
        let mean = set.mean_work();
        assert_eq!(set.timing.t_a, Nanos((10.0 * mean).round() as u64));
        assert!(set.samples.iter().all(|s| s.anneal == Nanos(10 * s.work)));
        assert!(HfsSolver::new(&p, 0).is_err());
    }
}

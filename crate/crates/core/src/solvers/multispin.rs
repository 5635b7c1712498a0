//! Multi-spin coded annealing for `|J| = 1`, `h = 0` instances.
//!
//! Bit `b` of word `x[i]` holds spin `i` of replica `b` (set bit = spin -1),
//! so one pass over the words updates all [`REPLICAS`] replicas at once. For
//! a spin with degree `d` and `u` unsatisfied couplers, a flip changes the
//! energy by `2 (d - 2u)`: replicas with `2u >= d` always flip, the others
//! flip with probability `exp(-beta * 2 (d - 2u))`.
//!
//! Acceptance is decided without leaving the word domain. Each replica gets
//! a fresh uniform `U` whose bits are drawn one random word at a time, most
//! significant first, and `U < threshold` is evaluated bit-serially against
//! the precomputed 64-bit threshold of every energy level present. Drawing
//! stops once every comparison is decided, which typically takes a handful
//! of words. Replicas therefore use independent random numbers and each one
//! follows exact Metropolis dynamics marginally; unlike schemes that recycle
//! one random number across the word, no correlation is introduced between
//! replicas.

use rand::{Rng as _, RngCore};

use super::{Nanos, Sample, SampleSet, SAParams, SolverError, SolverId, SweepCost, TimingModel};
use crate::ising::{IsingProblem, SpinConfig};
use crate::rng::{rng_from_seed, stream_seed, Rng};

/// Replicas per machine word.
pub const REPLICAS: usize = 64;

// Largest energy change for degree <= 6 is 12; levels are 2, 4, .., 12.
const MAX_LEVEL: usize = 12;

/// Prepared multi-replica annealer for one instance.
pub struct MultiSpinSa<'p> {
    problem: &'p IsingProblem,
    params: SAParams,
    offsets: Vec<u32>,
    // (neighbor, mask) with mask all ones for antiferromagnetic couplers
    nbrs: Vec<(u32, u64)>,
    thresholds: [u64; MAX_LEVEL + 1],
}

/// `floor(p * 2^64)`, saturating below 1.
fn threshold(p: f64) -> u64 {
    if p >= 1.0 {
        u64::MAX
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Word whose bit `b` is set when replica `b` draws a uniform below
/// `t / 2^64`, restricted to the replicas in `candidates`.
///
/// All levels share the same per-replica uniform, so several thresholds are
/// compared at once: `levels[k] = (threshold, candidates)`.
fn accept_below(levels: &mut [(u64, u64)], rng: &mut Rng) -> u64 {
    let mut accepted = 0u64;
    // eq: replicas whose uniform matches the threshold on all bits so far
    let mut undecided: u64 = levels.iter().fold(0, |acc, l| acc | l.1);
    let mut bit = 63i32;
    while undecided != 0 && bit >= 0 {
        let r = rng.next_u64();
        undecided = 0;
        for (t, eq) in levels.iter_mut() {
            if *eq == 0 {
                continue;
            }
            if (*t >> bit) & 1 == 1 {
                // threshold bit 1: uniform bit 0 means strictly below
                accepted |= *eq & !r;
                *eq &= r;
            } else {
                *eq &= !r;
            }
            undecided |= *eq;
        }
        bit -= 1;
    }
    accepted
}

impl<'p> MultiSpinSa<'p> {
    pub fn new(problem: &'p IsingProblem, params: SAParams) -> Result<Self, SolverError> {
        params.validate()?;
        if problem.h().iter().any(|&h| h != 0) || problem.j().iter().any(|&w| w.abs() != 1) {
            return Err(SolverError::NotRangeOne);
        }
        let n = problem.num_spins();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut nbrs = Vec::new();
        offsets.push(0);
        for i in 0..n {
            let c = problem.couplings(i);
            if c.len() > 6 {
                return Err(SolverError::BadParams("degree above 6".into()));
            }
            nbrs.extend(c.iter().map(|&(k, w)| (k, if w > 0 { u64::MAX } else { 0 })));
            offsets.push(nbrs.len() as u32);
        }
        Ok(MultiSpinSa { problem, params, offsets, nbrs, thresholds: [0; MAX_LEVEL + 1] })
    }

    /// Anneal all replicas once; returns the raw replica words.
    pub fn anneal_words(&mut self, rng: &mut Rng) -> Vec<u64> {
        let n = self.problem.num_spins();
        let mut x: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
        let sweeps = self.params.sweeps;
        for k in 0..sweeps {
            let beta = self.params.schedule.beta(k, sweeps);
            self.sweep(&mut x, beta, rng);
        }
        x
    }

    /// Metropolis sweep at inverse temperature `beta` (range-1 instances:
    /// scaled and unscaled coincide). The visiting order is the same as for
    /// the scalar kernel and is shared by all replicas.
    pub fn sweep(&mut self, x: &mut [u64], beta: f64, rng: &mut Rng) {
        self.set_beta(beta);
        let n = x.len();
        let start = if n > 1 { rng.random_range(0..n) } else { 0 };
        for i in (start..n).chain(0..start) {
            self.update(x, i, rng);
        }
    }

    fn set_beta(&mut self, beta: f64) {
        for level in (2..=MAX_LEVEL).step_by(2) {
            self.thresholds[level] = threshold((-beta * level as f64).exp());
        }
    }

    #[inline]
    fn update(&self, x: &mut [u64], i: usize, rng: &mut Rng) {
        let xi = x[i];
        let nb = &self.nbrs[self.offsets[i] as usize..self.offsets[i + 1] as usize];
        let d = nb.len();
        // bit-sliced count of unsatisfied couplers
        let (mut c0, mut c1, mut c2) = (0u64, 0u64, 0u64);
        for &(k, mask) in nb {
            let w = xi ^ x[k as usize] ^ mask;
            let carry0 = c0 & w;
            c0 ^= w;
            let carry1 = c1 & carry0;
            c1 ^= carry0;
            c2 |= carry1;
        }
        let count_is = |u: usize| -> u64 {
            let b0 = if u & 1 == 1 { c0 } else { !c0 };
            let b1 = if u & 2 == 2 { c1 } else { !c1 };
            let b2 = if u & 4 == 4 { c2 } else { !c2 };
            b0 & b1 & b2
        };
        let mut levels: [(u64, u64); 4] = [(0, 0); 4];
        let mut flip = u64::MAX;
        let mut used = 0;
        // uphill levels are u with 2u < d
        for u in 0..d.div_ceil(2) {
            let m = count_is(u);
            flip &= !m;
            if m != 0 {
                levels[used] = (self.thresholds[2 * (d - 2 * u)], m);
                used += 1;
            }
        }
        if used > 0 {
            flip |= accept_below(&mut levels[..used], rng);
        }
        x[i] = xi ^ flip;
    }

    /// Unpack replica `b` into spins.
    pub fn replica(x: &[u64], b: usize) -> SpinConfig {
        SpinConfig::new(x.iter().map(|w| if (w >> b) & 1 == 1 { -1 } else { 1 }).collect()).expect("+-1")
    }

    /// One batch of [`REPLICAS`] post-processed samples.
    pub fn batch(&mut self, rng: &mut Rng) -> Vec<(SpinConfig, i64)> {
        let x = self.anneal_words(rng);
        (0..REPLICAS)
            .map(|b| {
                let mut s = Self::replica(&x, b).into_inner();
                self.problem.greedy_descent_in_place(&mut s);
                let e = self.problem.energy_unchecked(&s);
                (SpinConfig::new(s).expect("+-1"), e)
            })
            .collect()
    }
}

/// One seeded batch of [`REPLICAS`] samples.
pub fn multispin_sa_batch(p: &IsingProblem, params: &SAParams, seed: u64) -> Result<Vec<(SpinConfig, i64)>, SolverError> {
    let mut solver = MultiSpinSa::new(p, *params)?;
    Ok(solver.batch(&mut rng_from_seed(seed)))
}

/// `count` samples from `ceil(count / 64)` batches; batch `k` uses stream
/// `k` below `seed`. `cost.per_sweep_ns` is the cost of one word-wide sweep,
/// so `t_a` is per batch and the timing model records a batch width of 64.
pub fn msa_sample_set(
    p: &IsingProblem,
    params: &SAParams,
    count: usize,
    seed: u64,
    cost: &SweepCost,
) -> Result<SampleSet, SolverError> {
    if count == 0 {
        return Err(SolverError::BadParams("sample count must be at least 1".into()));
    }
    let mut solver = MultiSpinSa::new(p, *params)?;
    let anneal: Nanos = cost.duration(params.sweeps);
    let mut samples = Vec::with_capacity(count);
    let mut configs = Vec::with_capacity(count);
    let mut k = 0u64;
    while samples.len() < count {
        for (s, e) in solver.batch(&mut rng_from_seed(stream_seed(seed, k))) {
            if samples.len() == count {
                break;
            }
            samples.push(Sample { energy: e, anneal, work: params.sweeps, batch: None });
            configs.push(s);
        }
        k += 1;
    }
    let mut timing = TimingModel::software(cost.init, anneal);
    timing.batch = REPLICAS as u32;
    Ok(SampleSet { solver: SolverId::Msa { sweeps: params.sweeps }, samples, configs, timing })
}

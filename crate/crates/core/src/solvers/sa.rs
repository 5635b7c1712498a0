//! Scalar single-spin-flip Metropolis annealing.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Nanos, SampleSet, Sample, ScheduleKind, SolverError, SolverId, SweepCost, TimingModel};
use crate::ising::{IsingProblem, SpinConfig};
use crate::rng::{rng_from_seed, stream_seed, Rng};

/// Sweeps-per-anneal values tried when tuning.
pub const SWEEP_GRID: [u64; 10] = [10, 20, 40, 100, 200, 400, 1000, 2000, 4000, 10000];

/// Linear inverse-temperature ramp. With `scaled`, energy differences are
/// divided by the largest weight magnitude of the instance, which is the
/// same as dividing both endpoints by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SASchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub scaled: bool,
}

impl Default for SASchedule {
    fn default() -> Self {
        SASchedule { beta_start: 0.01, beta_end: 3.0, scaled: false }
    }
}

impl SASchedule {
    pub fn of_kind(kind: ScheduleKind) -> Self {
        SASchedule { scaled: kind == ScheduleKind::Scaled, ..Default::default() }
    }

    pub fn kind(&self) -> ScheduleKind {
        if self.scaled { ScheduleKind::Scaled } else { ScheduleKind::Unscaled }
    }

    /// Inverse temperature of sweep `k` out of `sweeps`, endpoints inclusive.
    pub fn beta(&self, k: u64, sweeps: u64) -> f64 {
        if sweeps <= 1 {
            return self.beta_end;
        }
        self.beta_start + (self.beta_end - self.beta_start) * k as f64 / (sweeps - 1) as f64
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.beta_start > 0.0 && self.beta_start < self.beta_end && self.beta_end.is_finite()) {
            return Err(SolverError::BadParams(format!(
                "need 0 < beta_start < beta_end, got {} and {}",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SAParams {
    pub sweeps: u64,
    pub schedule: SASchedule,
}

impl SAParams {
    pub fn new(sweeps: u64, kind: ScheduleKind) -> Self {
        SAParams { sweeps, schedule: SASchedule::of_kind(kind) }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.sweeps == 0 {
            return Err(SolverError::BadParams("sweeps must be at least 1".into()));
        }
        self.schedule.validate()
    }

    pub fn id(&self) -> SolverId {
        SolverId::Sa { sweeps: self.sweeps, schedule: self.schedule.kind() }
    }
}

/// Per-instance annealing state, built once and reused across anneals.
pub struct SaKernel<'p> {
    problem: &'p IsingProblem,
    params: SAParams,
    energy_scale: f64,
    max_delta: i64,
    // exp(-beta * dE / scale) for dE in 0..=max_delta when that is cheaper
    // than evaluating exp per proposal
    table: Vec<f64>,
    use_table: bool,
    // local fields of the current state, updated on every accepted flip
    fields: Vec<i32>,
}

impl<'p> SaKernel<'p> {
    pub fn new(problem: &'p IsingProblem, params: SAParams) -> Result<Self, SolverError> {
        params.validate()?;
        let energy_scale = if params.schedule.scaled { problem.max_abs_weight() as f64 } else { 1.0 };
        let max_delta = (0..problem.num_spins())
            .map(|i| {
                let f: i64 = problem.h()[i].abs() as i64
                    + problem.couplings(i).iter().map(|&(_, w)| w.abs() as i64).sum::<i64>();
                2 * f
            })
            .max()
            .unwrap_or(0);
        let use_table = (max_delta as usize) <= problem.num_spins().max(16);
        Ok(SaKernel {
            problem,
            params,
            energy_scale,
            max_delta,
            table: if use_table { vec![0.0; max_delta as usize + 1] } else { Vec::new() },
            use_table,
            fields: vec![0; problem.num_spins()],
        })
    }

    pub fn params(&self) -> &SAParams {
        &self.params
    }

    /// One anneal from a uniformly random start, followed by greedy descent.
    pub fn anneal(&mut self, rng: &mut Rng) -> (SpinConfig, i64) {
        let mut spins = SpinConfig::random(self.problem.num_spins(), rng).into_inner();
        self.init_fields(&spins);
        let sweeps = self.params.sweeps;
        for k in 0..sweeps {
            let beta = self.params.schedule.beta(k, sweeps);
            self.sweep(&mut spins, beta, rng);
        }
        self.problem.greedy_descent_in_place(&mut spins);
        let e = self.problem.energy_unchecked(&spins);
        (SpinConfig::new(spins).expect("spins stay +-1"), e)
    }

    /// `sweeps` sweeps at a fixed temperature from the given state, without
    /// post-processing. Used by calibration and diagnostics.
    pub fn run_fixed(&mut self, spins: &mut [i8], beta: f64, sweeps: u64, rng: &mut Rng) {
        self.init_fields(spins);
        for _ in 0..sweeps {
            self.sweep(spins, beta, rng);
        }
    }

    /// Visit every spin once in ascending order, starting at a random
    /// position and wrapping around. A fixed start can cycle forever: on a
    /// lone cell with balanced halves every field is zero, every flip is
    /// accepted, and each half just flips back and forth.
    #[inline]
    fn sweep(&mut self, spins: &mut [i8], beta: f64, rng: &mut Rng) {
        if self.use_table {
            for d in 1..=self.max_delta as usize {
                self.table[d] = (-beta * (d as f64 / self.energy_scale)).exp();
            }
        }
        let n = spins.len();
        let start = if n > 1 { rng.random_range(0..n) } else { 0 };
        self.visit(spins, start..n, beta, rng);
        self.visit(spins, 0..start, beta, rng);
    }

    fn init_fields(&mut self, spins: &[i8]) {
        for (i, f) in self.fields.iter_mut().enumerate() {
            *f = self.problem.local_field(i, spins) as i32;
        }
    }

    #[inline]
    fn visit(&mut self, spins: &mut [i8], range: std::ops::Range<usize>, beta: f64, rng: &mut Rng) {
        for i in range {
            let s = spins[i] as i32;
            let delta = -2 * s * self.fields[i];
            let accept = delta <= 0 || {
                let prob = if self.use_table {
                    self.table[delta as usize]
                } else {
                    (-beta * (delta as f64 / self.energy_scale)).exp()
                };
                rng.random::<f64>() < prob
            };
            if accept {
                spins[i] = -spins[i];
                for &(k, w) in self.problem.couplings(i) {
                    self.fields[k as usize] -= 2 * w * s;
                }
            }
        }
    }
}

/// One seeded anneal.
pub fn sa_sample(p: &IsingProblem, params: &SAParams, seed: u64) -> Result<(SpinConfig, i64), SolverError> {
    let mut kernel = SaKernel::new(p, *params)?;
    Ok(kernel.anneal(&mut rng_from_seed(seed)))
}

/// `count` independent anneals; sample `i` uses stream `i` below `seed`, so
/// the first sample equals `sa_sample(p, params, stream_seed(seed, 0))`.
pub fn sa_sample_set(
    p: &IsingProblem,
    params: &SAParams,
    count: usize,
    seed: u64,
    cost: &SweepCost,
) -> Result<SampleSet, SolverError> {
    if count == 0 {
        return Err(SolverError::BadParams("sample count must be at least 1".into()));
    }
    let mut kernel = SaKernel::new(p, *params)?;
    let anneal: Nanos = cost.duration(params.sweeps);
    let mut samples = Vec::with_capacity(count);
    let mut configs = Vec::with_capacity(count);
    for i in 0..count {
        let (s, e) = kernel.anneal(&mut rng_from_seed(stream_seed(seed, i as u64)));
        samples.push(Sample { energy: e, anneal, work: params.sweeps, batch: None });
        configs.push(s);
    }
    Ok(SampleSet { solver: params.id(), samples, configs, timing: TimingModel::software(cost.init, anneal) })
}

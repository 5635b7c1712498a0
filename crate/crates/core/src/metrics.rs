//! Target energies, samples-to-target, time-to-target and aggregation.
//!
//! Success probabilities are kept as exact hit counts so that STT and TTT
//! are computed from integer ratios. A set with no hit is censored: its
//! metrics are lower bounds obtained by pretending a single hit.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solvers::{Nanos, SampleSet, TimingModel};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("quantile {0} outside (0, 1)")]
    BadQuantile(f64),
    #[error("sample set has no gauge batches")]
    NoBatches,
    #[error("confidence level {0} outside (0, 1)")]
    BadLevel(f64),
    #[error("inputs do not match: {0}")]
    Mismatch(String),
}

/// Energy at quantile `q` of a reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub q: f64,
    pub energy: i64,
}

/// 1-based index `max(1, round(qN))`, rounding halves up.
pub fn quantile_index(n: usize, q: f64) -> usize {
    ((q * n as f64 + 0.5).floor() as usize).clamp(1, n)
}

pub fn target_energy(reference: &SampleSet, q: f64) -> Result<TargetSpec, MetricsError> {
    target_from_energies(reference.energies().collect(), q)
}

pub fn target_from_energies(mut energies: Vec<i64>, q: f64) -> Result<TargetSpec, MetricsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricsError::BadQuantile(q));
    }
    if energies.is_empty() {
        return Err(MetricsError::Empty);
    }
    energies.sort_unstable();
    let k = quantile_index(energies.len(), q);
    Ok(TargetSpec { q, energy: energies[k - 1] })
}

/// A value that is either exact or, when censored, a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured<T> {
    pub value: T,
    pub censored: bool,
}

impl<T> Measured<T> {
    pub fn exact(value: T) -> Self {
        Measured { value, censored: false }
    }

    pub fn above(value: T) -> Self {
        Measured { value, censored: true }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Measured<U> {
        Measured { value: f(self.value), censored: self.censored }
    }
}

impl<T: PartialOrd> Measured<T> {
    /// Finite values first, censored after, each group by value.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.censored
            .cmp(&other.censored)
            .then_with(|| self.value.partial_cmp(&other.value).unwrap_or(Ordering::Equal))
    }
}

impl<T: fmt::Display> fmt::Display for Measured<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.censored {
            write!(f, ">{}", self.value)
        } else {
            write!(f, "{}", self.value)
        }
    }
}

/// Per-solver success statistics against one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solver: String,
    /// Sweeps per sample, for tie-breaking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<u64>,
    pub target: TargetSpec,
    pub hits: u64,
    pub trials: u64,
    /// Gauge batches containing a hit, out of `batches`; 1 of 1 for software.
    pub batch_hits: u64,
    pub batches: u64,
    pub stt: Measured<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttt_anneal: Option<Measured<Nanos>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttt_total: Option<Measured<Nanos>>,
}

impl SolverStats {
    pub fn p_t(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    pub fn p_g(&self) -> f64 {
        self.batch_hits as f64 / self.batches as f64
    }

    pub fn censored(&self) -> bool {
        self.hits == 0
    }

    pub fn metric(&self, m: Metric) -> Option<Measured<f64>> {
        match m {
            Metric::Stt => Some(self.stt),
            Metric::TttAnneal => self.ttt_anneal.map(|t| t.map(Nanos::as_f64)),
            Metric::TttTotal => self.ttt_total.map(|t| t.map(Nanos::as_f64)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Stt,
    TttAnneal,
    TttTotal,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Stt, Metric::TttAnneal, Metric::TttTotal];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Stt => "stt",
            Metric::TttAnneal => "ttt_anneal_ns",
            Metric::TttTotal => "ttt_total_ns",
        }
    }
}

fn count_hits(set: &SampleSet, t: &TargetSpec) -> u64 {
    set.energies().filter(|&e| e <= t.energy).count() as u64
}

/// Fraction of gauge batches with at least one hit, as (hits, batches).
/// Sets without batches count as one successful batch.
pub fn gauge_success(set: &SampleSet, t: &TargetSpec) -> Result<(u64, u64), MetricsError> {
    if set.is_empty() {
        return Err(MetricsError::Empty);
    }
    let Some(batches) = set.batches() else {
        return Ok((1, 1));
    };
    let hit = batches.iter().filter(|b| b.iter().any(|&i| set.samples[i].energy <= t.energy)).count();
    Ok((hit as u64, batches.len() as u64))
}

/// Like [`gauge_success`] but refusing sets without batch structure.
pub fn gauge_success_strict(set: &SampleSet, t: &TargetSpec) -> Result<(u64, u64), MetricsError> {
    if !set.has_batches() {
        return Err(MetricsError::NoBatches);
    }
    gauge_success(set, t)
}

/// Empirical success probability and `STT = 1 / p_t`.
pub fn stt(set: &SampleSet, t: &TargetSpec) -> Result<SolverStats, MetricsError> {
    let (batch_hits, batches) = gauge_success(set, t)?;
    let hits = count_hits(set, t);
    Ok(stats_from_counts(set.solver.to_string(), set.solver.sweeps(), *t, hits, set.len() as u64, batch_hits, batches))
}

pub fn stats_from_counts(
    solver: String,
    sweeps: Option<u64>,
    target: TargetSpec,
    hits: u64,
    trials: u64,
    batch_hits: u64,
    batches: u64,
) -> SolverStats {
    let stt = if hits == 0 { Measured::above(trials as f64) } else { Measured::exact(trials as f64 / hits as f64) };
    SolverStats { solver, sweeps, target, hits, trials, batch_hits, batches, stt, ttt_anneal: None, ttt_total: None }
}

/// `round(a * b / c)` with halves up.
fn mul_div_round(a: u64, b: u64, c: u64) -> u64 {
    let (a, b, c) = (a as u128, b as u128, c as u128);
    ((2 * a * b + c) / (2 * c)) as u64
}

/// Fill in TTT from a timing model:
/// `TTT_anneal = t_a / p_t`, `TTT_total = t_i / p_g + (t_a + t_r) / p_t`.
///
/// With `timing.batch = W > 1`, `t_a` and `t_r` are per batch of `W` samples
/// and `p_t` is replaced by the batch success probability `1 - (1 - p_t)^W`.
/// Censored stats use one hit (and one successful batch) as a lower bound.
pub fn ttt(stats: &SolverStats, timing: &TimingModel) -> SolverStats {
    let mut out = stats.clone();
    let censored = stats.censored();
    let hits = stats.hits.max(1);
    let bhits = stats.batch_hits.max(1);
    let (anneal, total) = if timing.batch <= 1 {
        let a = mul_div_round(timing.t_a.0, stats.trials, hits);
        // t_i B / b + t_s N / k over the common denominator b k
        let num = timing.t_i.0 as u128 * stats.batches as u128 * hits as u128
            + timing.sample_time().0 as u128 * stats.trials as u128 * bhits as u128;
        let den = bhits as u128 * hits as u128;
        (Nanos(a), Nanos(((2 * num + den) / (2 * den)) as u64))
    } else {
        let p = batch_probability(hits as f64 / stats.trials as f64, timing.batch);
        let pg = bhits as f64 / stats.batches as f64;
        let a = timing.t_a.as_f64() / p;
        let total = timing.t_i.as_f64() / pg + timing.sample_time().as_f64() / p;
        (Nanos(a.round() as u64), Nanos(total.round() as u64))
    };
    let wrap = |v| Measured { value: v, censored };
    out.ttt_anneal = Some(wrap(anneal));
    out.ttt_total = Some(wrap(total));
    out
}

/// Probability that a batch of `w` independent samples contains a hit.
pub fn batch_probability(p: f64, w: u32) -> f64 {
    if w <= 1 {
        return p;
    }
    // 1 - (1-p)^w without cancellation for small p
    -f64::exp_m1(w as f64 * f64::ln_1p(-p))
}

/// Published single-threaded timings of an external annealing code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalTiming {
    pub name: String,
    pub t_i: Nanos,
    pub flips_per_ns: f64,
    /// Samples produced together by one anneal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u32>,
}

impl ExternalTiming {
    /// Multi-spin coded code, 64 replicas per anneal.
    pub fn an_ms_r1_nf() -> Self {
        ExternalTiming { name: "an_ms_r1_nf".into(), t_i: Nanos(600_000), flips_per_ns: 6.65, batch: Some(64) }
    }

    /// Scalar code with a general-range kernel.
    pub fn an_ss_ge_fi() -> Self {
        ExternalTiming { name: "an_ss_ge_fi".into(), t_i: Nanos(69_000_000), flips_per_ns: 0.30, batch: None }
    }

    pub fn time_per_flip_ns(&self) -> f64 {
        1.0 / self.flips_per_ns
    }

    pub fn time_per_sweep_ns(&self, spins: usize) -> f64 {
        spins as f64 / self.flips_per_ns
    }

    /// Anneal time of a single sample.
    pub fn anneal_ns(&self, spins: usize, sweeps: u64) -> f64 {
        sweeps as f64 * self.time_per_sweep_ns(spins)
    }

    /// Timing model in the batch bookkeeping: with width `W`, `t_a` covers a
    /// whole batch of `W` samples.
    pub fn timing(&self, spins: usize, sweeps: u64) -> TimingModel {
        let w = self.batch.unwrap_or(1).max(1);
        let t_a = Nanos((self.anneal_ns(spins, sweeps) * w as f64).round() as u64);
        let mut t = TimingModel::software(self.t_i, t_a);
        t.batch = w;
        t
    }
}

/// TTT of an external code, reusing success counts measured with an
/// in-house sampler of the same sweep count. Greedy post-processing time is
/// not charged.
pub fn estimate_external_ttt(
    stats: &SolverStats,
    ext: &ExternalTiming,
    spins: usize,
) -> Result<SolverStats, MetricsError> {
    let sweeps = stats.sweeps.ok_or_else(|| MetricsError::Mismatch(format!("{} has no sweep count", stats.solver)))?;
    if spins == 0 {
        return Err(MetricsError::Mismatch("instance has no spins".into()));
    }
    let mut out = ttt(stats, &ext.timing(spins, sweeps));
    out.solver = format!("{}@{}", ext.name, stats.solver);
    Ok(out)
}

/// Median with an order-statistic confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianCi {
    pub median: Measured<f64>,
    pub lower: Measured<f64>,
    pub upper: Measured<f64>,
    /// 1-based order statistics used for the bounds.
    pub lower_rank: usize,
    pub upper_rank: usize,
    pub n: usize,
    pub censored: usize,
}

/// CDF of Binomial(n, 1/2) at 0..=n.
fn half_binomial_cdf(n: usize) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut log_c = 0.0f64;
    let mut cdf = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        acc += (log_c - n as f64 * ln2).exp();
        cdf.push(acc);
    }
    cdf
}

/// Ranks `(j, k)` of the shortest order-statistic interval `[x_(j), x_(k)]`
/// whose coverage of the population median, `P(j <= B <= k - 1)` with
/// `B ~ Binomial(n, 1/2)`, reaches `level`. Ties go to the smaller `j`. When
/// no interval qualifies the whole range `(1, n)` is used.
pub fn median_ci_ranks(n: usize, level: f64) -> (usize, usize) {
    let cdf = half_binomial_cdf(n);
    let below = |m: usize| if m == 0 { 0.0 } else { cdf[m - 1] };
    for width in 0..n {
        for j in 1..=n - width {
            let k = j + width;
            if cdf[k - 1] - below(j) >= level {
                return (j, k);
            }
        }
    }
    (1, n)
}

/// Sample median and confidence interval. Censored values sort above all
/// finite ones; the median of an even count is the mean of the two middle
/// values and is censored when either is.
pub fn median_ci(values: &[Measured<f64>], level: f64) -> Result<MedianCi, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.rank_cmp(b));
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        Measured { value: (a.value + b.value) / 2.0, censored: a.censored || b.censored }
    };
    let (j, k) = median_ci_ranks(n, level);
    Ok(MedianCi {
        median,
        lower: v[j - 1],
        upper: v[k - 1],
        lower_rank: j,
        upper_rank: k,
        n,
        censored: v.iter().filter(|x| x.censored).count(),
    })
}

/// Per-input software over reference ratios and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePerformance {
    pub ratios: Vec<(String, Measured<f64>)>,
    pub aggregate: MedianCi,
}

/// `software / reference` per input. A ratio is censored (a lower bound)
/// when the software value is; a censored reference value also flags it.
pub fn relative_performance(
    software: &[(String, Measured<f64>)],
    reference: &[(String, Measured<f64>)],
    level: f64,
) -> Result<RelativePerformance, MetricsError> {
    if software.len() != reference.len() {
        return Err(MetricsError::Mismatch(format!("{} software vs {} reference inputs", software.len(), reference.len())));
    }
    let mut ratios = Vec::with_capacity(software.len());
    for ((sid, s), (rid, r)) in software.iter().zip(reference) {
        if sid != rid {
            return Err(MetricsError::Mismatch(format!("{sid} vs {rid}")));
        }
        if r.value <= 0.0 {
            return Err(MetricsError::Mismatch(format!("non-positive reference value for {rid}")));
        }
        ratios.push((sid.clone(), Measured { value: s.value / r.value, censored: s.censored || r.censored }));
    }
    let values: Vec<_> = ratios.iter().map(|(_, m)| *m).collect();
    let aggregate = median_ci(&values, level)?;
    Ok(RelativePerformance { ratios, aggregate })
}

/// Fastest entry under `metric`: smallest value, finite before censored,
/// then fewer sweeps, then solver id. Entries lacking the metric are ignored.
pub fn portfolio_best(entries: &[SolverStats], metric: Metric) -> Option<&SolverStats> {
    entries.iter().filter(|s| s.metric(metric).is_some()).min_by(|a, b| {
        let (ma, mb) = (a.metric(metric).unwrap(), b.metric(metric).unwrap());
        ma.rank_cmp(&mb)
            .then_with(|| a.sweeps.unwrap_or(u64::MAX).cmp(&b.sweeps.unwrap_or(u64::MAX)))
            .then_with(|| a.solver.cmp(&b.solver))
    })
}

//! Simulated reference annealer: gauged batches of an inner SA sampler with
//! the hardware timing table attached.

use serde::{Deserialize, Serialize};

use super::sa::{SAParams, SaKernel};
use super::{Sample, SampleSet, ScheduleKind, SolverError, SolverId, TimingModel};
use crate::ising::{GaugeTransform, IsingProblem};
use crate::rng::{derive_seed, rng_from_seed, stream_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub gauges: usize,
    pub samples_per_gauge: usize,
    pub inner: SAParams,
    pub timing: TimingModel,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            gauges: 50,
            samples_per_gauge: 1000,
            inner: SAParams::new(100, ScheduleKind::Scaled),
            timing: TimingModel::reference(),
        }
    }
}

impl ReferenceConfig {
    pub fn id(&self) -> SolverId {
        SolverId::Reference { sweeps: self.inner.sweeps, schedule: self.inner.schedule.kind() }
    }

    pub fn total_samples(&self) -> usize {
        self.gauges * self.samples_per_gauge
    }
}

/// Draw `samples_per_gauge` inner samples under each of `gauges` random gauge
/// transforms. Configurations are mapped back to the nominal problem and
/// tagged with their gauge index.
pub fn reference_sample_run(p: &IsingProblem, cfg: &ReferenceConfig, seed: u64) -> Result<SampleSet, SolverError> {
    if cfg.gauges == 0 || cfg.samples_per_gauge == 0 {
        return Err(SolverError::BadParams("gauge and sample counts must be at least 1".into()));
    }
    cfg.inner.validate()?;
    let n = cfg.total_samples();
    let mut samples = Vec::with_capacity(n);
    let mut configs = Vec::with_capacity(n);
    for g in 0..cfg.gauges {
        let gseed = stream_seed(seed, g as u64);
        let gauge = GaugeTransform::random(p.num_spins(), &mut rng_from_seed(derive_seed(gseed, "gauge")));
        let gauged = p.apply_gauge(&gauge)?;
        let mut kernel = SaKernel::new(&gauged, cfg.inner)?;
        let sample_seed = derive_seed(gseed, "samples");
        for i in 0..cfg.samples_per_gauge {
            let (s, _) = kernel.anneal(&mut rng_from_seed(stream_seed(sample_seed, i as u64)));
            let nominal = s.gauged(&gauge)?;
            let energy = p.energy(&nominal)?;
            samples.push(Sample { energy, anneal: cfg.timing.t_a, work: cfg.inner.sweeps, batch: Some(g as u32) });
            configs.push(nominal);
        }
    }
    Ok(SampleSet { solver: cfg.id(), samples, configs, timing: cfg.timing })
}

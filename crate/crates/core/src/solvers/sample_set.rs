use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Nanos, SolverError, SolverId, TimingModel};
use crate::ising::SpinConfig;

/// Version tag written at the head of every `.samples` file.
pub const SAMPLES_SCHEMA: u32 = 1;

/// One returned solution, without its spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "e")]
    pub energy: i64,
    /// Anneal duration attributed to this sample.
    #[serde(rename = "t")]
    pub anneal: Nanos,
    /// Sweeps (SA) or tree sweeps (HFS) spent on it.
    #[serde(rename = "w")]
    pub work: u64,
    #[serde(rename = "g", default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u32>,
}

/// Ordered samples of one solver on one instance.
///
/// `configs`, when non-empty, is parallel to `samples` and holds the
/// post-processed spins; sample files store energies only, so a set read back
/// from disk has no configs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub solver: SolverId,
    pub samples: Vec<Sample>,
    pub configs: Vec<SpinConfig>,
    pub timing: TimingModel,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    solver: SolverId,
    timing: TimingModel,
    count: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energies(&self) -> impl Iterator<Item = i64> + '_ {
        self.samples.iter().map(|s| s.energy)
    }

    /// Whether samples carry gauge-batch indices. Either all do or none do.
    pub fn has_batches(&self) -> bool {
        self.samples.first().is_some_and(|s| s.batch.is_some())
    }

    /// Sample indices grouped by batch, in batch order.
    pub fn batches(&self) -> Option<Vec<Vec<usize>>> {
        if !self.has_batches() {
            return None;
        }
        let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for (i, s) in self.samples.iter().enumerate() {
            groups.entry(s.batch?).or_default().push(i);
        }
        Some(groups.into_values().collect())
    }

    /// Mean work units per sample.
    pub fn mean_work(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.work as f64).sum::<f64>() / self.samples.len() as f64
    }

    /// Write as JSON lines: a header record then one record per sample.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header { schema: SAMPLES_SCHEMA, solver: self.solver, timing: self.timing, count: self.samples.len() };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SolverError> {
        let fmt = |e: &dyn std::fmt::Display| SolverError::Format(e.to_string());
        let mut lines = r.lines();
        let head = lines.next().ok_or_else(|| fmt(&"empty file"))?.map_err(|e| fmt(&e))?;
        let header: Header = serde_json::from_str(&head).map_err(|e| fmt(&e))?;
        if header.schema != SAMPLES_SCHEMA {
            return Err(fmt(&format!("unsupported schema {}", header.schema)));
        }
        let mut samples = Vec::with_capacity(header.count);
        for line in lines {
            let line = line.map_err(|e| fmt(&e))?;
            if line.is_empty() {
                continue;
            }
            samples.push(serde_json::from_str(&line).map_err(|e| fmt(&e))?);
        }
        if samples.len() != header.count {
            return Err(fmt(&format!("expected {} samples, found {}", header.count, samples.len())));
        }
        Ok(SampleSet { solver: header.solver, samples, configs: Vec::new(), timing: header.timing })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let set = SampleSet {
            solver: SolverId::Hfs,
            samples: vec![
                Sample { energy: -3, anneal: Nanos(10), work: 2, batch: Some(0) },
                Sample { energy: -5, anneal: Nanos(12), work: 3, batch: Some(1) },
            ],
            configs: vec![],
            timing: TimingModel::reference(),
        };
        let bytes = set.to_bytes();
        let back = SampleSet::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.batches().unwrap(), vec![vec![0], vec![1]]);
        assert!(SampleSet::read_from(&bytes[..bytes.len() - 20]).is_err());
    }
}

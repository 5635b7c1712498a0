use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pipeline::{read_results, Record, SOFTWARE};
use super::{write_file, ExperimentConfig, HarnessError, Layout};
use crate::metrics::{median_ci, relative_performance, MedianCi, Metric, RelativePerformance, SolverStats};

const REPORT_SCHEMA: u32 = 1;

/// Aggregate of one (class, size, solver, quantile, metric) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub class: String,
    pub size: usize,
    pub solver: String,
    pub family: String,
    pub quantile: f64,
    pub metric: Metric,
    pub instances: usize,
    pub measured: usize,
    pub censored: usize,
    pub skipped: usize,
    pub missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<MedianCi>,
    /// Portfolio rows: how often each parameterization was selected.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub winners: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRelative {
    pub class: String,
    pub size: usize,
    pub quantile: f64,
    pub metric: Metric,
    pub software: String,
    pub reference: String,
    #[serde(flatten)]
    pub result: RelativePerformance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub seed: u64,
    pub instances_per_cell: usize,
    pub confidence: f64,
    pub cells: Vec<ReportCell>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative: Option<Vec<ReportRelative>>,
    pub notices: Vec<String>,
}

impl Report {
    /// Cells whose counts do not cover every instance, or with missing results.
    pub fn dropped_cells(&self) -> Vec<&ReportCell> {
        self.cells
            .iter()
            .filter(|c| c.missing > 0 || c.measured + c.skipped + c.missing != c.instances)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "class,size,solver,family,quantile,metric,instances,measured,censored,skipped,missing,\
             median,median_censored,ci_lower,ci_upper,ci_lower_rank,ci_upper_rank\n",
        );
        for c in &self.cells {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},",
                c.class,
                c.size,
                c.solver,
                c.family,
                c.quantile,
                c.metric.name(),
                c.instances,
                c.measured,
                c.censored,
                c.skipped,
                c.missing
            )
            .unwrap();
            match &c.summary {
                Some(s) => writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    s.median.value, s.median.censored, s.lower.value, s.upper.value, s.lower_rank, s.upper_rank
                )
                .unwrap(),
                None => out.push_str(",,,,,\n"),
            }
        }
        out
    }

    pub fn relative_csv(&self) -> Option<String> {
        let rel = self.relative.as_ref()?;
        let mut out = String::from("class,size,quantile,metric,instances,censored,median,median_censored,ci_lower,ci_upper\n");
        for r in rel {
            let a = &r.result.aggregate;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.class,
                r.size,
                r.quantile,
                r.metric.name(),
                a.n,
                a.censored,
                a.median.value,
                a.median.censored,
                a.lower.value,
                a.upper.value
            )
            .unwrap();
        }
        Some(out)
    }
}

enum Entry<'a> {
    Stats(&'a [SolverStats]),
    Skip,
    Best(Option<&'a SolverStats>),
}

fn lookup<'a>(recs: &'a [Record], label: &str, metric: Metric, q: f64) -> Option<Entry<'a>> {
    recs.iter().find_map(|r| match r {
        Record::Solver { solver, stats, .. } if solver == label => Some(Entry::Stats(stats)),
        Record::Skip { solver, .. } if solver == label => Some(Entry::Skip),
        Record::Portfolio { family, metric: m, q: pq, best }
            if label.strip_prefix("best:") == Some(family.as_str()) && *m == metric && *pq == q =>
        {
            Some(Entry::Best(best.as_ref()))
        }
        _ => None,
    })
}

/// Aggregate persisted results. Pure in the results files and the config.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let layout = cfg.layout();
    let quantiles = cfg.quantile_list();
    let rid = cfg.reference_config().id().to_string();
    let mut cells = Vec::new();
    let mut relative = Vec::new();
    let mut any_results = false;
    let mut have_ref = false;
    let mut have_software = false;
    let mut sizes = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    for class in &cfg.classes {
        for &size in &sizes {
            let keys: Vec<_> = cfg.instance_keys().into_iter().filter(|k| k.class == *class && k.size == size).collect();
            let mut per_instance: Vec<Option<Vec<Record>>> = Vec::with_capacity(keys.len());
            for key in &keys {
                match read_results(&layout.results(key)) {
                    Ok(r) if r.done => {
                        any_results = true;
                        per_instance.push(Some(r.records));
                    }
                    Ok(_) | Err(HarnessError::Missing(_)) => per_instance.push(None),
                    Err(e) => return Err(e),
                }
            }
            // labels in first-appearance order
            let mut labels: Vec<(String, String)> = Vec::new();
            for recs in per_instance.iter().flatten() {
                for r in recs {
                    let (label, family) = match r {
                        Record::Solver { solver, family, .. } | Record::Skip { solver, family, .. } => {
                            (solver.clone(), family.clone())
                        }
                        Record::Portfolio { family, .. } => (format!("best:{family}"), family.clone()),
                        _ => continue,
                    };
                    if !labels.iter().any(|(l, _)| *l == label) {
                        labels.push((label, family));
                    }
                }
            }
            for (label, family) in &labels {
                for (qi, &q) in quantiles.iter().enumerate() {
                    for metric in Metric::ALL {
                        let mut values = Vec::new();
                        let (mut skipped, mut missing) = (0, 0);
                        let mut winners = BTreeMap::new();
                        for recs in &per_instance {
                            let Some(recs) = recs else {
                                missing += 1;
                                continue;
                            };
                            match lookup(recs, label, metric, q) {
                                Some(Entry::Stats(stats)) => match stats.get(qi).and_then(|s| s.metric(metric)) {
                                    Some(v) => values.push(v),
                                    None => missing += 1,
                                },
                                Some(Entry::Best(Some(s))) => match s.metric(metric) {
                                    Some(v) => {
                                        values.push(v);
                                        *winners.entry(s.solver.clone()).or_insert(0) += 1;
                                    }
                                    None => missing += 1,
                                },
                                Some(Entry::Skip) | Some(Entry::Best(None)) => skipped += 1,
                                None => missing += 1,
                            }
                        }
                        if family == "ref" && !values.is_empty() {
                            have_ref = true;
                        }
                        if label == &format!("best:{SOFTWARE}") && !values.is_empty() {
                            have_software = true;
                        }
                        let summary = if values.is_empty() { None } else { Some(median_ci(&values, cfg.confidence)?) };
                        cells.push(ReportCell {
                            class: class.to_string(),
                            size,
                            solver: label.clone(),
                            family: family.clone(),
                            quantile: q,
                            metric,
                            instances: keys.len(),
                            measured: values.len(),
                            censored: values.iter().filter(|v| v.censored).count(),
                            skipped,
                            missing,
                            summary,
                            winners,
                        });
                    }
                }
            }

            let software = format!("best:{SOFTWARE}");
            for (qi, &q) in quantiles.iter().enumerate() {
                for metric in [Metric::TttAnneal, Metric::TttTotal] {
                    let mut soft = Vec::new();
                    let mut refs = Vec::new();
                    for (key, recs) in keys.iter().zip(&per_instance) {
                        let Some(recs) = recs else { continue };
                        let s = match lookup(recs, &software, metric, q) {
                            Some(Entry::Best(Some(s))) => s.metric(metric),
                            _ => None,
                        };
                        let r = match lookup(recs, &rid, metric, q) {
                            Some(Entry::Stats(stats)) => stats.get(qi).and_then(|s| s.metric(metric)),
                            _ => None,
                        };
                        if let (Some(s), Some(r)) = (s, r) {
                            soft.push((key.label(), s));
                            refs.push((key.label(), r));
                        }
                    }
                    if soft.is_empty() {
                        continue;
                    }
                    relative.push(ReportRelative {
                        class: class.to_string(),
                        size,
                        quantile: q,
                        metric,
                        software: software.clone(),
                        reference: rid.clone(),
                        result: relative_performance(&soft, &refs, cfg.confidence)?,
                    });
                }
            }
        }
    }
    if !any_results {
        return Err(HarnessError::Missing(layout.root().join("results")));
    }
    let mut notices = Vec::new();
    let relative = if have_ref && have_software && !relative.is_empty() {
        Some(relative)
    } else {
        notices.push("relative performance omitted: results lack a reference and software pair".to_string());
        None
    };
    let dropped = cells.iter().filter(|c| c.missing > 0).count();
    if dropped > 0 {
        notices.push(format!("{dropped} cells have missing instance results"));
    }
    Ok(Report {
        schema: REPORT_SCHEMA,
        seed: cfg.seed,
        instances_per_cell: cfg.instances_per_cell,
        confidence: cfg.confidence,
        cells,
        relative,
        notices,
    })
}

/// Write `report.csv`, `report.json` and, when present, `relative.csv`.
pub fn write_report(layout: &Layout, report: &Report) -> Result<(), HarnessError> {
    write_file(&layout.report_csv(), report.to_csv().as_bytes())?;
    write_file(&layout.report_json(), report.to_json().as_bytes())?;
    match report.relative_csv() {
        Some(text) => write_file(&layout.relative_csv(), text.as_bytes()),
        None => match std::fs::remove_file(layout.relative_csv()) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(HarnessError::io(&layout.relative_csv(), e)),
        },
    }
}

//! AIMD threshold search, coverage scoring, and the iteration log.
//!
//! The search runs topology-aware selection for a fixed number of
//! iterations, adjusting ε additively upward while the subset size stays
//! within tolerance of every size seen so far, and multiplicatively
//! downward otherwise. Every iteration's subset, size, and coverage is
//! logged so operators can pick their own point on the size/coverage
//! trade-off.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infotheory::{correlation_matrix, CorrelationMatrix, InfoError};
use crate::model::{
    AimdIteration, AimdLog, AimdParams, AnomalyLabelSet, CorrelationMethod, MetricId, MetricTable,
    ModelError, SubsetMapping, Topology, TraceSet,
};
use crate::topology::{SelectionContext, TopoError, TopoSelectOptions};

#[derive(Debug, Error)]
pub enum AimdError {
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("anomaly label set is empty; anomaly coverage is undefined")]
    EmptyLabels,
    #[error("metric {0} is not present in the correlation matrix")]
    UnknownMetric(MetricId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("log serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("log csv failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Which metrics a subset covers, and the resulting fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub covered: BTreeSet<MetricId>,
    pub coverage: f64,
    pub theta: f64,
    pub method: CorrelationMethod,
}

/// Coverage C(Γ): the fraction of all metrics either selected or
/// associated strictly above θ with some selected metric.
pub fn coverage(
    mapping: &SubsetMapping,
    corr: &CorrelationMatrix,
    theta: f64,
) -> Result<CoverageReport, AimdError> {
    let selected: BTreeSet<&MetricId> = mapping.selected().collect();
    for id in &selected {
        if !corr.contains(id) {
            return Err(AimdError::UnknownMetric((*id).clone()));
        }
    }
    let covered = covered_set(&selected, corr.ids().iter(), corr, theta);
    let total = corr.len();
    Ok(CoverageReport {
        coverage: if total == 0 {
            0.0
        } else {
            covered.len() as f64 / total as f64
        },
        covered,
        theta,
        method: corr.method(),
    })
}

/// Anomaly coverage C_A: the same rule restricted to σ_A, with |σ_A| as
/// the denominator.
pub fn anomaly_coverage(
    mapping: &SubsetMapping,
    labels: &AnomalyLabelSet,
    corr: &CorrelationMatrix,
    theta: f64,
) -> Result<CoverageReport, AimdError> {
    if labels.is_empty() {
        return Err(AimdError::EmptyLabels);
    }
    let selected: BTreeSet<&MetricId> = mapping.selected().collect();
    let covered = covered_set(&selected, labels.impacted.iter(), corr, theta);
    Ok(CoverageReport {
        coverage: covered.len() as f64 / labels.impacted.len() as f64,
        covered,
        theta,
        method: corr.method(),
    })
}

fn covered_set<'a>(
    selected: &BTreeSet<&MetricId>,
    universe: impl Iterator<Item = &'a MetricId>,
    corr: &CorrelationMatrix,
    theta: f64,
) -> BTreeSet<MetricId> {
    universe
        .filter(|id| {
            selected.contains(id)
                || selected.iter().any(|s| {
                    // Self-association on the diagonal never covers an
                    // unselected metric.
                    *s != *id && corr.get(id, s).map(f64::abs).unwrap_or(0.0) > theta
                })
        })
        .cloned()
        .collect()
}

/// Runs the AIMD search and returns the best subset plus the full log.
///
/// "Best" is the maximum-coverage entry, with ties going to the smallest
/// subset and then the earliest iteration.
pub fn aimd_select(
    t: &Topology,
    table: &MetricTable,
    traces: &TraceSet,
    params: &AimdParams,
) -> Result<(SubsetMapping, AimdLog), AimdError> {
    params.validate()?;
    let corr = correlation_matrix(table, params.correlation_method, params.bins)?;
    let ctx = SelectionContext::build(
        t,
        table,
        traces,
        TopoSelectOptions {
            bins: params.bins,
            ..Default::default()
        },
    )?;

    let mut subset_sizes: BTreeSet<usize> = [table.len()].into_iter().collect();
    let mut epsilon = params.epsilon0;
    let mut log = AimdLog::default();

    for index in 1..=params.eta {
        let mapping = ctx.select(epsilon)?;
        let xi = mapping.total_size();
        let report = coverage(&mapping, &corr, params.theta)?;
        let within_tolerance = subset_sizes
            .iter()
            .all(|&s| (xi as f64 - s as f64).abs() < params.tau);
        log.iterations.push(AimdIteration {
            index,
            epsilon,
            mapping,
            xi,
            coverage: report.coverage,
            within_tolerance,
        });
        epsilon = if within_tolerance {
            epsilon + params.beta
        } else {
            epsilon * params.alpha
        };
        subset_sizes.insert(xi);
    }

    let best = log
        .iterations
        .iter()
        .min_by(|a, b| {
            b.coverage
                .partial_cmp(&a.coverage)
                .unwrap()
                .then(a.xi.cmp(&b.xi))
                .then(a.index.cmp(&b.index))
        })
        .expect("eta >= 1 guarantees at least one iteration")
        .mapping
        .clone();

    Ok((best, log))
}

/// CSV row mirror of one log entry (assignments live in the JSON sidecar).
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub epsilon: f64,
    pub subset_size: usize,
    pub coverage: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogEntryJson {
    iteration: usize,
    epsilon: f64,
    subset_size: usize,
    coverage: f64,
    within_tolerance: bool,
    assignments: std::collections::BTreeMap<String, Vec<String>>,
}

/// Writes the per-iteration CSV plus a JSON sidecar (same stem, `.json`)
/// carrying the full per-microservice assignments.
pub fn export_log(log: &AimdLog, csv_path: &Path) -> Result<(), AimdError> {
    let mut w = csv::Writer::from_path(csv_path)?;
    for it in &log.iterations {
        w.serialize(LogRow {
            iteration: it.index,
            epsilon: it.epsilon,
            subset_size: it.xi,
            coverage: it.coverage,
            within_tolerance: it.within_tolerance,
        })
        .map_err(|e| AimdError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;

    let sidecar: PathBuf = csv_path.with_extension("json");
    let entries: Vec<LogEntryJson> = log
        .iterations
        .iter()
        .map(|it| LogEntryJson {
            iteration: it.index,
            epsilon: it.epsilon,
            subset_size: it.xi,
            coverage: it.coverage,
            within_tolerance: it.within_tolerance,
            assignments: it
                .mapping
                .assignments
                .iter()
                .map(|(m, set)| (m.clone(), set.iter().map(|id| id.name.clone()).collect()))
                .collect(),
        })
        .collect();
    let mut f = std::fs::File::create(sidecar)?;
    serde_json::to_writer_pretty(&mut f, &entries)?;
    writeln!(f)?;
    Ok(())
}

/// Parses rows back out of an exported CSV.
pub fn read_log_csv(path: &Path) -> Result<Vec<LogRow>, AimdError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<Result<Vec<LogRow>, _>>()
        .map_err(|e| AimdError::Io(std::io::Error::other(e)))
}

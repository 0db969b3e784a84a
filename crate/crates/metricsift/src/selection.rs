//! Greedy per-microservice metric subset selection.
//!
//! Candidates are scanned in non-increasing entropy order; a candidate is
//! admitted iff its mutual information with every already-selected metric
//! and every pivot metric stays at or below the threshold ε.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::infotheory::{entropy, mutual_information, DiscreteSeries, InfoError};
use crate::model::MetricId;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("pivot metric {0} has no resolvable series")]
    UnresolvedPivot(MetricId),
    #[error(transparent)]
    Info(#[from] InfoError),
}

/// Metrics already fixed for upstream microservices (π).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PivotSet {
    pub metrics: BTreeSet<MetricId>,
}

impl PivotSet {
    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }
}

/// Selects σ_m ⊆ Ψ_m under threshold ε against a pivot set.
///
/// Zero-entropy metrics never appear. With an empty pivot the max-entropy
/// metric seeds the subset; with a non-empty pivot the subset starts empty.
/// Entropy ties in the scan order break lexicographically by id, so the
/// result is deterministic. Pivot metrics are never re-emitted.
pub fn select_subset(
    candidates: &BTreeMap<MetricId, DiscreteSeries>,
    pivot: &PivotSet,
    resolver: &BTreeMap<MetricId, DiscreteSeries>,
    epsilon: f64,
) -> Result<BTreeSet<MetricId>, SelectionError> {
    let pivot_series: Vec<&DiscreteSeries> = pivot
        .metrics
        .iter()
        .map(|id| {
            resolver
                .get(id)
                .ok_or_else(|| SelectionError::UnresolvedPivot(id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut ranked: Vec<(&MetricId, &DiscreteSeries, f64)> = candidates
        .iter()
        .filter(|(id, _)| !pivot.metrics.contains(*id))
        .map(|(id, d)| (id, d, entropy(d)))
        .filter(|(_, _, h)| *h > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then_with(|| a.0.cmp(b.0)));

    let mut selected: BTreeSet<MetricId> = BTreeSet::new();
    let mut selected_series: Vec<&DiscreteSeries> = Vec::new();

    let mut scan = ranked.into_iter();
    if pivot.is_empty() {
        if let Some((id, d, _)) = scan.next() {
            selected.insert(id.clone());
            selected_series.push(d);
        }
    }

    for (id, d, _) in scan {
        let mut admit = true;
        for prior in selected_series.iter().chain(&pivot_series) {
            if mutual_information(prior, d)? > epsilon {
                admit = false;
                break;
            }
        }
        if admit {
            selected.insert(id.clone());
            selected_series.push(d);
        }
    }

    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::discretize_values;

    fn id(n: &str) -> MetricId {
        MetricId::new("m", n).unwrap()
    }

    fn candidates(entries: &[(&str, &[f64])], bins: u32) -> BTreeMap<MetricId, DiscreteSeries> {
        entries
            .iter()
            .map(|(n, v)| (id(n), discretize_values(v, bins)))
            .collect()
    }

    #[test]
    fn all_constant_metrics_yield_empty_subset() {
        let cands = candidates(&[("a", &[1.0, 1.0, 1.0]), ("b", &[2.0, 2.0, 2.0])], 4);
        let out = select_subset(&cands, &PivotSet::default(), &BTreeMap::new(), 0.5).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn duplicate_excluded_independent_admitted() {
        // x and x_copy carry identical information; z alternates out of
        // phase with period 4 so the empirical joint with x factorizes.
        let x: &[f64] = &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let z: &[f64] = &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let cands = candidates(&[("x", x), ("x_copy", x), ("z", z)], 2);
        let out = select_subset(&cands, &PivotSet::default(), &BTreeMap::new(), 0.01).unwrap();
        let expect: BTreeSet<MetricId> = [id("x"), id("z")].into_iter().collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn pivot_identical_to_only_candidate_rejects_it() {
        let x: &[f64] = &[0.0, 1.0, 0.0, 1.0];
        let cands = candidates(&[("x", x)], 2);
        let pid = MetricId::new("p", "x").unwrap();
        let pivot = PivotSet {
            metrics: [pid.clone()].into_iter().collect(),
        };
        let resolver: BTreeMap<MetricId, DiscreteSeries> =
            [(pid, discretize_values(x, 2))].into_iter().collect();
        let out = select_subset(&cands, &pivot, &resolver, 0.01).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn unresolved_pivot_errors() {
        let cands = candidates(&[("x", &[0.0, 1.0])], 2);
        let pivot = PivotSet {
            metrics: [MetricId::new("p", "ghost").unwrap()].into_iter().collect(),
        };
        let err = select_subset(&cands, &pivot, &BTreeMap::new(), 0.5).unwrap_err();
        assert!(matches!(err, SelectionError::UnresolvedPivot(_)));
    }

    #[test]
    fn monotone_in_epsilon() {
        let series: Vec<(&str, Vec<f64>)> = vec![
            ("a", vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]),
            ("b", vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]),
            ("c", vec![3.0, 1.0, 2.0, 0.0, 3.0, 2.0, 1.0, 0.0]),
            ("d", vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]),
        ];
        let entries: Vec<(&str, &[f64])> = series.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        let cands = candidates(&entries, 4);
        let mut prev: Option<BTreeSet<MetricId>> = None;
        for eps in [0.01, 0.1, 0.5, 1.0, 2.0] {
            let out = select_subset(&cands, &PivotSet::default(), &BTreeMap::new(), eps).unwrap();
            if let Some(p) = &prev {
                assert!(p.is_subset(&out), "selection not monotone at eps={eps}");
            }
            prev = Some(out);
        }
    }
}

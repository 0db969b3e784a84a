//! Exact brute-force solvers and naive direct-definition evaluators,
//! used to validate the greedy pipeline on tiny instances.
//!
//! Everything here deliberately avoids sharing code with the fast paths
//! it checks: entropy and mutual information are evaluated by scanning
//! symbol ranges with nested loops, and the exact subset solver
//! enumerates all 2^n candidate subsets.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::infotheory::{CorrelationMatrix, DiscreteSeries};
use crate::model::MetricId;

/// Hard cap on exact enumeration (2^20 subsets).
pub const SIZE_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} metrics exceed the exact-solver cap of {SIZE_CAP}")]
    SizeCap(usize),
}

/// An exact subset-selection instance: threshold ε and cardinality bound χ.
#[derive(Clone, Debug)]
pub struct OracleProblem {
    pub metrics: Vec<(MetricId, DiscreteSeries)>,
    pub epsilon: f64,
    pub chi: usize,
}

/// Entropy by direct definition: scan every possible symbol, count it with
/// a full pass, and accumulate −p·log₂p.
pub fn naive_entropy(d: &DiscreteSeries) -> f64 {
    let n = d.len() as f64;
    let mut h = 0.0;
    for symbol in 0..d.bin_count() {
        let count = d.symbols().iter().filter(|&&s| s == symbol).count();
        if count > 0 {
            let p = count as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Mutual information by direct definition: nested loop over the full
/// symbol-pair grid, counting each joint cell with a full scan.
pub fn naive_mutual_information(a: &DiscreteSeries, b: &DiscreteSeries) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut mi = 0.0;
    for x in 0..a.bin_count() {
        let p_x = a.symbols().iter().filter(|&&s| s == x).count() as f64 / n;
        if p_x == 0.0 {
            continue;
        }
        for y in 0..b.bin_count() {
            let p_y = b.symbols().iter().filter(|&&s| s == y).count() as f64 / n;
            if p_y == 0.0 {
                continue;
            }
            let joint = a
                .symbols()
                .iter()
                .zip(b.symbols())
                .filter(|&(&sa, &sb)| sa == x && sb == y)
                .count() as f64
                / n;
            if joint > 0.0 {
                mi += joint * (joint / (p_x * p_y)).log2();
            }
        }
    }
    mi
}

/// Coverage by direct re-evaluation of the set definition: a metric is
/// covered iff selected, or some distinct selected metric associates with
/// it strictly above θ.
pub fn naive_coverage(
    selected: &BTreeSet<MetricId>,
    corr: &CorrelationMatrix,
    theta: f64,
) -> f64 {
    if corr.is_empty() {
        return 0.0;
    }
    let mut covered = 0usize;
    for id in corr.ids() {
        let hit = selected.contains(id)
            || selected
                .iter()
                .filter(|s| *s != id)
                .any(|s| corr.get(id, s).unwrap().abs() > theta);
        if hit {
            covered += 1;
        }
    }
    covered as f64 / corr.len() as f64
}

/// True iff every distinct pair in `subset` has MI ≤ ε and |subset| ≤ χ.
pub fn check_feasible(
    subset: &BTreeSet<MetricId>,
    series: &BTreeMap<MetricId, DiscreteSeries>,
    epsilon: f64,
    chi: usize,
) -> bool {
    if subset.len() > chi {
        return false;
    }
    let members: Vec<&MetricId> = subset.iter().collect();
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            let mi = naive_mutual_information(&series[members[i]], &series[members[j]]);
            if mi > epsilon {
                return false;
            }
        }
    }
    true
}

/// Evaluates the maximization objective Σ over distinct pairs of M(ψ1,ψ2).
pub fn objective(subset: &BTreeSet<MetricId>, series: &BTreeMap<MetricId, DiscreteSeries>) -> f64 {
    let members: Vec<&MetricId> = subset.iter().collect();
    let mut total = 0.0;
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            total += naive_mutual_information(&series[members[i]], &series[members[j]]);
        }
    }
    total
}

/// Enumerates all subsets and returns a feasible one maximizing the
/// pairwise-MI objective. Objective ties break toward larger cardinality
/// (all-zero-MI pairs cost nothing to include), then lexicographically
/// smaller id sets, so the result is invariant to the input order of
/// `metrics`. The empty set comes back only when it is the sole feasible
/// subset.
pub fn solve_exact(p: &OracleProblem) -> Result<(BTreeSet<MetricId>, f64), OracleError> {
    let n = p.metrics.len();
    if n > SIZE_CAP {
        return Err(OracleError::SizeCap(n));
    }
    let mut entries: Vec<(&MetricId, &DiscreteSeries)> =
        p.metrics.iter().map(|(id, d)| (id, d)).collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));

    let mut mi = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = naive_mutual_information(entries[i].1, entries[j].1);
            mi[i][j] = v;
            mi[j][i] = v;
        }
    }

    let mut best_ids: BTreeSet<MetricId> = BTreeSet::new();
    let mut best_obj = 0.0; // empty set is always feasible
    for mask in 1u32..(1u32 << n) {
        let card = mask.count_ones() as usize;
        if card > p.chi {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut feasible = true;
        let mut obj = 0.0;
        'pairs: for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                if mi[i][j] > p.epsilon {
                    feasible = false;
                    break 'pairs;
                }
                obj += mi[i][j];
            }
        }
        if !feasible {
            continue;
        }
        let ids: BTreeSet<MetricId> = members.iter().map(|&i| entries[i].0.clone()).collect();
        let better = if obj > best_obj + 1e-12 {
            true
        } else if obj >= best_obj - 1e-12 {
            // Objective tie: larger cardinality, then lexicographic ids.
            match ids.len().cmp(&best_ids.len()) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => ids < best_ids,
                std::cmp::Ordering::Less => false,
            }
        } else {
            false
        };
        if better {
            best_obj = obj;
            best_ids = ids;
        }
    }
    Ok((best_ids, best_obj))
}

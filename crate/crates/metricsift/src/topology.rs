//! Topology-aware subset selection.
//!
//! Microservices are processed in level order (longest path from the
//! root); each one is selected against a pivot built from its finalized
//! ancestors, once per root-to-node path with the threshold scaled by the
//! inverse of that path's trace-estimated probability.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::infotheory::{discretize, DiscreteSeries};
use crate::model::{MetricId, MetricTable, PathEpsilon, SubsetMapping, Topology, TraceSet};
use crate::selection::{select_subset, PivotSet, SelectionError};

pub const DEFAULT_PATH_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("path count to {target} exceeds cap {cap}")]
    PathExplosion { target: String, cap: usize },
    #[error("edge ({0}, {1}) has zero trace support; path probability undefined")]
    ZeroSupport(String, String),
    #[error("no traces available for path-probability estimation")]
    EmptyTraceSet,
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

/// L(m): length of the longest path from the root to m.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelAssignment {
    pub level: BTreeMap<String, usize>,
}

pub fn topo_levels(t: &Topology) -> LevelAssignment {
    let mut level: BTreeMap<String, usize> = BTreeMap::new();
    level.insert(t.root().to_string(), 0);
    // Relax edges repeatedly; DAG depth bounds the iteration count.
    let mut changed = true;
    while changed {
        changed = false;
        for (u, v) in t.edges() {
            if let Some(&lu) = level.get(u) {
                let cand = lu + 1;
                let lv = level.entry(v.clone()).or_insert(0);
                if cand > *lv {
                    *lv = cand;
                    changed = true;
                }
            }
        }
    }
    LevelAssignment { level }
}

/// All simple root-to-target paths, in lexicographic hop order.
pub fn enumerate_paths(
    t: &Topology,
    target: &str,
    cap: usize,
) -> Result<Vec<Vec<String>>, TopoError> {
    let mut paths = Vec::new();
    let mut current = vec![t.root().to_string()];
    dfs_paths(t, target, cap, &mut current, &mut paths)?;
    Ok(paths)
}

fn dfs_paths(
    t: &Topology,
    target: &str,
    cap: usize,
    current: &mut Vec<String>,
    out: &mut Vec<Vec<String>>,
) -> Result<(), TopoError> {
    let here = current.last().unwrap().clone();
    if here == target {
        if out.len() >= cap {
            return Err(TopoError::PathExplosion {
                target: target.to_string(),
                cap,
            });
        }
        out.push(current.clone());
        return Ok(());
    }
    // children() returns name-sorted successors, which with DFS yields
    // lexicographic path order.
    for child in t.children(&here) {
        current.push(child.to_string());
        dfs_paths(t, target, cap, current, out)?;
        current.pop();
    }
    Ok(())
}

/// Trace-estimated execution probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PathProbabilityModel {
    /// P(root): fraction of traces starting at the root.
    pub root_prob: f64,
    /// P(v | u) per observed edge; unobserved edges have no entry.
    pub cond: BTreeMap<(String, String), f64>,
}

/// cond[(u,v)] = #traces containing the consecutive hop (u,v) divided by
/// #traces containing u.
pub fn estimate_path_model(
    traces: &TraceSet,
    t: &Topology,
) -> Result<PathProbabilityModel, TopoError> {
    if traces.is_empty() {
        return Err(TopoError::EmptyTraceSet);
    }
    let mut node_support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut edge_support: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut root_starts = 0usize;
    for tr in &traces.traces {
        if tr.hops.first().map(String::as_str) == Some(t.root()) {
            root_starts += 1;
        }
        let mut nodes_seen: BTreeSet<&str> = BTreeSet::new();
        let mut edges_seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for h in &tr.hops {
            nodes_seen.insert(h.as_str());
        }
        for w in tr.hops.windows(2) {
            edges_seen.insert((w[0].as_str(), w[1].as_str()));
        }
        for n in nodes_seen {
            *node_support.entry(n).or_insert(0) += 1;
        }
        for e in edges_seen {
            *edge_support.entry(e).or_insert(0) += 1;
        }
    }
    let mut cond = BTreeMap::new();
    for ((u, v), num) in edge_support {
        let den = node_support[u];
        cond.insert((u.to_string(), v.to_string()), num as f64 / den as f64);
    }
    Ok(PathProbabilityModel {
        root_prob: root_starts as f64 / traces.len() as f64,
        cond,
    })
}

/// P(ρ) = P(root) · Π P(m_i | m_{i-1}) along the path.
pub fn path_probability(model: &PathProbabilityModel, rho: &[String]) -> Result<f64, TopoError> {
    let mut p = model.root_prob;
    for w in rho.windows(2) {
        let key = (w[0].clone(), w[1].clone());
        match model.cond.get(&key) {
            Some(c) => p *= c,
            None => return Err(TopoError::ZeroSupport(w[0].clone(), w[1].clone())),
        }
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug)]
pub struct TopoSelectOptions {
    pub bins: u32,
    pub path_cap: usize,
}

impl Default for TopoSelectOptions {
    fn default() -> Self {
        TopoSelectOptions {
            bins: 10,
            path_cap: DEFAULT_PATH_CAP,
        }
    }
}

/// Reusable per-application state that does not depend on ε: discretized
/// series, levels, per-node path lists and probabilities, and ancestor
/// sets. Building it once lets an AIMD loop re-run selection cheaply.
pub struct SelectionContext {
    root: String,
    /// Node processing order: (level, name) ascending, root first.
    order: Vec<String>,
    /// Per node: candidate series, ancestors, and (path, probability) list.
    per_node: BTreeMap<String, NodeContext>,
    resolver: BTreeMap<MetricId, DiscreteSeries>,
}

struct NodeContext {
    candidates: BTreeMap<MetricId, DiscreteSeries>,
    ancestors: BTreeSet<String>,
    paths: Vec<(Vec<String>, f64)>,
}

impl SelectionContext {
    pub fn build(
        t: &Topology,
        table: &MetricTable,
        traces: &TraceSet,
        opts: TopoSelectOptions,
    ) -> Result<Self, TopoError> {
        let model = estimate_path_model(traces, t)?;
        let levels = topo_levels(t);

        let mut resolver: BTreeMap<MetricId, DiscreteSeries> = BTreeMap::new();
        for (id, s) in table.iter() {
            resolver.insert(id.clone(), discretize(s, opts.bins));
        }

        let mut order: Vec<String> = t.microservices().iter().cloned().collect();
        order.sort_by_key(|m| (levels.level[m], m.clone()));

        let mut per_node = BTreeMap::new();
        for m in &order {
            let candidates: BTreeMap<MetricId, DiscreteSeries> = table
                .metrics_of(m)
                .map(|id| (id.clone(), resolver[id].clone()))
                .collect();
            let (ancestors, paths) = if m == t.root() {
                (BTreeSet::new(), vec![(vec![t.root().to_string()], model.root_prob)])
            } else {
                let raw_paths = enumerate_paths(t, m, opts.path_cap)?;
                let mut ancestors = BTreeSet::new();
                let mut paths = Vec::with_capacity(raw_paths.len());
                for rho in raw_paths {
                    for hop in &rho {
                        if hop != m {
                            ancestors.insert(hop.clone());
                        }
                    }
                    let p = path_probability(&model, &rho)?;
                    paths.push((rho, p));
                }
                (ancestors, paths)
            };
            per_node.insert(
                m.clone(),
                NodeContext {
                    candidates,
                    ancestors,
                    paths,
                },
            );
        }

        Ok(SelectionContext {
            root: t.root().to_string(),
            order,
            per_node,
            resolver,
        })
    }

    /// Runs topology-aware selection at threshold `epsilon`.
    pub fn select(&self, epsilon: f64) -> Result<SubsetMapping, TopoError> {
        let mut mapping = SubsetMapping::default();
        for m in &self.order {
            let node = &self.per_node[m];
            if m == &self.root {
                let set = select_subset(
                    &node.candidates,
                    &PivotSet::default(),
                    &self.resolver,
                    epsilon,
                )?;
                mapping.assignments.insert(m.clone(), set);
                mapping.provenance.insert(
                    m.clone(),
                    vec![PathEpsilon {
                        path: vec![self.root.clone()],
                        epsilon,
                    }],
                );
                continue;
            }

            let mut pivot = PivotSet::default();
            for a in &node.ancestors {
                if let Some(set) = mapping.assignments.get(a) {
                    pivot.metrics.extend(set.iter().cloned());
                }
            }

            let mut union: BTreeSet<MetricId> = BTreeSet::new();
            let mut prov = Vec::with_capacity(node.paths.len());
            for (rho, p) in &node.paths {
                let eps_rho = epsilon * (1.0 / p);
                let set = select_subset(&node.candidates, &pivot, &self.resolver, eps_rho)?;
                union.extend(set);
                prov.push(PathEpsilon {
                    path: rho.clone(),
                    epsilon: eps_rho,
                });
            }
            mapping.assignments.insert(m.clone(), union);
            mapping.provenance.insert(m.clone(), prov);
        }
        Ok(mapping)
    }
}

/// One-shot topology-aware selection; builds the context and runs it.
pub fn topology_aware_select(
    t: &Topology,
    table: &MetricTable,
    traces: &TraceSet,
    epsilon: f64,
    opts: TopoSelectOptions,
) -> Result<SubsetMapping, TopoError> {
    SelectionContext::build(t, table, traces, opts)?.select(epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MetricSeries, Trace};
    use std::collections::BTreeSet;

    fn topo(pairs: &[(&str, &str)]) -> Topology {
        Topology::from_edges(
            pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        )
        .unwrap()
    }

    fn trace(id: &str, hops: &[&str]) -> Trace {
        Trace {
            trace_id: id.into(),
            hops: hops.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn levels_chain() {
        let t = topo(&[("a", "b"), ("b", "c")]);
        let l = topo_levels(&t);
        assert_eq!(l.level["a"], 0);
        assert_eq!(l.level["b"], 1);
        assert_eq!(l.level["c"], 2);
    }

    #[test]
    fn levels_diamond() {
        let t = topo(&[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]);
        let l = topo_levels(&t);
        assert_eq!(l.level["a"], 0);
        assert_eq!(l.level["b"], 1);
        assert_eq!(l.level["c"], 1);
        assert_eq!(l.level["d"], 2);
    }

    #[test]
    fn levels_use_longest_path() {
        let t = topo(&[("a", "b"), ("a", "c"), ("b", "c")]);
        let l = topo_levels(&t);
        assert_eq!(l.level["c"], 2);
    }

    #[test]
    fn paths_chain_and_diamond() {
        let chain = topo(&[("a", "b"), ("b", "c")]);
        assert_eq!(
            enumerate_paths(&chain, "c", 100).unwrap(),
            vec![vec!["a".to_string(), "b".into(), "c".into()]]
        );

        let diamond = topo(&[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]);
        assert_eq!(
            enumerate_paths(&diamond, "d", 100).unwrap(),
            vec![
                vec!["a".to_string(), "b".into(), "d".into()],
                vec!["a".to_string(), "c".into(), "d".into()],
            ]
        );

        assert_eq!(
            enumerate_paths(&chain, "a", 100).unwrap(),
            vec![vec!["a".to_string()]]
        );
    }

    #[test]
    fn path_cap_triggers() {
        let diamond = topo(&[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]);
        assert!(matches!(
            enumerate_paths(&diamond, "d", 1),
            Err(TopoError::PathExplosion { .. })
        ));
    }

    #[test]
    fn path_model_counts_ratios() {
        let t = topo(&[("a", "b"), ("a", "c")]);
        let mut traces = TraceSet::default();
        for i in 0..5 {
            traces.traces.push(trace(&format!("b{i}"), &["a", "b"]));
            traces.traces.push(trace(&format!("c{i}"), &["a", "c"]));
        }
        let m = estimate_path_model(&traces, &t).unwrap();
        assert_eq!(m.root_prob, 1.0);
        assert_eq!(m.cond[&("a".to_string(), "b".to_string())], 0.5);
        assert_eq!(m.cond[&("a".to_string(), "c".to_string())], 0.5);
    }

    #[test]
    fn path_probability_is_product() {
        let model = PathProbabilityModel {
            root_prob: 1.0,
            cond: [
                (("a".to_string(), "b".to_string()), 0.5),
                (("b".to_string(), "d".to_string()), 0.4),
            ]
            .into_iter()
            .collect(),
        };
        assert_eq!(path_probability(&model, &["a".to_string()]).unwrap(), 1.0);
        assert_eq!(
            path_probability(&model, &["a".to_string(), "b".into()]).unwrap(),
            0.5
        );
        let p = path_probability(&model, &["a".to_string(), "b".into(), "d".into()]).unwrap();
        assert!((p - 0.2).abs() < 1e-15);
        assert!(matches!(
            path_probability(&model, &["a".to_string(), "x".into()]),
            Err(TopoError::ZeroSupport(_, _))
        ));
    }

    fn table_for(t: &[(&str, &str, &[f64])]) -> MetricTable {
        let series = t
            .iter()
            .map(|(m, n, v)| {
                MetricSeries::new(
                    MetricId::new(*m, *n).unwrap(),
                    (0..v.len() as i64).collect(),
                    v.to_vec(),
                )
                .unwrap()
            })
            .collect();
        MetricTable::new(series).unwrap()
    }

    #[test]
    fn chain_with_unit_probability_matches_sequential_runs() {
        let t = topo(&[("a", "b")]);
        let x: &[f64] = &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let z: &[f64] = &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let table = table_for(&[("a", "x", x), ("b", "x2", x), ("b", "z", z)]);
        let mut traces = TraceSet::default();
        traces.traces.push(trace("t0", &["a", "b"]));

        let opts = TopoSelectOptions {
            bins: 2,
            ..Default::default()
        };
        let mapping = topology_aware_select(&t, &table, &traces, 0.01, opts).unwrap();

        // a/x seeds Γ(a); b/x2 is an exact copy so the pivot rejects it;
        // b/z is independent so it survives.
        assert_eq!(
            mapping.assignments["a"],
            [MetricId::new("a", "x").unwrap()].into_iter().collect()
        );
        assert_eq!(
            mapping.assignments["b"],
            [MetricId::new("b", "z").unwrap()].into_iter().collect()
        );
        assert_eq!(mapping.provenance["b"][0].epsilon, 0.01);
    }

    #[test]
    fn single_node_topology_degenerates_to_plain_selection() {
        let t = Topology::new(["a".to_string()].into_iter().collect(), BTreeSet::new()).unwrap();
        let table = table_for(&[("a", "x", &[0.0, 1.0, 0.0, 1.0])]);
        let mut traces = TraceSet::default();
        traces.traces.push(trace("t0", &["a"]));
        let mapping =
            topology_aware_select(&t, &table, &traces, 0.5, TopoSelectOptions::default()).unwrap();
        assert_eq!(mapping.total_size(), 1);
    }

    #[test]
    fn diamond_scales_epsilon_per_path() {
        let t = topo(&[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]);
        let x: &[f64] = &[0.0, 1.0, 0.0, 1.0];
        let table = table_for(&[("a", "x", x), ("d", "y", x)]);
        let mut traces = TraceSet::default();
        // P(a,b)=0.2, P(a,c)=0.8; both continue to d.
        for i in 0..2 {
            traces.traces.push(trace(&format!("b{i}"), &["a", "b", "d"]));
        }
        for i in 0..8 {
            traces.traces.push(trace(&format!("c{i}"), &["a", "c", "d"]));
        }
        let mapping =
            topology_aware_select(&t, &table, &traces, 0.05, TopoSelectOptions::default()).unwrap();
        let prov = &mapping.provenance["d"];
        assert_eq!(prov.len(), 2);
        assert_eq!(prov[0].path, vec!["a".to_string(), "b".into(), "d".into()]);
        assert!((prov[0].epsilon - 0.05 / 0.2).abs() < 1e-12);
        assert_eq!(prov[1].path, vec!["a".to_string(), "c".into(), "d".into()]);
        assert!((prov[1].epsilon - 0.05 / 0.8).abs() < 1e-12);
    }
}

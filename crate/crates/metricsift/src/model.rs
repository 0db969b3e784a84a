//! Shared domain types: metric identifiers and tables, the service DAG,
//! traces, subset mappings, and AIMD parameters/logs.
//!
//! All types here are immutable after construction and safe to share
//! read-only across workers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("metric id requires non-empty microservice and metric names")]
    EmptyMetricId,
    #[error("series {0} has no samples")]
    EmptySeries(MetricId),
    #[error("series {0}: timestamps must be strictly increasing")]
    NonMonotonicTimestamps(MetricId),
    #[error("series {0}: non-finite value rejected")]
    NonFiniteValue(MetricId),
    #[error("metric table series are not aligned on a common timestamp grid")]
    MisalignedTable,
    #[error("topology contains a directed cycle")]
    Cycle,
    #[error("topology must have exactly one in-degree-0 root, found: {0:?}")]
    Root(Vec<String>),
    #[error("microservice {0} is not reachable from the root")]
    Unreachable(String),
    #[error("trace {0}: {1}")]
    InvalidTrace(String, String),
    #[error("mapping assigns {0} under microservice {1}")]
    ForeignMetric(MetricId, String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("anomaly label {0} not present in the metric table")]
    UnknownLabel(MetricId),
}

/// A metric, namespaced by the microservice that emits it.
///
/// Two services exposing a metric with the same name are treated as two
/// distinct variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MetricId {
    pub microservice: String,
    pub name: String,
}

impl MetricId {
    pub fn new(microservice: impl Into<String>, name: impl Into<String>) -> Result<Self, ModelError> {
        let id = MetricId {
            microservice: microservice.into(),
            name: name.into(),
        };
        if id.microservice.is_empty() || id.name.is_empty() {
            return Err(ModelError::EmptyMetricId);
        }
        Ok(id)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.microservice, self.name)
    }
}

/// One metric's time series: parallel timestamp and value vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    pub id: MetricId,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl MetricSeries {
    /// Timestamps must be strictly increasing and every value finite.
    pub fn new(id: MetricId, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if timestamps.is_empty() || timestamps.len() != values.len() {
            return Err(ModelError::EmptySeries(id));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::NonMonotonicTimestamps(id));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(id));
        }
        Ok(MetricSeries { id, timestamps, values })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All observable metrics of the application, aligned on one timestamp grid.
#[derive(Clone, Debug, Default)]
pub struct MetricTable {
    series: BTreeMap<MetricId, MetricSeries>,
}

impl MetricTable {
    /// Rejects tables whose series do not share a common grid.
    pub fn new(series: Vec<MetricSeries>) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        let mut grid: Option<Vec<i64>> = None;
        for s in series {
            match &grid {
                None => grid = Some(s.timestamps.clone()),
                Some(g) => {
                    if s.timestamps != *g {
                        return Err(ModelError::MisalignedTable);
                    }
                }
            }
            map.insert(s.id.clone(), s);
        }
        Ok(MetricTable { series: map })
    }

    /// The set of all metric ids, σ.
    pub fn sigma(&self) -> impl Iterator<Item = &MetricId> {
        self.series.keys()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn get(&self, id: &MetricId) -> Option<&MetricSeries> {
        self.series.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MetricId, &MetricSeries)> {
        self.series.iter()
    }

    /// The shared timestamp grid (empty table has no grid).
    pub fn grid(&self) -> Option<&[i64]> {
        self.series.values().next().map(|s| s.timestamps())
    }

    /// Ids of metrics belonging to one microservice (Ψ_m).
    pub fn metrics_of<'a>(&'a self, microservice: &'a str) -> impl Iterator<Item = &'a MetricId> {
        self.series
            .keys()
            .filter(move |id| id.microservice == microservice)
    }
}

/// The application DAG A(M, E) with a single entry-point root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    microservices: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
    root: String,
}

impl Topology {
    /// Validates acyclicity, a unique in-degree-0 root, and reachability of
    /// every node from that root.
    pub fn new(
        microservices: BTreeSet<String>,
        edges: BTreeSet<(String, String)>,
    ) -> Result<Self, ModelError> {
        let mut nodes = microservices;
        for (u, v) in &edges {
            nodes.insert(u.clone());
            nodes.insert(v.clone());
        }
        if nodes.is_empty() {
            return Err(ModelError::Root(vec![]));
        }

        // Kahn's algorithm for cycle detection.
        let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for (_, v) in &edges {
            *indeg.get_mut(v.as_str()).unwrap() += 1;
        }
        let roots: Vec<String> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| n.to_string())
            .collect();
        if roots.len() != 1 {
            return Err(ModelError::Root(roots));
        }
        let root = roots[0].clone();

        let mut queue: VecDeque<&str> = indeg
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut seen = 0usize;
        let mut indeg_work = indeg.clone();
        while let Some(u) = queue.pop_front() {
            seen += 1;
            for (a, b) in &edges {
                if a == u {
                    let d = indeg_work.get_mut(b.as_str()).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push_back(b.as_str());
                    }
                }
            }
        }
        if seen != nodes.len() {
            return Err(ModelError::Cycle);
        }

        // With a DAG and a unique in-degree-0 node, reachability from the
        // root still needs an explicit check (disconnected nodes would have
        // non-zero in-degree only in their own component, which the unique
        // root test already excludes for sources, but not for cycles-free
        // components hanging off nowhere). Verify directly.
        let mut reach = BTreeSet::new();
        let mut stack = vec![root.as_str()];
        while let Some(u) = stack.pop() {
            if !reach.insert(u.to_string()) {
                continue;
            }
            for (a, b) in &edges {
                if a == u {
                    stack.push(b.as_str());
                }
            }
        }
        for n in &nodes {
            if !reach.contains(n) {
                return Err(ModelError::Unreachable(n.clone()));
            }
        }

        Ok(Topology {
            microservices: nodes,
            edges,
            root,
        })
    }

    /// Builds a topology from an edge list alone; nodes are the endpoints.
    pub fn from_edges(edges: BTreeSet<(String, String)>) -> Result<Self, ModelError> {
        Topology::new(BTreeSet::new(), edges)
    }

    pub fn microservices(&self) -> &BTreeSet<String> {
        &self.microservices
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn has_edge(&self, u: &str, v: &str) -> bool {
        self.edges.contains(&(u.to_string(), v.to_string()))
    }

    /// Children of `u`, in name order.
    pub fn children(&self, u: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(a, _)| a == u)
            .map(|(_, b)| b.as_str())
            .collect()
    }
}

/// One request's recorded hop sequence through the application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: String,
    pub hops: Vec<String>,
}

impl Trace {
    /// A trace is consistent with a topology when it starts at the root and
    /// every consecutive hop pair is an edge.
    pub fn validate_against(&self, t: &Topology) -> Result<(), ModelError> {
        if self.hops.is_empty() {
            return Err(ModelError::InvalidTrace(
                self.trace_id.clone(),
                "empty hop list".into(),
            ));
        }
        if self.hops[0] != t.root() {
            return Err(ModelError::InvalidTrace(
                self.trace_id.clone(),
                format!("first hop {} is not the root {}", self.hops[0], t.root()),
            ));
        }
        for w in self.hops.windows(2) {
            if !t.has_edge(&w[0], &w[1]) {
                return Err(ModelError::InvalidTrace(
                    self.trace_id.clone(),
                    format!("unknown edge ({}, {})", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceSet {
    pub traces: Vec<Trace>,
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn validate_against(&self, t: &Topology) -> Result<(), ModelError> {
        for tr in &self.traces {
            tr.validate_against(t)?;
        }
        Ok(())
    }
}

/// One (path, effective-ε) record kept for provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEpsilon {
    pub path: Vec<String>,
    pub epsilon: f64,
}

/// The mapping Γ: microservice → selected metric ids, with per-path
/// threshold provenance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubsetMapping {
    pub assignments: BTreeMap<String, BTreeSet<MetricId>>,
    pub provenance: BTreeMap<String, Vec<PathEpsilon>>,
}

impl SubsetMapping {
    /// |Γ| — the sum of per-microservice set sizes. Metrics are namespaced
    /// per microservice, so union size equals this sum.
    pub fn total_size(&self) -> usize {
        self.assignments.values().map(|s| s.len()).sum()
    }

    /// Every selected metric, across all microservices.
    pub fn selected(&self) -> impl Iterator<Item = &MetricId> {
        self.assignments.values().flatten()
    }

    /// Γ(m) ⊆ Ψ_m: selected metrics must belong to the microservice keyed.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (m, set) in &self.assignments {
            for id in set {
                if &id.microservice != m {
                    return Err(ModelError::ForeignMetric(id.clone(), m.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
    Kendall,
    MutualInformation,
}

impl CorrelationMethod {
    /// Per-method correlation pruning threshold defaults.
    pub fn default_theta(self) -> f64 {
        match self {
            CorrelationMethod::Pearson => 0.27,
            CorrelationMethod::Spearman => 0.13,
            CorrelationMethod::Kendall => 0.08,
            CorrelationMethod::MutualInformation => 0.05,
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::Kendall => "kendall",
            CorrelationMethod::MutualInformation => "mi",
        };
        f.write_str(s)
    }
}

impl FromStr for CorrelationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson" => Ok(CorrelationMethod::Pearson),
            "spearman" => Ok(CorrelationMethod::Spearman),
            "kendall" => Ok(CorrelationMethod::Kendall),
            "mi" | "mutual_information" => Ok(CorrelationMethod::MutualInformation),
            other => Err(format!("unknown correlation method: {other}")),
        }
    }
}

/// Parameters driving the AIMD threshold search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AimdParams {
    /// Tolerance τ on subset-size deviation.
    pub tau: f64,
    /// Multiplicative decrease factor α, in (0, 1).
    pub alpha: f64,
    /// Additive increase step β, > 0.
    pub beta: f64,
    /// Iteration count η (exact, not a cap).
    pub eta: usize,
    /// Initial threshold ε.
    pub epsilon0: f64,
    /// Correlation pruning threshold θ for coverage.
    pub theta: f64,
    pub correlation_method: CorrelationMethod,
    /// Discretization bin count.
    pub bins: u32,
}

impl Default for AimdParams {
    fn default() -> Self {
        AimdParams {
            tau: 5.0,
            alpha: 0.4,
            beta: 0.005,
            eta: 100,
            epsilon0: 0.5,
            theta: CorrelationMethod::Pearson.default_theta(),
            correlation_method: CorrelationMethod::Pearson,
            bins: 10,
        }
    }
}

impl AimdParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ModelError::InvalidParams("alpha must be in (0,1)".into()));
        }
        if self.beta <= 0.0 {
            return Err(ModelError::InvalidParams("beta must be positive".into()));
        }
        if self.eta < 1 {
            return Err(ModelError::InvalidParams("eta must be >= 1".into()));
        }
        if self.epsilon0 <= 0.0 {
            return Err(ModelError::InvalidParams("epsilon0 must be positive".into()));
        }
        if self.tau < 0.0 {
            return Err(ModelError::InvalidParams("tau must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ModelError::InvalidParams("theta must be in [0,1]".into()));
        }
        if self.bins == 0 {
            return Err(ModelError::InvalidParams("bins must be positive".into()));
        }
        Ok(())
    }
}

/// One AIMD iteration's record.
#[derive(Clone, Debug, PartialEq)]
pub struct AimdIteration {
    /// 1-based iteration index.
    pub index: usize,
    /// The ε this iteration ran at.
    pub epsilon: f64,
    pub mapping: SubsetMapping,
    /// ξ = |Γ| for this iteration.
    pub xi: usize,
    pub coverage: f64,
    pub within_tolerance: bool,
}

/// The full per-iteration trade-off ledger of an AIMD run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AimdLog {
    pub iterations: Vec<AimdIteration>,
}

/// Ground-truth σ_A: metrics impacted by injected anomalies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnomalyLabelSet {
    pub impacted: BTreeSet<MetricId>,
}

impl AnomalyLabelSet {
    /// impacted ⊆ σ of the associated table.
    pub fn validate_against(&self, table: &MetricTable) -> Result<(), ModelError> {
        for id in &self.impacted {
            if table.get(id).is_none() {
                return Err(ModelError::UnknownLabel(id.clone()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.impacted.is_empty()
    }
}

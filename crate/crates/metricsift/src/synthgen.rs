//! Deterministic synthetic bundles: a single-rooted DAG, traces sampled
//! from branch probabilities, metric tables with planted redundancy
//! groups, and anomaly injection with ground-truth labels.
//!
//! One nominal "minute" is compressed to 4 samples at a 15 s cadence so
//! desk-scale runs finish in seconds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{
    save_anomaly_labels, save_metrics, save_topology, save_traces, IngestError,
};
use crate::model::{
    AnomalyLabelSet, MetricId, MetricSeries, MetricTable, ModelError, Topology, Trace, TraceSet,
};

pub const SAMPLE_INTERVAL_SECS: i64 = 15;
pub const SAMPLES_PER_MINUTE: usize = 4;
/// Level-shift magnitude, in units of the base signal's std deviation.
pub const ANOMALY_SHIFT_SIGMAS: f64 = 6.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnomalyKind {
    CpuSpike,
    MemorySpike,
    LatencySpike,
    ErrorSpike,
    CpuDrop,
    MemoryDrop,
    LatencyDrop,
    ErrorDrop,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 8] = [
        AnomalyKind::CpuSpike,
        AnomalyKind::MemorySpike,
        AnomalyKind::LatencySpike,
        AnomalyKind::ErrorSpike,
        AnomalyKind::CpuDrop,
        AnomalyKind::MemoryDrop,
        AnomalyKind::LatencyDrop,
        AnomalyKind::ErrorDrop,
    ];

    /// Level-shift direction: spikes raise, drops lower.
    pub fn sign(self) -> f64 {
        match self {
            AnomalyKind::CpuSpike
            | AnomalyKind::MemorySpike
            | AnomalyKind::LatencySpike
            | AnomalyKind::ErrorSpike => 1.0,
            _ => -1.0,
        }
    }
}

impl FromStr for AnomalyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu_spike" => Ok(AnomalyKind::CpuSpike),
            "memory_spike" => Ok(AnomalyKind::MemorySpike),
            "latency_spike" => Ok(AnomalyKind::LatencySpike),
            "error_spike" => Ok(AnomalyKind::ErrorSpike),
            "cpu_drop" => Ok(AnomalyKind::CpuDrop),
            "memory_drop" => Ok(AnomalyKind::MemoryDrop),
            "latency_drop" => Ok(AnomalyKind::LatencyDrop),
            "error_drop" => Ok(AnomalyKind::ErrorDrop),
            other => Err(format!("unknown anomaly kind: {other}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub seed: u64,
    pub services: usize,
    /// Optional explicit DAG with per-edge traversal probabilities. When
    /// empty, a random single-rooted DAG over `services` nodes is drawn.
    pub branch_probs: BTreeMap<(String, String), f64>,
    pub metrics_per_service: usize,
    pub redundancy_groups: usize,
    /// Zero-entropy metrics per service, counted inside metrics_per_service.
    pub constant_metrics: usize,
    pub noise_sigma: f64,
    pub samples: usize,
    pub trace_count: usize,
    pub anomaly_kinds: Vec<AnomalyKind>,
    /// Per-group probability of receiving an injected anomaly.
    pub anomaly_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            services: 5,
            branch_probs: BTreeMap::new(),
            metrics_per_service: 12,
            redundancy_groups: 3,
            constant_metrics: 2,
            noise_sigma: 0.05,
            samples: 240,
            trace_count: 2000,
            anomaly_kinds: AnomalyKind::ALL.to_vec(),
            anomaly_rate: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.services == 0 {
            return Err(SynthError::Spec("services must be positive".into()));
        }
        if self.metrics_per_service == 0 {
            return Err(SynthError::Spec("metrics_per_service must be positive".into()));
        }
        if self.redundancy_groups == 0 || self.redundancy_groups > self.metrics_per_service {
            return Err(SynthError::Spec(
                "redundancy_groups must be in [1, metrics_per_service]".into(),
            ));
        }
        if self.constant_metrics + self.redundancy_groups > self.metrics_per_service {
            return Err(SynthError::Spec(
                "constant_metrics leave no room for redundancy groups".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(SynthError::Spec("noise_sigma must be non-negative".into()));
        }
        if self.samples == 0 || self.trace_count == 0 {
            return Err(SynthError::Spec("samples and trace_count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return Err(SynthError::Spec("anomaly_rate must be in [0,1]".into()));
        }
        let mut out_sums: BTreeMap<&str, f64> = BTreeMap::new();
        for ((u, _), p) in &self.branch_probs {
            if !(0.0..=1.0).contains(p) {
                return Err(SynthError::Spec(format!("branch probability {p} out of range")));
            }
            *out_sums.entry(u.as_str()).or_insert(0.0) += p;
        }
        for (u, s) in out_sums {
            if s > 1.0 + 1e-9 {
                return Err(SynthError::Spec(format!(
                    "branch probabilities out of {u} sum to {s} > 1"
                )));
            }
        }
        Ok(())
    }
}

/// Generates a reproducible bundle: same seed and spec, byte-identical
/// output.
pub fn generate(
    spec: &SynthSpec,
) -> Result<(Topology, TraceSet, MetricTable, AnomalyLabelSet), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let branch = if spec.branch_probs.is_empty() {
        random_dag(spec.services, &mut rng)
    } else {
        spec.branch_probs.clone()
    };
    let edges: BTreeSet<(String, String)> = branch.keys().cloned().collect();
    let mut nodes: BTreeSet<String> = BTreeSet::new();
    for (u, v) in &edges {
        nodes.insert(u.clone());
        nodes.insert(v.clone());
    }
    if nodes.is_empty() {
        nodes.insert("svc00".to_string());
    }
    let topology = Topology::new(nodes, edges)?;

    let traces = sample_traces(&topology, &branch, spec.trace_count, &mut rng);
    let (table, labels) = generate_metrics(spec, &topology, &mut rng)?;

    Ok((topology, traces, table, labels))
}

/// Random single-rooted DAG: node i>0 attaches under one or two earlier
/// nodes; out-edge probabilities at each node sum to at most 1.
fn random_dag(services: usize, rng: &mut ChaCha8Rng) -> BTreeMap<(String, String), f64> {
    let names: Vec<String> = (0..services).map(|i| format!("svc{i:02}")).collect();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 1..services {
        let p1 = rng.gen_range(0..i);
        edges.insert((p1, i));
        if i > 1 && rng.gen_bool(0.3) {
            let p2 = rng.gen_range(0..i);
            if p2 != p1 {
                edges.insert((p2, i));
            }
        }
    }
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(u, v) in &edges {
        out.entry(u).or_default().push(v);
    }
    let mut probs = BTreeMap::new();
    for (u, children) in out {
        // Spread a high continue-probability across children so every
        // edge keeps healthy trace support.
        let total = rng.gen_range(0.85..1.0);
        let weights: Vec<f64> = children.iter().map(|_| rng.gen_range(0.5..1.0)).collect();
        let wsum: f64 = weights.iter().sum();
        for (child, w) in children.iter().zip(weights) {
            probs.insert(
                (names[u].clone(), names[*child].clone()),
                total * w / wsum,
            );
        }
    }
    probs
}

fn sample_traces(
    t: &Topology,
    branch: &BTreeMap<(String, String), f64>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> TraceSet {
    let mut traces = Vec::with_capacity(count);
    for i in 0..count {
        let mut hops = vec![t.root().to_string()];
        loop {
            let here = hops.last().unwrap().clone();
            let children = t.children(&here);
            if children.is_empty() {
                break;
            }
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen: Option<&str> = None;
            for c in &children {
                acc += branch[&(here.clone(), c.to_string())];
                if r < acc {
                    chosen = Some(c);
                    break;
                }
            }
            match chosen {
                Some(c) => hops.push(c.to_string()),
                None => break, // request terminated at this hop
            }
        }
        traces.push(Trace {
            trace_id: format!("trace-{i:06}"),
            hops,
        });
    }
    TraceSet { traces }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn generate_metrics(
    spec: &SynthSpec,
    topology: &Topology,
    rng: &mut ChaCha8Rng,
) -> Result<(MetricTable, AnomalyLabelSet), SynthError> {
    let timestamps: Vec<i64> = (0..spec.samples as i64)
        .map(|i| i * SAMPLE_INTERVAL_SECS)
        .collect();
    let informative = spec.metrics_per_service - spec.constant_metrics;
    let group_size = informative / spec.redundancy_groups;
    let independents = informative - group_size * spec.redundancy_groups;

    let mut series = Vec::new();
    let mut impacted = BTreeSet::new();

    for svc in topology.microservices() {
        for g in 0..spec.redundancy_groups {
            let mut base: Vec<f64> = (0..spec.samples).map(|_| gaussian(rng)).collect();

            // Anomaly: additive level shift on the group base during a
            // uniform-duration window, 1 to 10 "minutes".
            let mut anomalous = false;
            if spec.anomaly_rate > 0.0
                && !spec.anomaly_kinds.is_empty()
                && rng.gen_bool(spec.anomaly_rate)
            {
                let dur = rng
                    .gen_range(SAMPLES_PER_MINUTE..=10 * SAMPLES_PER_MINUTE)
                    .min(spec.samples);
                let start = rng.gen_range(0..=spec.samples - dur);
                let kind = spec.anomaly_kinds[rng.gen_range(0..spec.anomaly_kinds.len())];
                let shift = kind.sign() * ANOMALY_SHIFT_SIGMAS * std_dev(&base).max(1e-9);
                for v in &mut base[start..start + dur] {
                    *v += shift;
                }
                anomalous = true;
            }

            for k in 0..group_size {
                let values: Vec<f64> = base
                    .iter()
                    .map(|b| b + spec.noise_sigma * gaussian(rng))
                    .collect();
                let id = MetricId::new(svc.clone(), format!("grp{g}_sig{k}"))?;
                if anomalous {
                    impacted.insert(id.clone());
                }
                series.push(MetricSeries::new(id, timestamps.clone(), values)?);
            }
        }

        for j in 0..independents {
            let values: Vec<f64> = (0..spec.samples).map(|_| gaussian(rng)).collect();
            let id = MetricId::new(svc.clone(), format!("ind{j}"))?;
            series.push(MetricSeries::new(id, timestamps.clone(), values)?);
        }

        for j in 0..spec.constant_metrics {
            let values = vec![j as f64; spec.samples];
            let id = MetricId::new(svc.clone(), format!("const{j}"))?;
            series.push(MetricSeries::new(id, timestamps.clone(), values)?);
        }
    }

    Ok((MetricTable::new(series)?, AnomalyLabelSet { impacted }))
}

/// Writes a bundle in exactly the formats the ingest loaders read.
pub fn write_bundle(
    dir: &Path,
    topology: &Topology,
    traces: &TraceSet,
    table: &MetricTable,
    labels: &AnomalyLabelSet,
) -> Result<(), SynthError> {
    save_metrics(table, &dir.join("metrics.csv"))?;
    save_traces(traces, &dir.join("traces.jsonl"))?;
    save_topology(topology, &dir.join("topology.json"))?;
    save_anomaly_labels(labels, &dir.join("labels.txt"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::pearson;

    #[test]
    fn same_seed_same_output() {
        let spec = SynthSpec {
            anomaly_rate: 0.5,
            ..Default::default()
        };
        let (t1, tr1, m1, l1) = generate(&spec).unwrap();
        let (t2, tr2, m2, l2) = generate(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(tr1, tr2);
        assert_eq!(l1, l2);
        assert_eq!(m1.len(), m2.len());
        for (id, s) in m1.iter() {
            assert_eq!(s, m2.get(id).unwrap());
        }
    }

    #[test]
    fn zero_noise_makes_exact_group_copies() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let (_, _, table, _) = generate(&spec).unwrap();
        let svc = table.sigma().next().unwrap().microservice.clone();
        let a = table.get(&MetricId::new(svc.clone(), "grp0_sig0").unwrap()).unwrap();
        let b = table.get(&MetricId::new(svc, "grp0_sig1").unwrap()).unwrap();
        assert_eq!(a.values(), b.values());
        assert!((pearson(a.values(), b.values()).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_anomaly_rate_gives_empty_labels() {
        let spec = SynthSpec::default();
        let (_, _, _, labels) = generate(&spec).unwrap();
        assert!(labels.is_empty());
    }

    #[test]
    fn labels_exist_in_table() {
        let spec = SynthSpec {
            anomaly_rate: 0.6,
            seed: 7,
            ..Default::default()
        };
        let (_, _, table, labels) = generate(&spec).unwrap();
        assert!(!labels.is_empty());
        labels.validate_against(&table).unwrap();
    }

    #[test]
    fn branch_prob_validation() {
        let mut spec = SynthSpec::default();
        spec.branch_probs
            .insert(("a".to_string(), "b".to_string()), 0.7);
        spec.branch_probs
            .insert(("a".to_string(), "c".to_string()), 0.7);
        assert!(matches!(generate(&spec), Err(SynthError::Spec(_))));
    }

    #[test]
    fn empirical_edge_frequencies_track_branch_probs() {
        let mut branch = BTreeMap::new();
        branch.insert(("a".to_string(), "b".to_string()), 0.5);
        branch.insert(("a".to_string(), "c".to_string()), 0.5);
        let spec = SynthSpec {
            branch_probs: branch,
            trace_count: 10_000,
            services: 3,
            ..Default::default()
        };
        let (t, traces, _, _) = generate(&spec).unwrap();
        let model = crate::topology::estimate_path_model(&traces, &t).unwrap();
        let ab = model.cond[&("a".to_string(), "b".to_string())];
        assert!((0.47..=0.53).contains(&ab), "cond(a,b)={ab}");
    }
}

//! File-based ingestion: metrics CSV, trace JSONL, topology JSON, and
//! anomaly label files, plus the matching writers so generated bundles
//! round-trip exactly.
//!
//! Metric CSV is long form with the header
//! `timestamp,microservice,metric,value`. Traces are one JSON object per
//! line: `{"trace_id": "...", "hops": ["svc1", ...]}`. Topology is
//! `{"edges": [["a","b"], ...]}` with the root inferred as the unique
//! in-degree-0 node. Labels are one `microservice/metric` per line.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AnomalyLabelSet, MetricId, MetricSeries, MetricTable, ModelError, Topology, Trace, TraceSet,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("alignment failed: {0}")]
    Alignment(String),
    #[error("{count} of {total} trace lines malformed; wrong file?")]
    TooManyMalformed { count: usize, total: usize },
    #[error("unknown anomaly labels: {0:?}")]
    UnknownMetrics(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Keep only timestamps present in every series.
    Intersect,
    /// Resample onto a fixed-interval grid, carrying the last sample
    /// forward up to `max_gap` seconds.
    ForwardFill,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IngestConfig {
    pub resample_interval: i64,
    pub alignment: Alignment,
    pub max_gap: i64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            resample_interval: 15,
            alignment: Alignment::Intersect,
            max_gap: 60,
        }
    }
}

/// Loads the long-form metrics CSV and aligns all series onto one grid.
pub fn load_metrics(path: &Path, cfg: &IngestConfig) -> Result<MetricTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;

    let mut raw: BTreeMap<MetricId, Vec<(i64, f64)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let rec = rec.map_err(|e| IngestError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(IngestError::Parse {
                line,
                msg: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let ts: i64 = rec[0].parse().map_err(|_| IngestError::Parse {
            line,
            msg: format!("bad timestamp {:?}", &rec[0]),
        })?;
        let value: f64 = rec[3].parse().map_err(|_| IngestError::Parse {
            line,
            msg: format!("bad value {:?}", &rec[3]),
        })?;
        if !value.is_finite() {
            return Err(IngestError::Parse {
                line,
                msg: format!("non-finite value {:?}", &rec[3]),
            });
        }
        let id = MetricId::new(&rec[1], &rec[2]).map_err(|e| IngestError::Parse {
            line,
            msg: e.to_string(),
        })?;
        raw.entry(id).or_default().push((ts, value));
    }

    if raw.is_empty() {
        return Err(IngestError::Alignment("no metric rows".into()));
    }

    for (id, samples) in raw.iter_mut() {
        samples.sort_by_key(|(ts, _)| *ts);
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(IngestError::Parse {
                line: 0,
                msg: format!("duplicate timestamp in series {id}"),
            });
        }
    }

    let series = match cfg.alignment {
        Alignment::Intersect => align_intersect(raw)?,
        Alignment::ForwardFill => align_forward_fill(raw, cfg)?,
    };
    Ok(MetricTable::new(series)?)
}

fn align_intersect(
    raw: BTreeMap<MetricId, Vec<(i64, f64)>>,
) -> Result<Vec<MetricSeries>, IngestError> {
    let mut common: Option<BTreeSet<i64>> = None;
    for samples in raw.values() {
        let ts: BTreeSet<i64> = samples.iter().map(|(t, _)| *t).collect();
        common = Some(match common {
            None => ts,
            Some(c) => c.intersection(&ts).cloned().collect(),
        });
    }
    let grid = common.unwrap();
    if grid.is_empty() {
        return Err(IngestError::Alignment(
            "timestamp intersection across series is empty".into(),
        ));
    }
    let mut out = Vec::with_capacity(raw.len());
    for (id, samples) in raw {
        let by_ts: BTreeMap<i64, f64> = samples.into_iter().collect();
        let values: Vec<f64> = grid.iter().map(|t| by_ts[t]).collect();
        out.push(MetricSeries::new(id, grid.iter().cloned().collect(), values)?);
    }
    Ok(out)
}

fn align_forward_fill(
    raw: BTreeMap<MetricId, Vec<(i64, f64)>>,
    cfg: &IngestConfig,
) -> Result<Vec<MetricSeries>, IngestError> {
    let start = raw
        .values()
        .map(|s| s.first().unwrap().0)
        .max()
        .unwrap();
    let end = raw.values().map(|s| s.last().unwrap().0).min().unwrap();
    if end < start {
        return Err(IngestError::Alignment(
            "series time ranges do not overlap".into(),
        ));
    }
    let grid: Vec<i64> = (start..=end).step_by(cfg.resample_interval as usize).collect();
    let mut out = Vec::with_capacity(raw.len());
    for (id, samples) in raw {
        let mut values = Vec::with_capacity(grid.len());
        let mut cursor = 0usize;
        for &t in &grid {
            while cursor + 1 < samples.len() && samples[cursor + 1].0 <= t {
                cursor += 1;
            }
            let (st, sv) = samples[cursor];
            if t - st > cfg.max_gap {
                return Err(IngestError::Alignment(format!(
                    "series {id} has a gap of {}s at t={t}, exceeding max_gap {}",
                    t - st,
                    cfg.max_gap
                )));
            }
            values.push(sv);
        }
        out.push(MetricSeries::new(id, grid.clone(), values)?);
    }
    Ok(out)
}

/// Writes a table back out in the same long-form CSV the loader reads.
pub fn save_metrics(table: &MetricTable, path: &Path) -> Result<(), IngestError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "timestamp,microservice,metric,value").map_err(|e| io_err(path, e))?;
    if let Some(grid) = table.grid() {
        for (i, ts) in grid.iter().enumerate() {
            for (id, series) in table.iter() {
                writeln!(
                    w,
                    "{ts},{},{},{}",
                    id.microservice,
                    id.name,
                    series.values()[i]
                )
                .map_err(|e| io_err(path, e))?;
            }
        }
    }
    Ok(())
}

/// Loads traces from JSONL. Malformed lines (bad JSON or empty hop lists)
/// are skipped and counted; more than half malformed fails the load.
pub fn load_traces(path: &Path) -> Result<(TraceSet, usize), IngestError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut traces = Vec::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<Trace>(&line) {
            Ok(tr) if !tr.hops.is_empty() => traces.push(tr),
            _ => skipped += 1,
        }
    }
    if total > 0 && skipped * 2 > total {
        return Err(IngestError::TooManyMalformed {
            count: skipped,
            total,
        });
    }
    Ok((TraceSet { traces }, skipped))
}

pub fn save_traces(traces: &TraceSet, path: &Path) -> Result<(), IngestError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for tr in &traces.traces {
        let line = serde_json::to_string(tr).expect("trace serialization is infallible");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    edges: Vec<(String, String)>,
}

/// Loads and validates a topology JSON file.
pub fn load_topology(path: &Path) -> Result<Topology, IngestError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let file: TopologyFile =
        serde_json::from_reader(BufReader::new(f)).map_err(|e| IngestError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
    Ok(Topology::from_edges(file.edges.into_iter().collect())?)
}

pub fn save_topology(t: &Topology, path: &Path) -> Result<(), IngestError> {
    let file = TopologyFile {
        edges: t.edges().iter().cloned().collect(),
    };
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| IngestError::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    writeln!(w).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Builds a topology whose edges are exactly the consecutive-hop pairs
/// observed across a trace set.
pub fn derive_topology(traces: &TraceSet) -> Result<Topology, IngestError> {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for tr in &traces.traces {
        for h in &tr.hops {
            nodes.insert(h.clone());
        }
        for w in tr.hops.windows(2) {
            edges.insert((w[0].clone(), w[1].clone()));
        }
    }
    Ok(Topology::new(nodes, edges)?)
}

/// Loads anomaly labels, one `microservice/metric` per line. Every label
/// must exist in the table's σ.
pub fn load_anomaly_labels(
    path: &Path,
    table: &MetricTable,
) -> Result<AnomalyLabelSet, IngestError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut impacted = BTreeSet::new();
    let mut unknown = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (ms, name) = line.split_once('/').ok_or_else(|| IngestError::Parse {
            line: i + 1,
            msg: format!("expected microservice/metric, got {line:?}"),
        })?;
        let id = MetricId::new(ms, name).map_err(|e| IngestError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if table.get(&id).is_none() {
            unknown.push(id.to_string());
        } else {
            impacted.insert(id);
        }
    }
    if !unknown.is_empty() {
        return Err(IngestError::UnknownMetrics(unknown));
    }
    Ok(AnomalyLabelSet { impacted })
}

pub fn save_anomaly_labels(labels: &AnomalyLabelSet, path: &Path) -> Result<(), IngestError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for id in &labels.impacted {
        writeln!(w, "{id}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        p
    }

    #[test]
    fn load_metrics_aligned_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "m.csv",
            "timestamp,microservice,metric,value\n\
             0,a,cpu,1.0\n3,a,cpu,2.0\n6,a,cpu,3.0\n9,a,cpu,4.0\n\
             0,a,mem,5.0\n3,a,mem,6.0\n6,a,mem,7.0\n9,a,mem,8.0\n",
        );
        let table = load_metrics(&p, &IngestConfig::default()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.grid().unwrap(), &[0, 3, 6, 9]);
    }

    #[test]
    fn load_metrics_intersect_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "m.csv",
            "timestamp,microservice,metric,value\n\
             0,a,x,1.0\n3,a,x,2.0\n6,a,x,3.0\n\
             0,a,y,4.0\n6,a,y,5.0\n",
        );
        let table = load_metrics(&p, &IngestConfig::default()).unwrap();
        assert_eq!(table.grid().unwrap(), &[0, 6]);
        let x = table.get(&MetricId::new("a", "x").unwrap()).unwrap();
        assert_eq!(x.values(), &[1.0, 3.0]);
    }

    #[test]
    fn load_metrics_rejects_nan() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "m.csv",
            "timestamp,microservice,metric,value\n0,a,x,NaN\n",
        );
        assert!(matches!(
            load_metrics(&p, &IngestConfig::default()),
            Err(IngestError::Parse { .. })
        ));
    }

    #[test]
    fn load_metrics_forward_fill_with_gap_guard() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "m.csv",
            "timestamp,microservice,metric,value\n\
             0,a,x,1.0\n30,a,x,2.0\n\
             0,a,y,5.0\n15,a,y,6.0\n30,a,y,7.0\n",
        );
        let cfg = IngestConfig {
            resample_interval: 15,
            alignment: Alignment::ForwardFill,
            max_gap: 60,
        };
        let table = load_metrics(&p, &cfg).unwrap();
        assert_eq!(table.grid().unwrap(), &[0, 15, 30]);
        let x = table.get(&MetricId::new("a", "x").unwrap()).unwrap();
        assert_eq!(x.values(), &[1.0, 1.0, 2.0]);

        let tight = IngestConfig { max_gap: 10, ..cfg };
        assert!(matches!(
            load_metrics(&p, &tight),
            Err(IngestError::Alignment(_))
        ));
    }

    #[test]
    fn load_traces_happy_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let good = write_file(
            &dir,
            "t.jsonl",
            "{\"trace_id\":\"1\",\"hops\":[\"a\",\"b\"]}\n\
             {\"trace_id\":\"2\",\"hops\":[\"a\"]}\n\
             {\"trace_id\":\"3\",\"hops\":[\"a\",\"b\"]}\n",
        );
        let (ts, skipped) = load_traces(&good).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(skipped, 0);

        let with_empty = write_file(
            &dir,
            "e.jsonl",
            "{\"trace_id\":\"1\",\"hops\":[\"a\"]}\n{\"trace_id\":\"2\",\"hops\":[]}\n",
        );
        let (ts, skipped) = load_traces(&with_empty).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(skipped, 1);

        let mut content = String::new();
        for i in 0..4 {
            content.push_str(&format!("{{\"trace_id\":\"{i}\",\"hops\":[\"a\"]}}\n"));
        }
        for _ in 0..6 {
            content.push_str("not json\n");
        }
        let bad = write_file(&dir, "bad.jsonl", &content);
        assert!(matches!(
            load_traces(&bad),
            Err(IngestError::TooManyMalformed { count: 6, total: 10 })
        ));
    }

    #[test]
    fn load_topology_variants() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_file(&dir, "ok.json", "{\"edges\": [[\"a\",\"b\"],[\"b\",\"c\"]]}");
        let t = load_topology(&ok).unwrap();
        assert_eq!(t.root(), "a");

        let cyc = write_file(&dir, "cyc.json", "{\"edges\": [[\"a\",\"b\"],[\"b\",\"a\"]]}");
        assert!(load_topology(&cyc).is_err());

        let two = write_file(&dir, "two.json", "{\"edges\": [[\"a\",\"c\"],[\"b\",\"c\"]]}");
        assert!(load_topology(&two).is_err());
    }

    #[test]
    fn derive_topology_from_traces() {
        let traces = TraceSet {
            traces: vec![
                Trace { trace_id: "1".into(), hops: vec!["a".into(), "b".into(), "d".into()] },
                Trace { trace_id: "2".into(), hops: vec!["a".into(), "c".into(), "d".into()] },
            ],
        };
        let t = derive_topology(&traces).unwrap();
        assert_eq!(t.root(), "a");
        assert_eq!(t.edges().len(), 4);

        let cyclic = TraceSet {
            traces: vec![
                Trace { trace_id: "1".into(), hops: vec!["a".into(), "b".into()] },
                Trace { trace_id: "2".into(), hops: vec!["b".into(), "a".into()] },
            ],
        };
        assert!(derive_topology(&cyclic).is_err());
    }

    #[test]
    fn anomaly_labels_checked_against_sigma() {
        let dir = tempfile::tempdir().unwrap();
        let metrics = write_file(
            &dir,
            "m.csv",
            "timestamp,microservice,metric,value\n0,m1,cpu,1.0\n3,m1,cpu,2.0\n",
        );
        let table = load_metrics(&metrics, &IngestConfig::default()).unwrap();

        let ok = write_file(&dir, "l.txt", "m1/cpu\n");
        let labels = load_anomaly_labels(&ok, &table).unwrap();
        assert_eq!(labels.impacted.len(), 1);

        let ghost = write_file(&dir, "g.txt", "m9/ghost\n");
        assert!(matches!(
            load_anomaly_labels(&ghost, &table),
            Err(IngestError::UnknownMetrics(_))
        ));

        let empty = write_file(&dir, "e.txt", "");
        assert!(load_anomaly_labels(&empty, &table).unwrap().is_empty());
    }

    #[test]
    fn loaders_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "m.csv",
            "timestamp,microservice,metric,value\n\
             0,a,x,1.5\n3,a,x,2.25\n\
             0,b,y,-0.125\n3,b,y,7.75\n",
        );
        let cfg = IngestConfig::default();
        let table = load_metrics(&p, &cfg).unwrap();
        let out = dir.path().join("m2.csv");
        save_metrics(&table, &out).unwrap();
        let table2 = load_metrics(&out, &cfg).unwrap();
        assert_eq!(table.len(), table2.len());
        for (id, s) in table.iter() {
            assert_eq!(s, table2.get(id).unwrap());
        }

        let traces = TraceSet {
            traces: vec![Trace { trace_id: "1".into(), hops: vec!["a".into(), "b".into()] }],
        };
        let tp = dir.path().join("t.jsonl");
        save_traces(&traces, &tp).unwrap();
        let (traces2, _) = load_traces(&tp).unwrap();
        assert_eq!(traces, traces2);

        let topo = derive_topology(&traces).unwrap();
        let top = dir.path().join("topo.json");
        save_topology(&topo, &top).unwrap();
        assert_eq!(topo, load_topology(&top).unwrap());

        let labels = AnomalyLabelSet {
            impacted: [MetricId::new("a", "x").unwrap()].into_iter().collect(),
        };
        let lp = dir.path().join("l.txt");
        save_anomaly_labels(&labels, &lp).unwrap();
        assert_eq!(labels, load_anomaly_labels(&lp, &table).unwrap());
    }
}

//! Discretization, entropy, mutual information, and the correlation
//! backends used for coverage scoring.
//!
//! Entropy and mutual information are computed on equal-width discretized
//! series and reported in bits, so redundancy thresholds are commensurate
//! with entropy.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::model::{CorrelationMethod, MetricId, MetricSeries, MetricTable};

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A metric series reduced to bin indices in [0, bin_count).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteSeries {
    symbols: Vec<u32>,
    bin_count: u32,
}

impl DiscreteSeries {
    pub fn new(symbols: Vec<u32>, bin_count: u32) -> Self {
        debug_assert!(symbols.iter().all(|&s| s < bin_count));
        DiscreteSeries { symbols, bin_count }
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn bin_count(&self) -> u32 {
        self.bin_count
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Equal-width binning over [min, max]. Bins are half-open except the last,
/// which is closed; a constant series maps everything to bin 0.
pub fn discretize(series: &MetricSeries, bins: u32) -> DiscreteSeries {
    discretize_values(series.values(), bins)
}

pub fn discretize_values(values: &[f64], bins: u32) -> DiscreteSeries {
    assert!(bins >= 1, "bins must be positive");
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return DiscreteSeries::new(vec![0; values.len()], bins);
    }
    let width = (max - min) / bins as f64;
    let symbols = values
        .iter()
        .map(|v| {
            let raw = ((v - min) / width).floor() as i64;
            raw.clamp(0, bins as i64 - 1) as u32
        })
        .collect();
    DiscreteSeries::new(symbols, bins)
}

/// Shannon entropy in bits of the empirical symbol distribution.
pub fn entropy(d: &DiscreteSeries) -> f64 {
    let n = d.len() as f64;
    if d.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &s in d.symbols() {
        *counts.entry(s).or_insert(0) += 1;
    }
    let mut h = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        h -= p * p.log2();
    }
    h
}

/// Mutual information in bits between two equally long discrete series.
pub fn mutual_information(a: &DiscreteSeries, b: &DiscreteSeries) -> Result<f64, InfoError> {
    if a.len() != b.len() {
        return Err(InfoError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut pa: BTreeMap<u32, usize> = BTreeMap::new();
    let mut pb: BTreeMap<u32, usize> = BTreeMap::new();
    for (&x, &y) in a.symbols().iter().zip(b.symbols()) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *pa.entry(x).or_insert(0) += 1;
        *pb.entry(y).or_insert(0) += 1;
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let p_xy = c as f64 / n;
        let p_x = pa[&x] as f64 / n;
        let p_y = pb[&y] as f64 / n;
        mi += p_xy * (p_xy / (p_x * p_y)).log2();
    }
    // True MI is non-negative; clamp away float dust.
    Ok(mi.max(0.0))
}

/// Symmetric |σ|×|σ| association matrix over a metric table.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    method: CorrelationMethod,
    ids: Vec<MetricId>,
    index: BTreeMap<MetricId, usize>,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn method(&self) -> CorrelationMethod {
        self.method
    }

    pub fn ids(&self) -> &[MetricId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn get(&self, a: &MetricId, b: &MetricId) -> Option<f64> {
        let i = *self.index.get(a)?;
        let j = *self.index.get(b)?;
        Some(self.value(i, j))
    }

    pub fn contains(&self, id: &MetricId) -> bool {
        self.index.contains_key(id)
    }

    /// CSV export: id header row and column, shortest-round-trip floats.
    pub fn write_csv(&self, path: &Path) -> Result<(), InfoError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "metric")?;
        for id in &self.ids {
            write!(f, ",{id}")?;
        }
        writeln!(f)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(f, "{id}")?;
            for j in 0..self.ids.len() {
                write!(f, ",{}", self.value(i, j))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Pairwise association of every metric with every other.
///
/// Rank/linear methods run on the raw aligned values and store magnitudes
/// (redundancy is sign-agnostic); mutual information runs on discretized
/// values with entropy on the diagonal. A zero-variance series correlates
/// 0 with everything rather than erroring.
pub fn correlation_matrix(
    table: &MetricTable,
    method: CorrelationMethod,
    bins: u32,
) -> Result<CorrelationMatrix, InfoError> {
    let ids: Vec<MetricId> = table.sigma().cloned().collect();
    let n = ids.len();
    let mut values = vec![0.0; n * n];

    match method {
        CorrelationMethod::MutualInformation => {
            let discs: Vec<DiscreteSeries> = ids
                .iter()
                .map(|id| discretize(table.get(id).unwrap(), bins))
                .collect();
            for i in 0..n {
                values[i * n + i] = entropy(&discs[i]);
                for j in (i + 1)..n {
                    let mi = mutual_information(&discs[i], &discs[j])?;
                    values[i * n + j] = mi;
                    values[j * n + i] = mi;
                }
            }
        }
        _ => {
            let cols: Vec<&[f64]> = ids.iter().map(|id| table.get(id).unwrap().values()).collect();
            for i in 0..n {
                values[i * n + i] = 1.0;
                for j in (i + 1)..n {
                    let r = match method {
                        CorrelationMethod::Pearson => pearson(cols[i], cols[j]),
                        CorrelationMethod::Spearman => spearman(cols[i], cols[j]),
                        CorrelationMethod::Kendall => kendall_tau_b(cols[i], cols[j]),
                        CorrelationMethod::MutualInformation => unreachable!(),
                    }
                    .abs();
                    values[i * n + j] = r;
                    values[j * n + i] = r;
                }
            }
        }
    }

    let index = ids.iter().cloned().zip(0..).collect();
    Ok(CorrelationMatrix {
        method,
        ids,
        index,
        values,
    })
}

/// Pearson r; 0 when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks with tie correction (1-based midranks).
fn midranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman ρ: Pearson on midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&midranks(x), &midranks(y))
}

/// Kendall τ-b with tie correction. 0 when a denominator degenerates.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 || dy == 0.0 {
                continue;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    // Σ t(t-1)/2 over tie groups equals pairs tied in that variable.
    let n1 = tie_pairs(x) as f64;
    let n2 = tie_pairs(y) as f64;
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / denom
}

fn tie_pairs(x: &[f64]) -> i64 {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut pairs = 0i64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as i64;
        pairs += t * (t - 1) / 2;
        i = j + 1;
    }
    pairs
}

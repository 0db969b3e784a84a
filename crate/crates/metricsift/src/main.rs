use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use metricsift::aimd::{aimd_select, anomaly_coverage, coverage, export_log, CoverageReport};
use metricsift::infotheory::correlation_matrix;
use metricsift::ingest::{
    self, derive_topology, load_anomaly_labels, load_metrics, load_traces, Alignment, IngestConfig,
};
use metricsift::model::{AimdParams, CorrelationMethod, MetricId, SubsetMapping};
use metricsift::oracle::{check_feasible, objective, solve_exact, OracleProblem};
use metricsift::selection::{select_subset, PivotSet};
use metricsift::synthgen::{self, AnomalyKind, SynthSpec};

const EXIT_INGEST: u8 = 1;
const EXIT_ANALYSIS: u8 = 2;

#[derive(Parser)]
#[command(
    name = "metricsift",
    about = "Selects an approximately minimal, maximally informative metric subset per microservice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: ingest, AIMD threshold search, reports.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic bundle (metrics, traces, topology, labels).
    Synth(SynthArgs),
    /// Compare greedy selection with the exact brute-force solver.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    traces: PathBuf,
    /// Topology JSON; derived from traces when omitted.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Anomaly label file; enables the anomaly-coverage report.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value = "pearson")]
    method: CorrelationMethod,
    /// Correlation pruning threshold; defaults per method.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    epsilon0: f64,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[arg(long, default_value_t = 0.005)]
    beta: f64,
    #[arg(long, default_value_t = 100)]
    eta: usize,
    #[arg(long, default_value_t = 5.0)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    bins: u32,
    #[arg(long, default_value_t = 15)]
    resample_interval: i64,
    #[arg(long, default_value = "intersect")]
    alignment: String,
    #[arg(long, default_value_t = 60)]
    max_gap: i64,
    /// Also export the full correlation matrix as CSV.
    #[arg(long)]
    export_corr: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    services: usize,
    #[arg(long, default_value_t = 12)]
    metrics_per_service: usize,
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    constants: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 240)]
    samples: usize,
    #[arg(long, default_value_t = 2000)]
    traces: usize,
    #[arg(long, default_value_t = 0.0)]
    anomaly_rate: f64,
    /// Comma-separated anomaly kinds (cpu_spike, memory_drop, ...).
    #[arg(long)]
    anomaly_kinds: Option<String>,
    /// JSON file: {"branches": [["a","b",0.5], ...]}; random DAG when omitted.
    #[arg(long)]
    branch_probs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Subset cardinality bound χ; defaults to the metric count.
    #[arg(long)]
    chi: Option<usize>,
    #[arg(long, default_value_t = 10)]
    bins: u32,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

#[derive(Serialize)]
struct ConfigEcho {
    method: String,
    theta: f64,
    epsilon0: f64,
    alpha: f64,
    beta: f64,
    eta: usize,
    tau: f64,
    bins: u32,
    resample_interval: i64,
    alignment: String,
    max_gap: i64,
    metrics: String,
    traces: String,
    topology: Option<String>,
    labels: Option<String>,
}

#[derive(Serialize)]
struct BestSubsetReport {
    config: ConfigEcho,
    total_metrics: usize,
    total_selected: usize,
    reduction_percent: f64,
    assignments: BTreeMap<String, Vec<String>>,
    provenance: BTreeMap<String, Vec<metricsift::model::PathEpsilon>>,
}

#[derive(Serialize)]
struct CoverageJson {
    covered: usize,
    total: usize,
    coverage: f64,
    theta: f64,
    method: String,
}

#[derive(Serialize)]
struct CoverageFile {
    config: ConfigEcho,
    coverage: CoverageJson,
    anomaly_coverage: Option<CoverageJson>,
}

fn coverage_json(rep: &CoverageReport, total: usize) -> CoverageJson {
    CoverageJson {
        covered: rep.covered.len(),
        total,
        coverage: rep.coverage,
        theta: rep.theta,
        method: rep.method.to_string(),
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> ExitCode {
    let alignment = match args.alignment.as_str() {
        "intersect" => Alignment::Intersect,
        "forward_fill" => Alignment::ForwardFill,
        other => {
            eprintln!("ingest: unknown alignment {other:?}");
            return ExitCode::from(EXIT_INGEST);
        }
    };
    let ingest_cfg = IngestConfig {
        resample_interval: args.resample_interval,
        alignment,
        max_gap: args.max_gap,
    };

    let table = match load_metrics(&args.metrics, &ingest_cfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ingest: failed to load metrics {}: {e}", args.metrics.display());
            return ExitCode::from(EXIT_INGEST);
        }
    };
    let (traces, skipped) = match load_traces(&args.traces) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("ingest: failed to load traces {}: {e}", args.traces.display());
            return ExitCode::from(EXIT_INGEST);
        }
    };
    if skipped > 0 {
        eprintln!("ingest: warning: skipped {skipped} malformed trace lines");
    }
    let topology = match &args.topology {
        Some(p) => match ingest::load_topology(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("ingest: failed to load topology {}: {e}", p.display());
                return ExitCode::from(EXIT_INGEST);
            }
        },
        None => match derive_topology(&traces) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("ingest: failed to derive topology from traces: {e}");
                return ExitCode::from(EXIT_INGEST);
            }
        },
    };
    if let Err(e) = traces.validate_against(&topology) {
        eprintln!("ingest: traces inconsistent with topology: {e}");
        return ExitCode::from(EXIT_INGEST);
    }
    let labels = match &args.labels {
        Some(p) => match load_anomaly_labels(p, &table) {
            Ok(l) => Some(l),
            Err(e) => {
                eprintln!("ingest: failed to load labels {}: {e}", p.display());
                return ExitCode::from(EXIT_INGEST);
            }
        },
        None => None,
    };

    let params = AimdParams {
        tau: args.tau,
        alpha: args.alpha,
        beta: args.beta,
        eta: args.eta,
        epsilon0: args.epsilon0,
        theta: args.theta.unwrap_or_else(|| args.method.default_theta()),
        correlation_method: args.method,
        bins: args.bins,
    };

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("analysis: cannot create output directory {}: {e}", args.out.display());
        return ExitCode::from(EXIT_ANALYSIS);
    }

    let (best, log) = match aimd_select(&topology, &table, &traces, &params) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("analysis: aimd search failed: {e}");
            return ExitCode::from(EXIT_ANALYSIS);
        }
    };

    let corr = match correlation_matrix(&table, params.correlation_method, params.bins) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("analysis: correlation matrix failed: {e}");
            return ExitCode::from(EXIT_ANALYSIS);
        }
    };
    let cov = match coverage(&best, &corr, params.theta) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("analysis: coverage computation failed: {e}");
            return ExitCode::from(EXIT_ANALYSIS);
        }
    };
    let anomaly_cov = match &labels {
        Some(l) if !l.is_empty() => match anomaly_coverage(&best, l, &corr, params.theta) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("analysis: anomaly coverage failed: {e}");
                return ExitCode::from(EXIT_ANALYSIS);
            }
        },
        _ => None,
    };

    let config = ConfigEcho {
        method: params.correlation_method.to_string(),
        theta: params.theta,
        epsilon0: params.epsilon0,
        alpha: params.alpha,
        beta: params.beta,
        eta: params.eta,
        tau: params.tau,
        bins: params.bins,
        resample_interval: ingest_cfg.resample_interval,
        alignment: args.alignment.clone(),
        max_gap: ingest_cfg.max_gap,
        metrics: args.metrics.display().to_string(),
        traces: args.traces.display().to_string(),
        topology: args.topology.as_ref().map(|p| p.display().to_string()),
        labels: args.labels.as_ref().map(|p| p.display().to_string()),
    };

    let anomaly = anomaly_cov
        .as_ref()
        .map(|c| (c, labels.as_ref().map(|l| l.impacted.len()).unwrap_or(0)));
    match write_reports(&args, &config, table.len(), &best, &log, &cov, anomaly, &params) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("analysis: failed to write reports: {e}");
            return ExitCode::from(EXIT_ANALYSIS);
        }
    }

    if args.export_corr {
        if let Err(e) = corr.write_csv(&args.out.join("correlation_matrix.csv")) {
            eprintln!("analysis: failed to export correlation matrix: {e}");
            return ExitCode::from(EXIT_ANALYSIS);
        }
    }

    ExitCode::SUCCESS
}

#[allow(clippy::too_many_arguments)]
fn write_reports(
    args: &AnalyzeArgs,
    config: &ConfigEcho,
    total_metrics: usize,
    best: &SubsetMapping,
    log: &metricsift::model::AimdLog,
    cov: &CoverageReport,
    anomaly: Option<(&CoverageReport, usize)>,
    params: &AimdParams,
) -> Result<(), Box<dyn std::error::Error>> {
    let total_selected = best.total_size();
    let reduction = if total_metrics == 0 {
        0.0
    } else {
        100.0 * (1.0 - total_selected as f64 / total_metrics as f64)
    };

    let best_report = BestSubsetReport {
        config: clone_config(config),
        total_metrics,
        total_selected,
        reduction_percent: reduction,
        assignments: best
            .assignments
            .iter()
            .map(|(m, s)| (m.clone(), s.iter().map(|id| id.name.clone()).collect()))
            .collect(),
        provenance: best.provenance.clone(),
    };
    let mut f = std::fs::File::create(args.out.join("best_subset.json"))?;
    serde_json::to_writer_pretty(&mut f, &best_report)?;
    use std::io::Write as _;
    writeln!(f)?;

    export_log(log, &args.out.join("aimd_log.csv"))?;

    let cov_file = CoverageFile {
        config: clone_config(config),
        coverage: coverage_json(cov, total_metrics),
        anomaly_coverage: anomaly.map(|(c, label_count)| coverage_json(c, label_count)),
    };
    let mut f = std::fs::File::create(args.out.join("coverage_report.json"))?;
    serde_json::to_writer_pretty(&mut f, &cov_file)?;
    writeln!(f)?;

    let mut summary = String::new();
    summary.push_str("metric subset selection summary\n");
    summary.push_str("===============================\n\n");
    summary.push_str(&format!(
        "config: method={} theta={} epsilon0={} alpha={} beta={} eta={} tau={} bins={}\n\n",
        params.correlation_method,
        params.theta,
        params.epsilon0,
        params.alpha,
        params.beta,
        params.eta,
        params.tau,
        params.bins
    ));
    summary.push_str(&format!("total metrics:   {total_metrics}\n"));
    summary.push_str(&format!("selected:        {total_selected}\n"));
    summary.push_str(&format!("reduction:       {reduction:.2}%\n"));
    summary.push_str(&format!("coverage C:      {:.4}\n", cov.coverage));
    if let Some((a, _)) = anomaly {
        summary.push_str(&format!("coverage C_A:    {:.4}\n", a.coverage));
    }
    summary.push_str("\nper-microservice selection:\n");
    for (m, set) in &best.assignments {
        summary.push_str(&format!("  {m}: {}\n", set.len()));
        if set.is_empty() {
            summary.push_str(&format!("    warning: no metrics selected for {m}\n"));
        }
    }
    std::fs::write(args.out.join("summary.txt"), summary)?;
    Ok(())
}

fn clone_config(c: &ConfigEcho) -> ConfigEcho {
    ConfigEcho {
        method: c.method.clone(),
        theta: c.theta,
        epsilon0: c.epsilon0,
        alpha: c.alpha,
        beta: c.beta,
        eta: c.eta,
        tau: c.tau,
        bins: c.bins,
        resample_interval: c.resample_interval,
        alignment: c.alignment.clone(),
        max_gap: c.max_gap,
        metrics: c.metrics.clone(),
        traces: c.traces.clone(),
        topology: c.topology.clone(),
        labels: c.labels.clone(),
    }
}

fn cmd_synth(args: SynthArgs) -> ExitCode {
    let branch_probs = match &args.branch_probs {
        Some(p) => match read_branch_probs(p) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("synth: failed to read branch probabilities: {e}");
                return ExitCode::from(EXIT_INGEST);
            }
        },
        None => BTreeMap::new(),
    };
    let anomaly_kinds = match &args.anomaly_kinds {
        None => AnomalyKind::ALL.to_vec(),
        Some(s) => {
            let mut kinds = Vec::new();
            for part in s.split(',') {
                match part.trim().parse::<AnomalyKind>() {
                    Ok(k) => kinds.push(k),
                    Err(e) => {
                        eprintln!("synth: {e}");
                        return ExitCode::from(EXIT_INGEST);
                    }
                }
            }
            kinds
        }
    };
    let spec = SynthSpec {
        seed: args.seed,
        services: args.services,
        branch_probs,
        metrics_per_service: args.metrics_per_service,
        redundancy_groups: args.groups,
        constant_metrics: args.constants,
        noise_sigma: args.noise_sigma,
        samples: args.samples,
        trace_count: args.traces,
        anomaly_kinds,
        anomaly_rate: args.anomaly_rate,
    };
    let (topology, traces, table, labels) = match synthgen::generate(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("synth: {e}");
            return ExitCode::from(EXIT_INGEST);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("synth: cannot create output directory: {e}");
        return ExitCode::from(EXIT_INGEST);
    }
    if let Err(e) = synthgen::write_bundle(&args.out, &topology, &traces, &table, &labels) {
        eprintln!("synth: failed to write bundle: {e}");
        return ExitCode::from(EXIT_INGEST);
    }
    println!(
        "wrote bundle to {}: {} services, {} metrics, {} traces, {} labels",
        args.out.display(),
        topology.microservices().len(),
        table.len(),
        traces.len(),
        labels.impacted.len()
    );
    ExitCode::SUCCESS
}

#[derive(serde::Deserialize)]
struct BranchProbsFile {
    branches: Vec<(String, String, f64)>,
}

fn read_branch_probs(
    path: &PathBuf,
) -> Result<BTreeMap<(String, String), f64>, Box<dyn std::error::Error>> {
    let f = std::fs::File::open(path)?;
    let file: BranchProbsFile = serde_json::from_reader(f)?;
    Ok(file
        .branches
        .into_iter()
        .map(|(u, v, p)| ((u, v), p))
        .collect())
}

fn cmd_oracle(args: OracleArgs) -> ExitCode {
    let table = match load_metrics(&args.metrics, &IngestConfig::default()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ingest: failed to load metrics {}: {e}", args.metrics.display());
            return ExitCode::from(EXIT_INGEST);
        }
    };
    let series: BTreeMap<MetricId, metricsift::infotheory::DiscreteSeries> = table
        .iter()
        .map(|(id, s)| (id.clone(), metricsift::infotheory::discretize(s, args.bins)))
        .collect();
    let chi = args.chi.unwrap_or(series.len());
    let problem = OracleProblem {
        metrics: series.iter().map(|(id, d)| (id.clone(), d.clone())).collect(),
        epsilon: args.epsilon,
        chi,
    };
    let (exact_set, exact_obj) = match solve_exact(&problem) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("oracle: {e}");
            return ExitCode::from(EXIT_INGEST);
        }
    };
    let greedy_set = match select_subset(&series, &PivotSet::default(), &series, args.epsilon) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("analysis: greedy selection failed: {e}");
            return ExitCode::from(EXIT_ANALYSIS);
        }
    };
    let greedy_obj = objective(&greedy_set, &series);
    let greedy_feasible = check_feasible(&greedy_set, &series, args.epsilon, chi);

    println!("epsilon: {}  chi: {chi}  metrics: {}", args.epsilon, series.len());
    println!(
        "greedy: size={} objective={:.6} feasible={}",
        greedy_set.len(),
        greedy_obj,
        greedy_feasible
    );
    for id in &greedy_set {
        println!("  {id}");
    }
    println!("exact:  size={} objective={:.6}", exact_set.len(), exact_obj);
    for id in &exact_set {
        println!("  {id}");
    }
    ExitCode::SUCCESS
}

//! Experiment driver: Cartesian sweeps, parallel replications, aggregation
//! and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ResolvedConfig};
use crate::metrics::{
    crash_fraction, emit_csv, processing_stats, CrashRow, ExperimentResults, MetricsError, PdrHistogram, PdrRow,
    ProcessingMoments, ProcessingRow,
};
use crate::rng::replication_seed;
use crate::sim::{run_replication, ReplicationOutcome, SimError};

pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("bad argument `{arg}`: {reason}")]
    Argument { arg: String, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Argument { .. } => 2,
            HarnessError::Io { .. } => 3,
            HarnessError::Invariant(_) => 4,
        }
    }
}

impl From<MetricsError> for HarnessError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::IoFailure { path, source } => HarnessError::Io { path, source },
            MetricsError::Csv { path, source } => {
                HarnessError::Io { path, source: std::io::Error::other(source.to_string()) }
            }
            MetricsError::IncompleteRun { .. } => HarnessError::Invariant(e.to_string()),
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        HarnessError::Invariant(e.to_string())
    }
}

/// One `--sweep key=v1,v2,...` axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

fn split_pair(arg: &str) -> Result<(&str, &str), HarnessError> {
    let bad = |reason: &str| HarnessError::Argument { arg: arg.to_owned(), reason: reason.to_owned() };
    let (k, v) = arg.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(bad("expected key=value"));
    }
    Ok((k, v))
}

pub fn parse_sweep(arg: &str) -> Result<Sweep, HarnessError> {
    let (key, list) = split_pair(arg)?;
    let values: Vec<String> = list.split(',').map(|v| v.trim().to_owned()).collect();
    if values.iter().any(String::is_empty) {
        return Err(HarnessError::Argument { arg: arg.to_owned(), reason: "empty sweep value".into() });
    }
    Ok(Sweep { key: key.to_owned(), values })
}

pub fn parse_override(arg: &str) -> Result<(String, String), HarnessError> {
    split_pair(arg).map(|(k, v)| (k.to_owned(), v.to_owned()))
}

/// One point of the sweep matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub assignments: Vec<(String, String)>,
    #[serde(skip)]
    pub config: ExperimentConfig,
}

/// Cartesian product of the sweeps over `base`, first axis outermost.
pub fn expand_sweeps(base: &ExperimentConfig, sweeps: &[Sweep]) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut points = vec![SweepPoint { assignments: Vec::new(), config: base.clone() }];
    for s in sweeps {
        let mut next = Vec::with_capacity(points.len() * s.values.len());
        for p in &points {
            for v in &s.values {
                let mut config = p.config.clone();
                config.set(&s.key, v)?;
                let mut assignments = p.assignments.clone();
                assignments.push((s.key.clone(), v.clone()));
                next.push(SweepPoint { assignments, config });
            }
        }
        points = next;
    }
    for p in &points {
        p.config.validate()?;
    }
    Ok(points)
}

/// Label of a configuration in the CSV outputs.
pub fn scheme_label(cfg: &ExperimentConfig) -> String {
    if cfg.v2v {
        cfg.scheme.to_string()
    } else {
        "NoV2V".to_owned()
    }
}

/// Aggregate of all replications at one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: SweepPoint,
    pub seeds: Vec<u64>,
    pub pdr: PdrHistogram,
    pub processing: ProcessingMoments,
    /// Crash percentage per replication, in seed order.
    pub crashed_pct: Vec<f64>,
}

fn aggregate(point: SweepPoint, outcomes: &[ReplicationOutcome]) -> Result<PointResult, HarnessError> {
    let mut pdr = PdrHistogram::default();
    let mut processing = ProcessingMoments::default();
    let mut crashed_pct = Vec::new();
    for o in outcomes {
        pdr.merge(&o.pdr);
        processing.merge(&processing_stats(&o.ledgers, o.window));
        if let Some(c) = &o.crash {
            crashed_pct.push(crash_fraction(c)?);
        }
    }
    Ok(PointResult { point, seeds: outcomes.iter().map(|o| o.rep_seed).collect(), pdr, processing, crashed_pct })
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Invariant(format!("worker pool: {e}")))
}

/// Run every replication of every point on `workers` threads. Results
/// depend only on the configurations and seeds, never on scheduling.
pub fn run_points(points: &[SweepPoint], workers: usize) -> Result<Vec<PointResult>, HarnessError> {
    let jobs: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.config.replications).map(move |r| (i, replication_seed(p.config.seed, r))))
        .collect();
    let pool = thread_pool(workers.max(1))?;
    let outcomes: Vec<Result<ReplicationOutcome, SimError>> =
        pool.install(|| jobs.par_iter().map(|&(i, seed)| run_replication(&points[i].config, seed)).collect());

    let mut by_point: Vec<Vec<ReplicationOutcome>> = vec![Vec::new(); points.len()];
    for ((i, _), o) in jobs.iter().zip(outcomes) {
        by_point[*i].push(o?);
    }
    points.iter().cloned().zip(by_point).map(|(p, o)| aggregate(p, &o)).collect()
}

/// Rows for the three CSV files.
pub fn to_results(points: &[PointResult]) -> ExperimentResults {
    let mut r = ExperimentResults::default();
    for p in points {
        let c = &p.point.config;
        let scheme = scheme_label(c);
        if p.pdr.total_attempts() > 0 {
            r.pdr.push(PdrRow { scheme: scheme.clone(), alpha: c.alpha, lanes: c.lanes, histogram: p.pdr.clone() });
        }
        if p.processing.slots() > 0 {
            r.processing.push(ProcessingRow {
                scheme: scheme.clone(),
                alpha: c.alpha,
                beta: c.beta,
                lanes: c.lanes,
                moments: p.processing,
            });
        }
        for (seed, pct) in p.seeds.iter().zip(&p.crashed_pct) {
            r.crashes.push(CrashRow {
                scheme: scheme.clone(),
                alpha: c.alpha,
                beta: c.beta,
                lanes: c.lanes,
                seed: *seed,
                crashed_pct: *pct,
            });
        }
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestPoint {
    pub assignments: Vec<(String, String)>,
    pub seeds: Vec<u64>,
}

/// Record of one invocation, written once before exit.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub status: String,
    pub config: Vec<ManifestEntry>,
    pub tx_power_dbm: f64,
    pub sweeps: Vec<Sweep>,
    pub points: Vec<ManifestPoint>,
    pub workers: usize,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, HarnessError> {
    let path = dir.join(MANIFEST_JSON);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| HarnessError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// A fully specified `run` invocation.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub resolved: ResolvedConfig,
    pub sweeps: Vec<Sweep>,
    pub workers: usize,
    pub out: PathBuf,
}

/// Execute a run and write CSVs plus the manifest into `out`. The manifest
/// is written whether or not the simulations succeed, once the output
/// directory exists.
pub fn execute(req: &RunRequest) -> Result<RunManifest, HarnessError> {
    let started = unix_now();
    let points = expand_sweeps(&req.resolved.config, &req.sweeps)?;
    fs::create_dir_all(&req.out).map_err(|source| HarnessError::Io { path: req.out.clone(), source })?;

    let outcome = run_points(&points, req.workers).and_then(|results| {
        let files = emit_csv(&to_results(&results), &req.out)?;
        Ok((results, files))
    });

    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        status: "ok".to_owned(),
        config: req
            .resolved
            .entries()
            .into_iter()
            .map(|(k, v, o)| ManifestEntry { key: k.to_owned(), value: v, origin: o.to_owned() })
            .collect(),
        tx_power_dbm: req.resolved.config.tx_power_dbm(),
        sweeps: req.sweeps.clone(),
        points: points
            .iter()
            .map(|p| ManifestPoint {
                assignments: p.assignments.clone(),
                seeds: (0..p.config.replications).map(|r| replication_seed(p.config.seed, r)).collect(),
            })
            .collect(),
        workers: req.workers,
        started_unix_s: started,
        finished_unix_s: 0.0,
        outputs: Vec::new(),
    };
    let result = match outcome {
        Ok((_, files)) => {
            manifest.outputs = files.iter().map(|f| f.display().to_string()).collect();
            manifest.outputs.push(req.out.join(MANIFEST_JSON).display().to_string());
            Ok(())
        }
        Err(e) => {
            manifest.status = format!("error: {e}");
            Err(e)
        }
    };
    manifest.finished_unix_s = unix_now();
    write_manifest(&req.out, &manifest)?;
    result.map(|()| manifest)
}

/// Resolved configuration dump with provenance, as printed by `validate`.
pub fn validation_report(resolved: &ResolvedConfig) -> String {
    let mut s = String::new();
    for (k, v, o) in resolved.entries() {
        s.push_str(&format!("{k} = {v}  # {o}\n"));
    }
    let calibrated = if resolved.config.radio.tx_power_dbm.is_none() { "calibrated" } else { "configured" };
    s.push_str(&format!("# tx_power_dbm ({calibrated}) = {:.4}\n", resolved.config.tx_power_dbm()));
    s
}

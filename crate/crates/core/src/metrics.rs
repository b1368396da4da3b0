//! Reception, processing-load and crash statistics, and CSV output.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::security::{Decision, PacketKind};
use crate::time::SimTime;

pub const PDR_BIN_M: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run incomplete: {moving} platoon vehicles still moving")]
    IncompleteRun { moving: usize },
    #[error("I/O failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("CSV failure on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCount {
    pub attempts: u64,
    pub successes: u64,
}

/// Reception attempts and successes in 10 m distance bins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdrHistogram {
    pub bins: Vec<BinCount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdrPoint {
    pub bin_m: f64,
    pub attempts: u64,
    pub successes: u64,
    pub pdr: f64,
}

impl PdrHistogram {
    pub fn record(&mut self, distance_m: f64, success: bool) {
        let bin = (distance_m / PDR_BIN_M) as usize;
        if bin >= self.bins.len() {
            self.bins.resize(bin + 1, BinCount::default());
        }
        let b = &mut self.bins[bin];
        b.attempts += 1;
        b.successes += u64::from(success);
    }

    pub fn add(&mut self, bin: usize, attempts: u64, successes: u64) {
        assert!(successes <= attempts);
        if bin >= self.bins.len() {
            self.bins.resize(bin + 1, BinCount::default());
        }
        self.bins[bin].attempts += attempts;
        self.bins[bin].successes += successes;
    }

    pub fn merge(&mut self, other: &PdrHistogram) {
        for (i, b) in other.bins.iter().enumerate() {
            self.add(i, b.attempts, b.successes);
        }
    }

    pub fn total_attempts(&self) -> u64 {
        self.bins.iter().map(|b| b.attempts).sum()
    }
}

/// Success ratio per bin, omitting bins with no attempts.
pub fn pdr_curve(h: &PdrHistogram) -> Vec<PdrPoint> {
    h.bins
        .iter()
        .enumerate()
        .filter(|(_, b)| b.attempts > 0)
        .map(|(i, b)| PdrPoint {
            bin_m: (i as f64 + 0.5) * PDR_BIN_M,
            attempts: b.attempts,
            successes: b.successes,
            pdr: b.successes as f64 / b.attempts as f64,
        })
        .collect()
}

/// Per-slot receive/process counters of one receiver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotCounts {
    pub received_long: u32,
    pub processed_long: u32,
    pub skipped_cached_long: u32,
    pub received_short: u32,
    pub processed_short: u32,
    pub dropped_unvalidated: u32,
    pub received_plain: u32,
    pub processed_plain: u32,
    pub dropped_over_budget: u32,
    pub busy_ms: f64,
}

impl SlotCounts {
    pub fn record(&mut self, kind: PacketKind, decision: Decision, cost_ms: f64, admitted: bool) {
        match kind {
            PacketKind::Long => self.received_long += 1,
            PacketKind::Short => self.received_short += 1,
            PacketKind::Plain => self.received_plain += 1,
        }
        if !admitted {
            self.dropped_over_budget += 1;
            return;
        }
        self.busy_ms += cost_ms;
        match decision {
            Decision::ValidateLongAndProcess => self.processed_long += 1,
            Decision::SkipCachedLong => self.skipped_cached_long += 1,
            Decision::ProcessShort => self.processed_short += 1,
            Decision::DropUnvalidatedShort => self.dropped_unvalidated += 1,
            Decision::ProcessPlain => self.processed_plain += 1,
        }
    }

    /// Every received secured packet is accounted exactly once.
    pub fn is_conserved(&self) -> bool {
        self.processed_long
            + self.skipped_cached_long
            + self.processed_short
            + self.dropped_unvalidated
            + self.processed_plain
            + self.dropped_over_budget
            == self.received_long + self.received_short + self.received_plain
    }
}

/// Slot-indexed counters of one receiver over a measurement window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessingLedger {
    /// Absolute index of `slots[0]`.
    pub first_slot: u64,
    pub slots: Vec<SlotCounts>,
}

impl ProcessingLedger {
    pub fn new(first_slot: u64, n_slots: u64) -> Self {
        ProcessingLedger { first_slot, slots: vec![SlotCounts::default(); n_slots as usize] }
    }

    pub fn slot_mut(&mut self, slot: u64) -> Option<&mut SlotCounts> {
        let i = slot.checked_sub(self.first_slot)?;
        self.slots.get_mut(i as usize)
    }
}

/// Running first and second moments; merges associatively.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.n as f64 - m * m).max(0.0).sqrt()
    }
}

/// Per-slot received/processed moments for one packet kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindMoments {
    pub received: Moments,
    pub processed: Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub mu_r: f64,
    pub sigma_r: f64,
    pub mu_p: f64,
    pub sigma_p: f64,
}

impl KindMoments {
    pub fn stats(&self) -> KindStats {
        KindStats {
            mu_r: self.received.mean(),
            sigma_r: self.received.std_dev(),
            mu_p: self.processed.mean(),
            sigma_p: self.processed.std_dev(),
        }
    }
}

/// Moments per kind, pooled over slots (and receivers, and replications).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessingMoments {
    pub long: KindMoments,
    pub short: KindMoments,
    pub plain: KindMoments,
}

impl ProcessingMoments {
    pub fn merge(&mut self, o: &ProcessingMoments) {
        for (a, b) in [(&mut self.long, &o.long), (&mut self.short, &o.short), (&mut self.plain, &o.plain)] {
            a.received.merge(&b.received);
            a.processed.merge(&b.processed);
        }
    }

    pub fn slots(&self) -> u64 {
        self.long.received.n
    }

    pub fn kind(&self, kind: PacketKind) -> KindStats {
        match kind {
            PacketKind::Long => self.long.stats(),
            PacketKind::Short => self.short.stats(),
            PacketKind::Plain => self.plain.stats(),
        }
    }
}

/// Per-slot mean and standard deviation over the slots of `window`
/// (absolute slot indices, half-open) for every ledger.
pub fn processing_stats(ledgers: &[ProcessingLedger], window: (u64, u64)) -> ProcessingMoments {
    let mut m = ProcessingMoments::default();
    for l in ledgers {
        for slot in window.0..window.1 {
            let Some(i) = slot.checked_sub(l.first_slot) else { continue };
            let Some(c) = l.slots.get(i as usize) else { continue };
            m.long.received.push(f64::from(c.received_long));
            m.long.processed.push(f64::from(c.processed_long));
            m.short.received.push(f64::from(c.received_short));
            m.short.processed.push(f64::from(c.processed_short));
            m.plain.received.push(f64::from(c.received_plain));
            m.plain.processed.push(f64::from(c.processed_plain));
        }
    }
    m
}

/// Safety outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub platoon_size: usize,
    pub crashed: Vec<bool>,
    pub crash_times: Vec<Option<SimTime>>,
    pub warned_times: Vec<Option<SimTime>>,
    pub stop_times: Vec<Option<SimTime>>,
    pub moving: usize,
}

impl CrashReport {
    pub fn crashed_count(&self) -> usize {
        self.crashed.iter().filter(|c| **c).count()
    }
}

/// Percentage of crashed platoon members, once the whole platoon is still.
pub fn crash_fraction(report: &CrashReport) -> Result<f64, MetricsError> {
    if report.moving > 0 {
        return Err(MetricsError::IncompleteRun { moving: report.moving });
    }
    Ok(100.0 * report.crashed_count() as f64 / report.platoon_size as f64)
}

/// `%g`-style formatting with six significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_owned()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdrRow {
    pub scheme: String,
    pub alpha: u32,
    pub lanes: u32,
    pub histogram: PdrHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingRow {
    pub scheme: String,
    pub alpha: u32,
    pub beta: u32,
    pub lanes: u32,
    pub moments: ProcessingMoments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashRow {
    pub scheme: String,
    pub alpha: u32,
    pub beta: u32,
    pub lanes: u32,
    pub seed: u64,
    pub crashed_pct: f64,
}

/// Aggregated outputs of one experiment (one or more sweep points).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub pdr: Vec<PdrRow>,
    pub processing: Vec<ProcessingRow>,
    pub crashes: Vec<CrashRow>,
}

pub const PDR_CSV: &str = "pdr.csv";
pub const PROCESSING_CSV: &str = "processing.csv";
pub const CRASHES_CSV: &str = "crashes.csv";

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, MetricsError> {
    let f = fs::File::create(path).map_err(|source| MetricsError::IoFailure { path: path.to_owned(), source })?;
    Ok(csv::Writer::from_writer(f))
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), MetricsError> {
    let wrap = |source| MetricsError::Csv { path: path.to_owned(), source };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|source| MetricsError::IoFailure { path: path.to_owned(), source })
}

/// Write `pdr.csv`, `processing.csv` and `crashes.csv` into `dir`.
pub fn emit_csv(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    fs::create_dir_all(dir).map_err(|source| MetricsError::IoFailure { path: dir.to_owned(), source })?;

    let pdr_path = dir.join(PDR_CSV);
    let mut rows = Vec::new();
    for r in &results.pdr {
        for p in pdr_curve(&r.histogram) {
            rows.push(vec![
                r.scheme.clone(),
                r.alpha.to_string(),
                r.lanes.to_string(),
                fmt_sig6(p.bin_m),
                p.attempts.to_string(),
                p.successes.to_string(),
                fmt_sig6(p.pdr),
            ]);
        }
    }
    write_rows(&pdr_path, &["scheme", "alpha", "lanes", "bin_m", "attempts", "successes", "pdr"], rows)?;

    let proc_path = dir.join(PROCESSING_CSV);
    let mut rows = Vec::new();
    for r in &results.processing {
        let kinds: &[PacketKind] = if r.scheme == "NoSecurity" || r.scheme == "NoV2V" {
            &[PacketKind::Plain]
        } else {
            &[PacketKind::Long, PacketKind::Short]
        };
        for &k in kinds {
            let s = r.moments.kind(k);
            rows.push(vec![
                r.scheme.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.lanes.to_string(),
                k.to_string(),
                fmt_sig6(s.mu_r),
                fmt_sig6(s.sigma_r),
                fmt_sig6(s.mu_p),
                fmt_sig6(s.sigma_p),
            ]);
        }
    }
    write_rows(
        &proc_path,
        &["scheme", "alpha", "beta", "lanes", "kind", "mu_r", "sigma_r", "mu_p", "sigma_p"],
        rows,
    )?;

    let crash_path = dir.join(CRASHES_CSV);
    let rows = results
        .crashes
        .iter()
        .map(|r| {
            vec![
                r.scheme.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.lanes.to_string(),
                r.seed.to_string(),
                fmt_sig6(r.crashed_pct),
            ]
        })
        .collect();
    write_rows(&crash_path, &["scheme", "alpha", "beta", "lanes", "seed", "crashed_pct"], rows)?;

    Ok(vec![pdr_path, proc_path, crash_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdr_ratio_and_empty_bins() {
        let mut h = PdrHistogram::default();
        h.add(5, 200, 150);
        h.add(7, 10, 10);
        let c = pdr_curve(&h);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].bin_m, 55.0);
        assert_eq!(c[0].pdr, 0.75);
        h.record(12.0, true);
        h.record(19.99, false);
        assert_eq!(h.bins[1], BinCount { attempts: 2, successes: 1 });
    }

    #[test]
    fn moments_population_sd() {
        let mut m = Moments::default();
        for x in [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 5.0);
        assert!((m.std_dev() - 2.0).abs() < 1e-12);
        let mut a = Moments::default();
        let mut b = Moments::default();
        for x in [2.0, 4.0, 4.0] {
            a.push(x);
        }
        for x in [4.0, 5.0, 5.0, 7.0, 9.0] {
            b.push(x);
        }
        a.merge(&b);
        assert_eq!(a, m);
    }

    #[test]
    fn ledger_counts_and_conservation() {
        let mut c = SlotCounts::default();
        c.record(PacketKind::Long, Decision::ValidateLongAndProcess, 55.3, true);
        c.record(PacketKind::Long, Decision::SkipCachedLong, 3.0, true);
        c.record(PacketKind::Short, Decision::ProcessShort, 3.0, true);
        c.record(PacketKind::Short, Decision::DropUnvalidatedShort, 0.0, true);
        c.record(PacketKind::Short, Decision::ProcessShort, 3.0, false);
        assert!(c.is_conserved());
        assert_eq!((c.received_long, c.processed_long, c.received_short, c.processed_short), (2, 1, 3, 1));
        assert!((c.busy_ms - 61.3).abs() < 1e-9);
    }

    #[test]
    fn processing_window() {
        let mut l = ProcessingLedger::new(600, 4);
        l.slot_mut(600).unwrap().received_short = 4;
        l.slot_mut(601).unwrap().received_short = 2;
        l.slot_mut(603).unwrap().received_long = 1;
        assert!(l.slot_mut(604).is_none());
        assert!(l.slot_mut(10).is_none());
        let m = processing_stats(&[l.clone()], (600, 604));
        assert_eq!(m.slots(), 4);
        let s = m.kind(PacketKind::Short);
        assert_eq!(s.mu_r, 1.5);
        assert!((s.sigma_r - (2.75f64).sqrt()).abs() < 1e-12);
        assert_eq!(m.kind(PacketKind::Long).mu_r, 0.25);
        assert_eq!(processing_stats(&[l], (602, 604)).kind(PacketKind::Short).mu_r, 0.0);
    }

    fn report(crashed: &[bool], moving: usize) -> CrashReport {
        let n = crashed.len();
        CrashReport {
            platoon_size: n,
            crashed: crashed.to_vec(),
            crash_times: vec![None; n],
            warned_times: vec![None; n],
            stop_times: vec![None; n],
            moving,
        }
    }

    #[test]
    fn crash_percentages() {
        assert_eq!(crash_fraction(&report(&[false; 4], 0)).unwrap(), 0.0);
        assert_eq!(crash_fraction(&report(&[true, true, false, false], 0)).unwrap(), 50.0);
        assert!(matches!(crash_fraction(&report(&[false; 4], 1)), Err(MetricsError::IncompleteRun { moving: 1 })));
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(0.75), "0.75");
        assert_eq!(fmt_sig6(13.888888888), "13.8889");
        assert_eq!(fmt_sig6(100.0), "100");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig6(999999.7), "1e+06");
        assert_eq!(fmt_sig6(0.0000123456789), "1.23457e-05");
        assert_eq!(fmt_sig6(0.000123456789), "0.000123457");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
    }

    #[test]
    fn empty_results_give_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_csv(&ExperimentResults::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(fs::read_to_string(dir.path().join(PDR_CSV)).unwrap(), "scheme,alpha,lanes,bin_m,attempts,successes,pdr\n");
        assert_eq!(
            fs::read_to_string(dir.path().join(CRASHES_CSV)).unwrap(),
            "scheme,alpha,beta,lanes,seed,crashed_pct\n"
        );
    }

    #[test]
    fn io_failure_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_csv(&ExperimentResults::default(), &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, MetricsError::IoFailure { .. }));
        assert!(err.to_string().contains("file"));
    }
}

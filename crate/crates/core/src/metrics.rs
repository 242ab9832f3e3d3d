//! Run metrics: collection during a run, CSV/JSON emission afterwards.
//!
//! Everything stored in [`RunMetrics`] is an integer (bytes, microseconds,
//! counts) so a JSON round trip is exact. Floating-point summaries are
//! derived on demand and printed with six significant digits.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::{bump, PathStats};
use crate::pdcp::Delivery;
use crate::sim::SimTime;
use crate::transport::TcpStats;

pub const SCHEMA_VERSION: &str = "mcsim.metrics/1";

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("encoding metrics: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyStats {
    /// Time integral of buffered bytes, byte-microseconds.
    pub integral_byte_us: u64,
    pub max_bytes: u64,
    pub max_pdus: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayPercentiles {
    pub p50_us: Option<u64>,
    pub p95_us: Option<u64>,
    pub p99_us: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub duration_us: u64,
    /// Application bytes per whole second (UDP sink receptions, TCP in-order
    /// bytes).
    pub app_bytes_per_second: Vec<u64>,
    /// Bytes leaving the PDCP receiver per whole second.
    pub pdcp_bytes_per_second: Vec<u64>,
    pub app_bytes: u64,
    /// SDUs handed to the PDCP transmitter.
    pub submitted: u64,
    /// SDUs delivered by the PDCP receiver.
    pub delivered: u64,
    pub ooo_delivered: u64,
    /// SDUs skipped by the receive window that never showed up afterwards.
    pub declared_lost: u64,
    /// SDUs that arrived after the window had skipped them.
    pub stale_discarded: u64,
    /// Redundant copies discarded (PDU count).
    pub duplicate_discarded: u64,
    /// SDUs whose every copy was dropped on a path and which the receiver
    /// never declared lost.
    pub path_dropped: u64,
    /// SDUs still in a path, in the air or in the reorder buffer at the end.
    pub residual_in_flight: u64,
    /// Raw number of COUNTs the window skipped.
    pub gaps_declared: u64,
    pub reorder_expiries: u64,
    pub hfn_mismatches: u64,
    pub reorder_occupancy: OccupancyStats,
    pub delay: DelayPercentiles,
    pub tcp: Option<TcpStats>,
    pub paths: Vec<PathStats>,
    pub events_processed: u64,
}

impl RunMetrics {
    pub fn duration_secs(&self) -> f64 {
        self.duration_us as f64 / 1e6
    }

    /// Mean application goodput over the run, bit/s.
    pub fn goodput_bps(&self) -> f64 {
        if self.duration_us == 0 {
            return 0.0;
        }
        self.app_bytes as f64 * 8.0 / self.duration_secs()
    }

    pub fn goodput_mbps(&self) -> f64 {
        self.goodput_bps() / 1e6
    }

    /// Time-averaged reorder buffer occupancy, bytes.
    pub fn mean_reorder_bytes(&self) -> f64 {
        if self.duration_us == 0 {
            return 0.0;
        }
        self.reorder_occupancy.integral_byte_us as f64 / self.duration_us as f64
    }

    /// Sum of the paths' integrated capacity, bits.
    pub fn capacity_bits(&self) -> u64 {
        self.paths.iter().map(|p| p.capacity_bits).sum()
    }

    pub fn capacity_bps(&self) -> f64 {
        if self.duration_us == 0 {
            return 0.0;
        }
        self.capacity_bits() as f64 / self.duration_secs()
    }

    pub fn path_dropped_pdus(&self) -> u64 {
        self.paths
            .iter()
            .map(|p| p.dropped_overflow + p.dropped_loss)
            .sum()
    }

    /// The per-SDU fate partition: every submitted SDU is in exactly one
    /// bucket at the end of a run.
    pub fn accounting_balances(&self) -> bool {
        self.submitted
            == self.delivered
                + self.declared_lost
                + self.stale_discarded
                + self.path_dropped
                + self.residual_in_flight
    }
}

/// `100 * (a - b) / b`, or `None` when `b` is zero.
pub fn relative_gain(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| 100.0 * (a - b) / b)
}

/// Rounds to six significant digits.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Accumulates metrics while a run is in progress.
#[derive(Debug, Default)]
pub struct MetricsRecorder {
    metrics: RunMetrics,
    delays_us: Vec<u64>,
    occ_bytes: u64,
    occ_since: SimTime,
}

impl MetricsRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_submission(&mut self) {
        self.metrics.submitted += 1;
    }

    /// Records one SDU leaving the PDCP receiver.
    pub fn record_delivery(&mut self, d: &Delivery) {
        let delay = d
            .delivered_at
            .checked_sub(d.created_at)
            .unwrap_or_else(|| panic!("SDU {} delivered before it was created", d.sdu_id));
        self.delays_us.push(delay.as_micros());
        self.metrics.delivered += 1;
        if !d.in_order {
            self.metrics.ooo_delivered += 1;
        }
        let sec = d.delivered_at.whole_seconds() as usize;
        bump(&mut self.metrics.pdcp_bytes_per_second, sec, u64::from(d.size_bytes));
    }

    pub fn record_app_bytes(&mut self, bytes: u64, at: SimTime) {
        self.metrics.app_bytes += bytes;
        bump(
            &mut self.metrics.app_bytes_per_second,
            at.whole_seconds() as usize,
            bytes,
        );
    }

    /// Updates the reorder buffer level; call after every change.
    pub fn record_occupancy(&mut self, bytes: u64, pdus: usize, at: SimTime) {
        let occ = &mut self.metrics.reorder_occupancy;
        occ.integral_byte_us += self.occ_bytes * (at - self.occ_since).as_micros();
        occ.max_bytes = occ.max_bytes.max(bytes);
        occ.max_pdus = occ.max_pdus.max(pdus as u64);
        self.occ_bytes = bytes;
        self.occ_since = at;
    }

    /// Closes the run at `end`. The caller fills in the fate counters and
    /// path/transport statistics on the returned value.
    pub fn finish(mut self, end: SimTime) -> RunMetrics {
        self.record_occupancy(self.occ_bytes, 0, end);
        let secs = end.as_micros().div_ceil(1_000_000) as usize;
        let m = &mut self.metrics;
        m.duration_us = end.as_micros();
        m.app_bytes_per_second.resize(secs.max(m.app_bytes_per_second.len()), 0);
        m.pdcp_bytes_per_second.resize(secs.max(m.pdcp_bytes_per_second.len()), 0);
        self.delays_us.sort_unstable();
        m.delay = DelayPercentiles {
            p50_us: percentile(&self.delays_us, 50.0),
            p95_us: percentile(&self.delays_us, 95.0),
            p99_us: percentile(&self.delays_us, 99.0),
        };
        self.metrics
    }
}

/// Descriptive fields that identify a run in emitted files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_key: String,
    pub mode: String,
    pub traffic: String,
    pub policy: String,
    /// True for flow-control policies beyond the baseline reproduction.
    pub policy_extension: bool,
    pub t_reordering_ms: Option<u64>,
    pub seed: u64,
    pub rng: String,
}

/// Headline numbers, six significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummaryLine {
    pub goodput_mbps: f64,
    pub capacity_mbps: f64,
    pub mean_reorder_bytes: f64,
}

impl RunSummaryLine {
    pub fn of(m: &RunMetrics) -> Self {
        RunSummaryLine {
            goodput_mbps: sig6(m.goodput_mbps()),
            capacity_mbps: sig6(m.capacity_bps() / 1e6),
            mean_reorder_bytes: sig6(m.mean_reorder_bytes()),
        }
    }
}

/// The JSON document written per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub schema: String,
    pub run: RunInfo,
    pub summary: RunSummaryLine,
    pub metrics: RunMetrics,
}

impl RunDocument {
    pub fn new(run: RunInfo, metrics: RunMetrics) -> Self {
        RunDocument {
            schema: SCHEMA_VERSION.to_string(),
            summary: RunSummaryLine::of(&metrics),
            run,
            metrics,
        }
    }
}

pub fn to_json(run: &RunInfo, metrics: &RunMetrics) -> Result<String, EmitError> {
    let doc = RunDocument::new(run.clone(), metrics.clone());
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<RunDocument, serde_json::Error> {
    serde_json::from_str(text)
}

const AGGREGATE_COLUMNS: [&str; 17] = [
    "submitted",
    "delivered",
    "ooo_delivered",
    "declared_lost",
    "stale_discarded",
    "duplicate_discarded",
    "path_dropped",
    "residual_in_flight",
    "reorder_mean_bytes",
    "reorder_max_bytes",
    "delay_p50_us",
    "delay_p95_us",
    "delay_p99_us",
    "retransmissions",
    "fast_retransmits",
    "rto_events",
    "capacity_mbps",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-second rows followed by one `all` row holding run totals.
///
/// The first line is a `# schema=...` comment. A run with zero duration
/// emits only the header.
pub fn to_csv(run: &RunInfo, m: &RunMetrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema={SCHEMA_VERSION}");
    let mut header = vec![
        "run".to_string(),
        "second".into(),
        "goodput_mbps".into(),
        "app_bytes".into(),
        "pdcp_bytes".into(),
    ];
    header.extend(m.paths.iter().map(|p| format!("tx_bytes_{}", p.id)));
    header.extend(AGGREGATE_COLUMNS.iter().map(|c| c.to_string()));
    let _ = writeln!(out, "{}", header.join(","));
    if m.duration_us == 0 {
        return out;
    }

    let blanks = vec![String::new(); AGGREGATE_COLUMNS.len()];
    for (sec, &bytes) in m.app_bytes_per_second.iter().enumerate() {
        // the last second may be partial
        let span = ((m.duration_us - (sec as u64 * 1_000_000).min(m.duration_us)).min(1_000_000))
            as f64
            / 1e6;
        let mbps = if span > 0.0 { bytes as f64 * 8.0 / span / 1e6 } else { 0.0 };
        let mut row = vec![
            run.run_key.clone(),
            sec.to_string(),
            sig6(mbps).to_string(),
            bytes.to_string(),
            m.pdcp_bytes_per_second.get(sec).copied().unwrap_or(0).to_string(),
        ];
        row.extend(
            m.paths
                .iter()
                .map(|p| p.tx_bytes_per_second.get(sec).copied().unwrap_or(0).to_string()),
        );
        row.extend(blanks.iter().cloned());
        let _ = writeln!(out, "{}", row.join(","));
    }

    let tcp = m.tcp.unwrap_or_default();
    let mut row = vec![
        run.run_key.clone(),
        "all".into(),
        sig6(m.goodput_mbps()).to_string(),
        m.app_bytes.to_string(),
        m.pdcp_bytes_per_second.iter().sum::<u64>().to_string(),
    ];
    row.extend(m.paths.iter().map(|p| p.bytes_sent.to_string()));
    row.extend([
        m.submitted.to_string(),
        m.delivered.to_string(),
        m.ooo_delivered.to_string(),
        m.declared_lost.to_string(),
        m.stale_discarded.to_string(),
        m.duplicate_discarded.to_string(),
        m.path_dropped.to_string(),
        m.residual_in_flight.to_string(),
        sig6(m.mean_reorder_bytes()).to_string(),
        m.reorder_occupancy.max_bytes.to_string(),
        opt(m.delay.p50_us),
        opt(m.delay.p95_us),
        opt(m.delay.p99_us),
        opt(m.tcp.map(|_| tcp.retransmissions)),
        opt(m.tcp.map(|_| tcp.fast_retransmits)),
        opt(m.tcp.map(|_| tcp.rto_events)),
        sig6(m.capacity_bps() / 1e6).to_string(),
    ]);
    let _ = writeln!(out, "{}", row.join(","));
    out
}

/// Writes the run's CSV and/or JSON files into `dir` as `<run_key>.csv` /
/// `<run_key>.json`. Returns the paths written.
pub fn emit(
    dir: &Path,
    run: &RunInfo,
    metrics: &RunMetrics,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>, EmitError> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for fmt in formats {
        let (path, body) = match fmt {
            OutputFormat::Csv => (dir.join(format!("{}.csv", run.run_key)), to_csv(run, metrics)),
            OutputFormat::Json => (dir.join(format!("{}.json", run.run_key)), to_json(run, metrics)?),
        };
        std::fs::write(&path, body).map_err(|source| EmitError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delivery(at_ms: u64, created_ms: u64, in_order: bool) -> Delivery {
        Delivery {
            sdu_id: 1,
            count: 1,
            size_bytes: 1400,
            created_at: SimTime::from_millis(created_ms),
            delivered_at: SimTime::from_millis(at_ms),
            in_order,
        }
    }

    #[test]
    fn delivery_lands_in_its_second() {
        let mut r = MetricsRecorder::new();
        r.record_delivery(&delivery(3_500, 3_490, true));
        r.record_app_bytes(1400, SimTime::from_millis(3_500));
        let m = r.finish(SimTime::from_secs(5));
        assert_eq!(m.pdcp_bytes_per_second[3] * 8, 11_200);
        assert_eq!(m.app_bytes_per_second[3] * 8, 11_200);
        assert_eq!(m.app_bytes_per_second.len(), 5);
        assert_eq!(m.delay.p50_us, Some(10_000));
    }

    #[test]
    fn out_of_order_delivery_is_counted() {
        let mut r = MetricsRecorder::new();
        r.record_delivery(&delivery(1, 0, false));
        assert_eq!(r.finish(SimTime::from_secs(1)).ooo_delivered, 1);
    }

    #[test]
    #[should_panic(expected = "delivered before it was created")]
    fn negative_delay_panics() {
        MetricsRecorder::new().record_delivery(&delivery(1, 2, true));
    }

    #[test]
    fn empty_run_has_null_percentiles() {
        let m = MetricsRecorder::new().finish(SimTime::from_secs(2));
        assert_eq!(m.delay, DelayPercentiles::default());
        assert_eq!(m.goodput_bps(), 0.0);
        let json = to_json(&RunInfo::default(), &m).unwrap();
        assert!(json.contains("\"p99_us\": null"));
    }

    #[test]
    fn percentiles_nearest_rank() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 50.0), Some(50));
        assert_eq!(percentile(&v, 99.0), Some(99));
        assert_eq!(percentile(&[7], 95.0), Some(7));
    }

    #[test]
    fn occupancy_is_time_weighted() {
        let mut r = MetricsRecorder::new();
        r.record_occupancy(1400, 1, SimTime::from_millis(100));
        r.record_occupancy(0, 0, SimTime::from_millis(600));
        let m = r.finish(SimTime::from_secs(1));
        assert_eq!(m.reorder_occupancy.integral_byte_us, 1400 * 500_000);
        assert_eq!(m.mean_reorder_bytes(), 700.0);
        assert_eq!(m.reorder_occupancy.max_bytes, 1400);
    }

    #[test]
    fn gain_arithmetic() {
        assert_eq!(relative_gain(27.0, 27.0), Some(0.0));
        let g = relative_gain(14.82, 13.5).unwrap();
        assert!((g - 9.777_777).abs() < 1e-5);
        assert_eq!(sig6(g), 9.77778);
        assert_eq!(relative_gain(1.0, 0.0), None);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(14.823_456_7), 14.8235);
        assert_eq!(sig6(27_000_123.0), 27_000_100.0);
        assert_eq!(sig6(0.000_123_456_78), 0.000_123_457);
        assert_eq!(sig6(0.0), 0.0);
    }

    #[test]
    fn empty_metrics_give_header_only_csv() {
        let csv = to_csv(&RunInfo::default(), &RunMetrics::default());
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("# schema=mcsim.metrics/1\n"));
    }

    #[test]
    fn json_round_trip() {
        let mut r = MetricsRecorder::new();
        for i in 0..50 {
            r.record_delivery(&delivery(i * 10 + 5, i * 10, i % 7 != 0));
            r.record_app_bytes(1400, SimTime::from_millis(i * 10 + 5));
        }
        r.record_occupancy(2800, 2, SimTime::from_millis(30));
        let mut m = r.finish(SimTime::from_secs(1));
        m.tcp = Some(TcpStats {
            retransmissions: 3,
            ..TcpStats::default()
        });
        m.paths.push(PathStats {
            id: "A".into(),
            capacity_bits: 15_000_000,
            ..PathStats::default()
        });
        let info = RunInfo {
            run_key: "x".into(),
            ..RunInfo::default()
        };
        let doc = from_json(&to_json(&info, &m).unwrap()).unwrap();
        assert_eq!(doc.metrics, m);
        assert_eq!(doc.run, info);
        assert_eq!(doc.schema, SCHEMA_VERSION);
    }
}

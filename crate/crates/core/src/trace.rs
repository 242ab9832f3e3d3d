//! Per-second CQI traces and their mapping to link capacity.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RandomStream, SimTime};

pub const MAX_CQI: u8 = 15;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row {text:?}, expected `second,cqi`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: cqi {value} out of range 0..=15")]
    CqiOutOfRange { line: usize, value: i64 },
    #[error("line {line}: second {found} out of sequence, expected {expected}")]
    NonMonotone {
        line: usize,
        expected: u64,
        found: i64,
    },
    #[error("trace has no samples")]
    Empty,
}

/// Ordered per-second CQI samples. Sample `i` covers second `i`; the trace
/// repeats cyclically when a run outlasts it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTrace {
    label: String,
    cqi: Vec<u8>,
    has_header: bool,
    trailing_newline: bool,
}

impl ChannelTrace {
    pub fn new(label: impl Into<String>, cqi: Vec<u8>) -> Result<Self, TraceError> {
        if cqi.is_empty() {
            return Err(TraceError::Empty);
        }
        if let Some((i, &v)) = cqi.iter().enumerate().find(|(_, &v)| v > MAX_CQI) {
            return Err(TraceError::CqiOutOfRange {
                line: i + 1,
                value: i64::from(v),
            });
        }
        Ok(ChannelTrace {
            label: label.into(),
            cqi,
            has_header: true,
            trailing_newline: true,
        })
    }

    /// A single-sample trace: constant CQI forever.
    pub fn constant(cqi: u8) -> Result<Self, TraceError> {
        Self::new(format!("constant-{cqi}"), vec![cqi])
    }

    /// Parses `second,cqi` rows. A leading `second,cqi` header is optional,
    /// blank lines are not allowed, seconds must be 0, 1, 2, ...
    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self, TraceError> {
        let trailing_newline = text.ends_with('\n');
        let mut has_header = false;
        let mut cqi = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.strip_suffix('\r').unwrap_or(raw);
            if idx == 0 && row.trim() == "second,cqi" {
                has_header = true;
                continue;
            }
            let malformed = || TraceError::Malformed {
                line,
                text: row.to_string(),
            };
            let (sec, val) = row.split_once(',').ok_or_else(malformed)?;
            let sec: i64 = sec.trim().parse().map_err(|_| malformed())?;
            let val: i64 = val.trim().parse().map_err(|_| malformed())?;
            let expected = cqi.len() as u64;
            if sec != expected as i64 {
                return Err(TraceError::NonMonotone {
                    line,
                    expected,
                    found: sec,
                });
            }
            if !(0..=i64::from(MAX_CQI)).contains(&val) {
                return Err(TraceError::CqiOutOfRange { line, value: val });
            }
            cqi.push(val as u8);
        }
        if cqi.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(ChannelTrace {
            label: label.into(),
            cqi,
            has_header,
            trailing_newline,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&text, label)
    }

    /// Inverse of [`ChannelTrace::parse`]: reproduces the loaded text exactly
    /// for LF-terminated input.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.has_header {
            out.push_str("second,cqi\n");
        }
        for (i, c) in self.cqi.iter().enumerate() {
            let _ = writeln!(out, "{i},{c}");
        }
        if !self.trailing_newline {
            out.pop();
        }
        out
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn samples(&self) -> &[u8] {
        &self.cqi
    }

    pub fn len(&self) -> usize {
        self.cqi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cqi.is_empty()
    }

    /// CQI in force during second `second`, with wraparound.
    pub fn cqi_at_second(&self, second: u64) -> u8 {
        self.cqi[(second % self.cqi.len() as u64) as usize]
    }

    pub fn manifest(&self) -> TraceManifest {
        let min = *self.cqi.iter().min().expect("non-empty");
        let max = *self.cqi.iter().max().expect("non-empty");
        let mean = self.cqi.iter().map(|&c| f64::from(c)).sum::<f64>() / self.cqi.len() as f64;
        TraceManifest {
            label: self.label.clone(),
            seconds: self.cqi.len() as u64,
            min_cqi: min,
            max_cqi: max,
            mean_cqi: mean,
            seed: None,
        }
    }
}

/// Summary written beside generated trace fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub label: String,
    pub seconds: u64,
    pub min_cqi: u8,
    pub max_cqi: u8,
    pub mean_cqi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Bounded random walk used to produce pedestrian-like CQI fixtures: each
/// second the CQI moves by -1, 0 or +1 with equal probability, reflecting at
/// the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomWalk {
    pub start: u8,
    pub min: u8,
    pub max: u8,
}

impl Default for RandomWalk {
    fn default() -> Self {
        RandomWalk {
            start: 11,
            min: 7,
            max: 15,
        }
    }
}

pub fn generate_trace(
    label: impl Into<String>,
    seed: u64,
    seconds: u64,
    walk: RandomWalk,
) -> Result<ChannelTrace, TraceError> {
    assert!(walk.min <= walk.start && walk.start <= walk.max && walk.max <= MAX_CQI);
    let mut rng = RandomStream::substream(seed, "trace/random-walk");
    let mut cqi = Vec::with_capacity(seconds as usize);
    let mut cur = walk.start;
    for _ in 0..seconds {
        cqi.push(cur);
        let step = rng.below(3) as i16 - 1;
        let mut next = i16::from(cur) + step;
        if next < i16::from(walk.min) {
            next = i16::from(walk.min) + 1;
        }
        if next > i16::from(walk.max) {
            next = i16::from(walk.max) - 1;
        }
        cur = next.clamp(i16::from(walk.min), i16::from(walk.max)) as u8;
    }
    ChannelTrace::new(label, cqi)
}

#[derive(Debug, Error, PartialEq)]
pub enum RateTableError {
    #[error("rate for cqi 0 must be 0, got {0}")]
    NonZeroAtZero(f64),
    #[error("rate table decreases between cqi {0} and {1}")]
    NotMonotone(u8, u8),
    #[error("rate table entry for cqi {0} is negative or not finite")]
    Invalid(u8),
}

/// Relative achievable rate per CQI, normalized so the top entry is 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiRateTable {
    entries: [f64; 16],
}

/// LTE 4-bit CQI spectral efficiencies (bit/s/Hz); index 0 is "out of range".
const LTE_CQI_EFFICIENCY: [f64; 16] = [
    0.0, 0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547,
];

impl CqiRateTable {
    pub fn new(entries: [f64; 16]) -> Result<Self, RateTableError> {
        for (i, v) in entries.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(RateTableError::Invalid(i as u8));
            }
        }
        if entries[0] != 0.0 {
            return Err(RateTableError::NonZeroAtZero(entries[0]));
        }
        for i in 1..16 {
            if entries[i] < entries[i - 1] {
                return Err(RateTableError::NotMonotone(i as u8 - 1, i as u8));
            }
        }
        Ok(CqiRateTable { entries })
    }

    /// The LTE CQI efficiency ladder scaled so that cqi 15 maps to 1.0.
    pub fn lte_default() -> Self {
        let top = LTE_CQI_EFFICIENCY[15];
        let mut entries = [0.0; 16];
        for (e, eff) in entries.iter_mut().zip(LTE_CQI_EFFICIENCY) {
            *e = eff / top;
        }
        CqiRateTable { entries }
    }

    pub fn relative(&self, cqi: u8) -> f64 {
        self.entries[usize::from(cqi.min(MAX_CQI))]
    }
}

impl Default for CqiRateTable {
    fn default() -> Self {
        Self::lte_default()
    }
}

/// Instantaneous capacity of one radio leg: trace, table and peak rate.
///
/// Capacity is piecewise constant with breakpoints on whole seconds.
#[derive(Debug, Clone)]
pub struct LinkCapacity {
    trace: Arc<ChannelTrace>,
    table: Arc<CqiRateTable>,
    peak_rate_bps: f64,
}

impl LinkCapacity {
    pub fn new(trace: Arc<ChannelTrace>, table: Arc<CqiRateTable>, peak_rate_bps: f64) -> Self {
        assert!(peak_rate_bps.is_finite() && peak_rate_bps >= 0.0);
        LinkCapacity {
            trace,
            table,
            peak_rate_bps,
        }
    }

    /// A link that always runs at `rate_bps`.
    pub fn constant(rate_bps: f64) -> Self {
        LinkCapacity::new(
            Arc::new(ChannelTrace::constant(MAX_CQI).expect("valid")),
            Arc::new(CqiRateTable::lte_default()),
            rate_bps,
        )
    }

    pub fn trace(&self) -> &ChannelTrace {
        &self.trace
    }

    pub fn peak_rate_bps(&self) -> f64 {
        self.peak_rate_bps
    }

    pub fn rate_in_second(&self, second: u64) -> f64 {
        self.peak_rate_bps * self.table.relative(self.trace.cqi_at_second(second))
    }

    pub fn rate_at(&self, t: SimTime) -> f64 {
        self.rate_in_second(t.whole_seconds())
    }

    /// Bits the link can carry over `[0, until)`.
    pub fn integrated_bits(&self, until: SimTime) -> f64 {
        let full = until.whole_seconds();
        let frac = (until.as_micros() % 1_000_000) as f64 / 1e6;
        let whole: f64 = (0..full).map(|s| self.rate_in_second(s)).sum();
        whole + frac * self.rate_in_second(full)
    }

    /// Mean rate over the first `seconds` whole seconds.
    pub fn mean_rate_bps(&self, seconds: u64) -> f64 {
        if seconds == 0 {
            return 0.0;
        }
        self.integrated_bits(SimTime::from_secs(seconds)) / seconds as f64
    }

    /// Time at which a transmission of `bits` started at `start` completes,
    /// integrating the piecewise-constant rate across second boundaries and
    /// skipping zero-rate seconds. `None` if the link never transmits.
    pub fn finish_time(&self, start: SimTime, bits: u64) -> Option<SimTime> {
        if bits == 0 {
            return Some(start);
        }
        if self.peak_rate_bps <= 0.0 || self.trace.samples().iter().all(|&c| self.table.relative(c) <= 0.0) {
            return None;
        }
        let mut remaining = bits as f64;
        let mut cur = start.as_micros();
        loop {
            let second = cur / 1_000_000;
            let rate = self.rate_in_second(second);
            let boundary = (second + 1) * 1_000_000;
            if rate > 0.0 {
                let needed_us = remaining * 1e6 / rate;
                let avail_us = (boundary - cur) as f64;
                if needed_us <= avail_us {
                    let us = (needed_us - 1e-6).ceil().max(0.0) as u64;
                    return Some(SimTime::from_micros(cur + us));
                }
                remaining -= rate * avail_us / 1e6;
            }
            cur = boundary;
        }
    }
}

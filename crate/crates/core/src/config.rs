//! Scenario files.
//!
//! A scenario is one JSON object (see [`ScenarioConfig`]). A matrix file has
//! a `base` scenario, a list of named `variants` merged over it, and
//! `axes` whose cartesian product multiplies every variant. Relative trace
//! paths resolve against the directory of the file that names them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::metrics::OutputFormat;
use crate::path::PathParams;
use crate::pdcp::{FlowPolicy, SnLen, MAX_SDU_BYTES};
use crate::sim::SimTime;
use crate::trace::{ChannelTrace, CqiRateTable, LinkCapacity, TraceError};
use crate::transport::TcpConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{key}: {message}")]
    Parse { key: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{key}: {source}")]
    Trace {
        key: String,
        #[source]
        source: TraceError,
    },
}

fn invalid(key: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "DC_NoR")]
    DcNoR,
    #[serde(rename = "DC_Reo")]
    DcReo,
    #[serde(rename = "DC_Dup")]
    DcDup,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sc => "SC",
            Mode::DcNoR => "DC_NoR",
            Mode::DcReo => "DC_Reo",
            Mode::DcDup => "DC_Dup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficKind {
    Tcp,
    Udp,
}

impl TrafficKind {
    pub fn name(self) -> &'static str {
        match self {
            TrafficKind::Tcp => "tcp",
            TrafficKind::Udp => "udp",
        }
    }
}

fn default_prop_delay_ms() -> f64 {
    5.0
}

fn default_sdu_bytes() -> u32 {
    1400
}

fn default_uplink_delay_ms() -> f64 {
    5.0
}

fn default_duration_s() -> f64 {
    30.0
}

/// Secondary legs cross the inter-node backhaul unless told otherwise.
pub const DEFAULT_BACKHAUL_MS: f64 = 10.0;
/// Default queue size, in SDUs.
pub const DEFAULT_QUEUE_PDUS: u64 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Defaults to `A`, `B`, ... by position.
    #[serde(default)]
    pub id: String,
    /// Forced to 0 on the first (anchor) path; 10 ms elsewhere by default.
    #[serde(default)]
    pub backhaul_ms: Option<f64>,
    /// Per-second CQI trace (`second,cqi` CSV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_file: Option<PathBuf>,
    /// Inline CQI samples, one per second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cqi: Option<Vec<u8>>,
    /// Rate at CQI 15, or the constant rate when no trace is given.
    pub peak_rate_mbps: f64,
    #[serde(default = "default_prop_delay_ms")]
    pub prop_delay_ms: f64,
    #[serde(default)]
    pub loss_prob: f64,
    /// Defaults to 500 SDUs' worth of bytes.
    #[serde(default)]
    pub queue_limit_bytes: Option<u64>,
}

impl PathConfig {
    /// A constant-rate path.
    pub fn constant(id: &str, mbps: f64) -> Self {
        PathConfig {
            id: id.to_string(),
            backhaul_ms: None,
            trace_file: None,
            cqi: None,
            peak_rate_mbps: mbps,
            prop_delay_ms: default_prop_delay_ms(),
            loss_prob: 0.0,
            queue_limit_bytes: None,
        }
    }

    /// A path driven by a CQI trace file.
    pub fn traced(id: &str, trace_file: impl Into<PathBuf>, peak_mbps: f64) -> Self {
        PathConfig {
            trace_file: Some(trace_file.into()),
            ..PathConfig::constant(id, peak_mbps)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcpParams {
    pub initial_cwnd: f64,
    pub initial_rto_ms: u64,
    pub min_rto_ms: u64,
    pub max_rto_ms: u64,
    pub rwnd_segments: u64,
    pub dupack_threshold: u32,
}

impl Default for TcpParams {
    fn default() -> Self {
        let d = TcpConfig::default();
        TcpParams {
            initial_cwnd: d.initial_cwnd,
            initial_rto_ms: d.initial_rto.as_micros() / 1000,
            min_rto_ms: d.min_rto.as_micros() / 1000,
            max_rto_ms: d.max_rto.as_micros() / 1000,
            rwnd_segments: d.rwnd_segments,
            dupack_threshold: d.dupack_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub kind: TrafficKind,
    /// Offered load; required for UDP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udp_rate_mbps: Option<f64>,
    #[serde(default = "default_sdu_bytes")]
    pub sdu_bytes: u32,
    #[serde(default)]
    pub start_s: f64,
    /// UDP only: no SDU is sent at or after this time. Defaults to the run
    /// duration.
    #[serde(default)]
    pub stop_s: Option<f64>,
    /// One-way delay of the lossless ACK path.
    #[serde(default = "default_uplink_delay_ms")]
    pub uplink_delay_ms: f64,
    #[serde(default)]
    pub tcp: TcpParams,
}

impl TrafficConfig {
    pub fn udp(mbps: f64) -> Self {
        TrafficConfig {
            kind: TrafficKind::Udp,
            udp_rate_mbps: Some(mbps),
            sdu_bytes: default_sdu_bytes(),
            start_s: 0.0,
            stop_s: None,
            uplink_delay_ms: default_uplink_delay_ms(),
            tcp: TcpParams::default(),
        }
    }

    pub fn tcp() -> Self {
        TrafficConfig {
            kind: TrafficKind::Tcp,
            udp_rate_mbps: None,
            ..TrafficConfig::udp(0.0)
        }
    }

    pub fn tcp_config(&self) -> TcpConfig {
        TcpConfig {
            segment_bytes: self.sdu_bytes,
            initial_cwnd: self.tcp.initial_cwnd,
            initial_rto: SimTime::from_millis(self.tcp.initial_rto_ms),
            min_rto: SimTime::from_millis(self.tcp.min_rto_ms),
            max_rto: SimTime::from_millis(self.tcp.max_rto_ms),
            rwnd_segments: self.tcp.rwnd_segments,
            dupack_threshold: self.tcp.dupack_threshold,
        }
    }
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Output key; files are written as `<name>.csv` / `<name>.json`.
    #[serde(default)]
    pub name: String,
    pub mode: Mode,
    pub paths: Vec<PathConfig>,
    #[serde(default)]
    pub policy: Option<FlowPolicy>,
    /// Age of the queue/rate view the flow-control policy decides on.
    #[serde(default)]
    pub feedback_delay_ms: f64,
    /// Implied by the mode; may be given explicitly if it agrees.
    #[serde(default)]
    pub reordering: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_reordering_ms: Option<u64>,
    pub traffic: TrafficConfig,
    #[serde(default = "default_duration_s")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sn_len: SnLen,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    /// A config with every optional field at its default. Call
    /// [`ScenarioConfig::normalized`] (or run it) to apply mode-derived
    /// defaults.
    pub fn new(mode: Mode, paths: Vec<PathConfig>, traffic: TrafficConfig) -> Self {
        ScenarioConfig {
            name: String::new(),
            mode,
            paths,
            policy: None,
            feedback_delay_ms: 0.0,
            reordering: None,
            t_reordering_ms: None,
            traffic,
            duration_s: default_duration_s(),
            seed: 0,
            sn_len: SnLen::DEFAULT,
            output: OutputConfig::default(),
        }
    }

    pub fn with_t_reordering(mut self, ms: u64) -> Self {
        self.t_reordering_ms = Some(ms);
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn reordering_on(&self) -> bool {
        self.reordering.unwrap_or(matches!(self.mode, Mode::DcReo | Mode::DcDup))
    }

    pub fn policy(&self) -> FlowPolicy {
        self.policy.unwrap_or(match self.mode {
            Mode::DcDup => FlowPolicy::Duplicate,
            _ => FlowPolicy::RoundRobin,
        })
    }

    /// Fills mode- and position-dependent defaults and resolves relative
    /// trace paths against `base_dir`, then validates.
    pub fn normalized(mut self, base_dir: &Path) -> Result<Self, ConfigError> {
        if self.name.is_empty() {
            self.name = self.mode.name().to_string();
        }
        self.policy = Some(self.policy());
        self.reordering = Some(self.reordering_on());
        for (i, p) in self.paths.iter_mut().enumerate() {
            if p.id.is_empty() {
                p.id = path_letter(i);
            }
            if p.backhaul_ms.is_none() {
                p.backhaul_ms = Some(if i == 0 { 0.0 } else { DEFAULT_BACKHAUL_MS });
            }
            if p.queue_limit_bytes.is_none() {
                p.queue_limit_bytes = Some(DEFAULT_QUEUE_PDUS * u64::from(self.traffic.sdu_bytes));
            }
            if let Some(f) = &p.trace_file {
                if f.is_relative() {
                    p.trace_file = Some(base_dir.join(f));
                }
            }
        }
        if self.traffic.kind == TrafficKind::Udp && self.traffic.stop_s.is_none() {
            self.traffic.stop_s = Some(self.duration_s);
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks every invariant, including that trace files load.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(key, format!("must be a finite non-negative number, got {v}")))
            }
        };
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s", "must be positive"));
        }
        finite_nonneg("feedback_delay_ms", self.feedback_delay_ms)?;
        if !self.name.is_empty() && !valid_key(&self.name) {
            return Err(invalid(
                "name",
                format!("{:?} is not usable as a file name (use letters, digits, '_', '-', '.', '=')", self.name),
            ));
        }

        match (self.mode, self.paths.len()) {
            (_, 0) => return Err(invalid("paths", "at least one path is required")),
            (Mode::Sc, n) if n != 1 => {
                return Err(invalid("paths", format!("mode SC needs exactly 1 path, got {n}")))
            }
            (Mode::DcNoR | Mode::DcReo | Mode::DcDup, 1) => {
                return Err(invalid(
                    "paths",
                    format!("mode {} needs at least 2 paths, got 1", self.mode.name()),
                ))
            }
            _ => {}
        }

        let expected_reordering = match self.mode {
            Mode::DcNoR => Some(false),
            Mode::DcReo | Mode::DcDup => Some(true),
            Mode::Sc => None,
        };
        if let (Some(want), Some(got)) = (expected_reordering, self.reordering) {
            if want != got {
                return Err(invalid(
                    "reordering",
                    format!("mode {} requires reordering {}", self.mode.name(), if want { "on" } else { "off" }),
                ));
            }
        }
        match (self.reordering_on(), self.t_reordering_ms) {
            (true, None) => return Err(invalid("t_reordering_ms", "required when reordering is on")),
            (false, Some(_)) => {
                return Err(invalid("t_reordering_ms", "has no effect with reordering off"))
            }
            _ => {}
        }
        match (self.mode, self.policy()) {
            (Mode::DcDup, p) if p != FlowPolicy::Duplicate => {
                return Err(invalid("policy", "mode DC_Dup requires policy duplicate"))
            }
            (m, FlowPolicy::Duplicate) if m != Mode::DcDup => {
                return Err(invalid("policy", "policy duplicate requires mode DC_Dup"))
            }
            _ => {}
        }

        let t = &self.traffic;
        if t.sdu_bytes == 0 || t.sdu_bytes > MAX_SDU_BYTES {
            return Err(invalid(
                "traffic.sdu_bytes",
                format!("must be in 1..={MAX_SDU_BYTES}"),
            ));
        }
        finite_nonneg("traffic.start_s", t.start_s)?;
        finite_nonneg("traffic.uplink_delay_ms", t.uplink_delay_ms)?;
        match t.kind {
            TrafficKind::Udp => {
                let Some(rate) = t.udp_rate_mbps else {
                    return Err(invalid("traffic.udp_rate_mbps", "required for udp traffic"));
                };
                finite_nonneg("traffic.udp_rate_mbps", rate)?;
                if let Some(stop) = t.stop_s {
                    finite_nonneg("traffic.stop_s", stop)?;
                }
            }
            TrafficKind::Tcp => {
                if t.udp_rate_mbps.is_some() {
                    return Err(invalid("traffic.udp_rate_mbps", "only applies to udp traffic"));
                }
                if t.stop_s.is_some() {
                    return Err(invalid("traffic.stop_s", "only applies to udp traffic"));
                }
                let p = &t.tcp;
                if !(p.initial_cwnd.is_finite() && p.initial_cwnd >= 1.0) {
                    return Err(invalid("traffic.tcp.initial_cwnd", "must be at least 1"));
                }
                if p.min_rto_ms == 0 || p.min_rto_ms > p.max_rto_ms || p.initial_rto_ms > p.max_rto_ms {
                    return Err(invalid(
                        "traffic.tcp",
                        "need 0 < min_rto_ms <= max_rto_ms and initial_rto_ms <= max_rto_ms",
                    ));
                }
                if p.rwnd_segments == 0 || p.dupack_threshold == 0 {
                    return Err(invalid("traffic.tcp", "rwnd_segments and dupack_threshold must be positive"));
                }
            }
        }

        let mut ids = BTreeSet::new();
        for (i, p) in self.paths.iter().enumerate() {
            let key = |field: &str| format!("paths[{i}].{field}");
            if !p.id.is_empty() && !ids.insert(p.id.as_str()) {
                return Err(invalid(key("id"), format!("duplicate path id {:?}", p.id)));
            }
            if i == 0 && p.backhaul_ms.is_some_and(|b| b != 0.0) {
                return Err(invalid(key("backhaul_ms"), "the anchor path has no backhaul; must be 0"));
            }
            if let Some(b) = p.backhaul_ms {
                finite_nonneg(&key("backhaul_ms"), b)?;
            }
            finite_nonneg(&key("peak_rate_mbps"), p.peak_rate_mbps)?;
            finite_nonneg(&key("prop_delay_ms"), p.prop_delay_ms)?;
            if !(0.0..=1.0).contains(&p.loss_prob) {
                return Err(invalid(key("loss_prob"), "must be in [0, 1]"));
            }
            if let Some(q) = p.queue_limit_bytes {
                if q <= u64::from(t.sdu_bytes) {
                    return Err(invalid(
                        key("queue_limit_bytes"),
                        format!("must exceed the SDU size ({} bytes)", t.sdu_bytes),
                    ));
                }
            }
            if p.trace_file.is_some() && p.cqi.is_some() {
                return Err(invalid(key("trace_file"), "give either trace_file or cqi, not both"));
            }
            self.load_trace(i)?;
        }
        Ok(())
    }

    fn load_trace(&self, i: usize) -> Result<Option<ChannelTrace>, ConfigError> {
        let p = &self.paths[i];
        if let Some(file) = &p.trace_file {
            return ChannelTrace::load(file)
                .map(Some)
                .map_err(|source| ConfigError::Trace {
                    key: format!("paths[{i}].trace_file"),
                    source,
                });
        }
        if let Some(cqi) = &p.cqi {
            return ChannelTrace::new(format!("{}-inline", p.id), cqi.clone())
                .map(Some)
                .map_err(|source| ConfigError::Trace {
                    key: format!("paths[{i}].cqi"),
                    source,
                });
        }
        Ok(None)
    }

    /// Runtime parameters for every path. Loads traces.
    pub fn build_paths(&self) -> Result<Vec<PathParams>, ConfigError> {
        let table = Arc::new(CqiRateTable::lte_default());
        let mut out = Vec::with_capacity(self.paths.len());
        for (i, p) in self.paths.iter().enumerate() {
            let peak = p.peak_rate_mbps * 1e6;
            let capacity = match self.load_trace(i)? {
                Some(trace) => LinkCapacity::new(Arc::new(trace), table.clone(), peak),
                None => LinkCapacity::constant(peak),
            };
            let backhaul = if i == 0 { 0.0 } else { p.backhaul_ms.unwrap_or(DEFAULT_BACKHAUL_MS) };
            out.push(PathParams {
                id: if p.id.is_empty() { path_letter(i) } else { p.id.clone() },
                backhaul_delay: SimTime::from_millis_f64(backhaul),
                capacity,
                queue_limit_bytes: p
                    .queue_limit_bytes
                    .unwrap_or(DEFAULT_QUEUE_PDUS * u64::from(self.traffic.sdu_bytes)),
                prop_delay: SimTime::from_millis_f64(p.prop_delay_ms),
                loss_prob: p.loss_prob,
            });
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn path_letter(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("P{i}")
    }
}

fn valid_key(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '='))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_value<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let key = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        ConfigError::Parse {
            key,
            message: e.into_inner().to_string(),
        }
    })
}

fn parse_json(text: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        key: format!("line {}", e.line()),
        message: e.to_string(),
    })
}

/// Parses one scenario from JSON text; relative trace paths resolve
/// against `base_dir`.
pub fn parse_scenario_str(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
    let value = parse_json(text)?;
    parse_value::<ScenarioConfig>(value, "")?.normalized(base_dir)
}

/// Reads and validates a single-scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    parse_scenario_str(&read(path)?, &base_dir(path))
}

/// One named row of a matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// Keep only these base paths, in this order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_paths: Option<Vec<String>>,
    /// Fields merged over the base scenario.
    #[serde(default)]
    pub set: Map<String, Value>,
    /// Axes that apply to this variant only.
    #[serde(default)]
    pub axes: BTreeMap<String, Axis>,
}

/// Values for one field. A list is labelled by value; an object maps
/// labels to values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<Value>),
    Labelled(Map<String, Value>),
}

impl Axis {
    fn points(&self, key: &str) -> Vec<(String, Value)> {
        let leaf = key.rsplit('.').next().unwrap_or(key);
        match self {
            Axis::Values(vs) => vs
                .iter()
                .map(|v| {
                    let text = match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (format!("{leaf}{text}"), v.clone())
                })
                .collect(),
            Axis::Labelled(m) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub base: Map<String, Value>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub axes: BTreeMap<String, Axis>,
}

/// A fully expanded experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    pub runs: Vec<ScenarioConfig>,
}

impl ExperimentMatrix {
    pub fn single(cfg: ScenarioConfig) -> Self {
        ExperimentMatrix { runs: vec![cfg] }
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

fn set_dotted(obj: &mut Map<String, Value>, key: &str, value: Value) -> Result<(), String> {
    let mut parts = key.split('.').peekable();
    let mut cur = obj;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let next = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        cur = next
            .as_object_mut()
            .ok_or_else(|| format!("{part} is not an object"))?;
    }
    Err("empty key".into())
}

fn merge(base: &mut Map<String, Value>, over: &Map<String, Value>) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn cartesian(axes: &[(String, Vec<(String, Value)>)]) -> Vec<Vec<(String, String, Value)>> {
    let mut combos: Vec<Vec<(String, String, Value)>> = vec![vec![]];
    for (key, points) in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                points.iter().map(move |(label, v)| {
                    let mut c = c.clone();
                    c.push((key.clone(), label.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
}

/// Expands a matrix file: variants in file order, each multiplied by its
/// own axes and then the global axes (keys in sorted order).
pub fn expand_matrix(file: &MatrixFile, base_dir: &Path) -> Result<ExperimentMatrix, ConfigError> {
    let variants = if file.variants.is_empty() {
        vec![Variant {
            name: file
                .base
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or("run")
                .to_string(),
            use_paths: None,
            set: Map::new(),
            axes: BTreeMap::new(),
        }]
    } else {
        file.variants.clone()
    };

    let mut runs = Vec::new();
    let mut keys = BTreeSet::new();
    for (vi, variant) in variants.iter().enumerate() {
        let vkey = format!("variants[{vi}]");
        let mut obj = file.base.clone();
        merge(&mut obj, &variant.set);
        if let Some(ids) = &variant.use_paths {
            let all = obj
                .get("paths")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            let mut picked = Vec::new();
            for id in ids {
                let found = all
                    .iter()
                    .enumerate()
                    .find(|(i, p)| {
                        p.get("id").and_then(Value::as_str).map_or_else(|| path_letter(*i) == *id, |s| s == id)
                    })
                    .map(|(_, p)| p.clone())
                    .ok_or_else(|| invalid(format!("{vkey}.use_paths"), format!("no base path with id {id:?}")))?;
                picked.push(found);
            }
            // a path promoted to anchor loses its backhaul
            if let Some(Value::Object(first)) = picked.first_mut() {
                first.insert("backhaul_ms".into(), Value::from(0.0));
            }
            obj.insert("paths".into(), Value::Array(picked));
        }

        let mut axes: Vec<(String, Vec<(String, Value)>)> = variant
            .axes
            .iter()
            .map(|(k, a)| (k.clone(), a.points(k)))
            .collect();
        axes.extend(file.axes.iter().map(|(k, a)| (k.clone(), a.points(k))));
        for (k, points) in &axes {
            if points.is_empty() {
                return Err(invalid(format!("axes.{k}"), "axis has no values"));
            }
        }

        for combo in cartesian(&axes) {
            let mut run = obj.clone();
            let mut name = vec![variant.name.clone()];
            for (key, label, value) in &combo {
                set_dotted(&mut run, key, value.clone()).map_err(|m| invalid(format!("axes.{key}"), m))?;
                name.push(label.clone());
            }
            let name = name.join("-");
            run.insert("name".into(), Value::String(name.clone()));
            let cfg: ScenarioConfig = parse_value(Value::Object(run), &format!("{vkey}[{name}]"))?;
            let cfg = cfg.normalized(base_dir).map_err(|e| match e {
                ConfigError::Invalid { key, message } => ConfigError::Invalid {
                    key: format!("{name}: {key}"),
                    message,
                },
                other => other,
            })?;
            if !keys.insert(cfg.name.clone()) {
                return Err(invalid(vkey.clone(), format!("run key {name:?} is not unique")));
            }
            runs.push(cfg);
        }
    }
    Ok(ExperimentMatrix { runs })
}

/// What a config file holds.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Scenario(Box<ScenarioConfig>),
    Matrix(ExperimentMatrix),
}

impl ConfigFile {
    /// All runs the file describes.
    pub fn into_matrix(self) -> ExperimentMatrix {
        match self {
            ConfigFile::Scenario(cfg) => ExperimentMatrix::single(*cfg),
            ConfigFile::Matrix(m) => m,
        }
    }
}

/// Parses either kind of file. A top-level `base` key marks a matrix.
pub fn parse_str(text: &str, base_dir: &Path) -> Result<ConfigFile, ConfigError> {
    let value = parse_json(text)?;
    if value.get("base").is_some() {
        let file: MatrixFile = parse_value(value, "")?;
        Ok(ConfigFile::Matrix(expand_matrix(&file, base_dir)?))
    } else {
        let cfg: ScenarioConfig = parse_value(value, "")?;
        Ok(ConfigFile::Scenario(Box::new(cfg.normalized(base_dir)?)))
    }
}

pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
    parse_str(&read(path)?, &base_dir(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mode": "SC",
        "paths": [{ "peak_rate_mbps": 15 }],
        "traffic": { "kind": "tcp" }
    }"#;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        parse_scenario_str(text, Path::new("."))
    }

    #[test]
    fn minimal_sc_is_valid() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.name, "SC");
        assert_eq!(cfg.paths[0].id, "A");
        assert_eq!(cfg.paths[0].backhaul_ms, Some(0.0));
        assert_eq!(cfg.paths[0].queue_limit_bytes, Some(700_000));
        assert_eq!(cfg.duration_s, 30.0);
        assert_eq!(cfg.policy, Some(FlowPolicy::RoundRobin));
        assert_eq!(cfg.reordering, Some(false));
    }

    #[test]
    fn dc_reo_with_one_path_is_rejected() {
        let text = MINIMAL.replace("\"SC\"", "\"DC_Reo\"");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().starts_with("paths: mode DC_Reo needs at least 2 paths"), "{err}");
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = MINIMAL.replace("\"peak_rate_mbps\": 15", "\"peak_rate_mbps\": 15, \"colour\": 1");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().starts_with("paths[0].colour: unknown field `colour`"), "{err}");
    }

    #[test]
    fn secondary_paths_default_to_backhaul() {
        let cfg = parse(
            r#"{"mode":"DC_NoR","paths":[{"peak_rate_mbps":15},{"peak_rate_mbps":12}],
                "traffic":{"kind":"udp","udp_rate_mbps":27}}"#,
        )
        .unwrap();
        assert_eq!(cfg.paths[1].backhaul_ms, Some(10.0));
        assert_eq!(cfg.traffic.stop_s, Some(30.0));
        let built = cfg.build_paths().unwrap();
        assert_eq!(built[1].backhaul_delay, SimTime::from_millis(10));
        assert_eq!(built[0].backhaul_delay, SimTime::ZERO);
    }

    #[test]
    fn mode_invariants() {
        let two = r#""paths":[{"peak_rate_mbps":15},{"peak_rate_mbps":12}],"traffic":{"kind":"tcp"}"#;
        let cases = [
            (r#""mode":"DC_Reo""#, "t_reordering_ms: required"),
            (r#""mode":"DC_NoR","reordering":true"#, "reordering: mode DC_NoR requires reordering off"),
            (r#""mode":"DC_NoR","t_reordering_ms":40"#, "t_reordering_ms: has no effect"),
            (r#""mode":"DC_Dup","t_reordering_ms":40,"policy":"round_robin""#, "policy: mode DC_Dup requires"),
            (r#""mode":"DC_Reo","t_reordering_ms":40,"policy":"duplicate""#, "policy: policy duplicate requires"),
        ];
        for (head, want) in cases {
            let err = parse(&format!("{{{head},{two}}}")).unwrap_err();
            assert!(err.to_string().starts_with(want), "{head}: {err}");
        }
        let dup = parse(&format!("{{\"mode\":\"DC_Dup\",\"t_reordering_ms\":40,{two}}}")).unwrap();
        assert_eq!(dup.policy, Some(FlowPolicy::Duplicate));
        assert_eq!(dup.reordering, Some(true));
    }

    #[test]
    fn anchor_backhaul_must_be_zero() {
        let text = MINIMAL.replace("\"peak_rate_mbps\": 15", "\"peak_rate_mbps\": 15, \"backhaul_ms\": 10");
        assert!(parse(&text).unwrap_err().to_string().starts_with("paths[0].backhaul_ms"));
    }

    #[test]
    fn missing_trace_file_is_reported_with_key() {
        let text = MINIMAL.replace("\"peak_rate_mbps\": 15", "\"peak_rate_mbps\": 15, \"trace_file\": \"nope.csv\"");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().starts_with("paths[0].trace_file: "), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        for (from, to, key) in [
            ("\"peak_rate_mbps\": 15", "\"peak_rate_mbps\": 15, \"loss_prob\": 1.5", "paths[0].loss_prob"),
            ("\"peak_rate_mbps\": 15", "\"peak_rate_mbps\": 15, \"queue_limit_bytes\": 1000", "paths[0].queue_limit_bytes"),
            ("\"kind\": \"tcp\"", "\"kind\": \"udp\"", "traffic.udp_rate_mbps"),
            ("\"kind\": \"tcp\"", "\"kind\": \"tcp\", \"sdu_bytes\": 0", "traffic.sdu_bytes"),
            ("\"mode\": \"SC\"", "\"mode\": \"SC\", \"sn_len\": 10", "sn_len"),
        ] {
            let err = parse(&MINIMAL.replace(from, to)).unwrap_err();
            assert!(err.to_string().starts_with(key), "{to}: {err}");
        }
    }

    #[test]
    fn round_trip_is_stable() {
        let cfg = parse(
            r#"{"mode":"DC_Reo","t_reordering_ms":60,"seed":9,"sn_len":15,
                "paths":[{"peak_rate_mbps":15,"cqi":[15,7,0]},{"peak_rate_mbps":12.5,"loss_prob":0.01}],
                "traffic":{"kind":"udp","udp_rate_mbps":27,"stop_s":20}}"#,
        )
        .unwrap();
        let again = parse(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    fn matrix(text: &str) -> Result<ExperimentMatrix, ConfigError> {
        parse_str(text, Path::new(".")).map(ConfigFile::into_matrix)
    }

    #[test]
    fn matrix_expansion_order_and_keys() {
        let m = matrix(
            r#"{"base":{"mode":"DC_NoR","paths":[{"id":"A","peak_rate_mbps":15},{"id":"B","peak_rate_mbps":12}],
                        "traffic":{"kind":"tcp"}},
                "variants":[
                  {"name":"SC_B","use_paths":["B"],"set":{"mode":"SC"}},
                  {"name":"DC_Reo","set":{"mode":"DC_Reo"},"axes":{"t_reordering_ms":[40,150]}}],
                "axes":{"seed":[1,2]}}"#,
        )
        .unwrap();
        let names: Vec<_> = m.runs.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "SC_B-seed1",
                "SC_B-seed2",
                "DC_Reo-t_reordering_ms40-seed1",
                "DC_Reo-t_reordering_ms40-seed2",
                "DC_Reo-t_reordering_ms150-seed1",
                "DC_Reo-t_reordering_ms150-seed2",
            ]
        );
        assert_eq!(m.runs[0].paths[0].id, "B");
        assert_eq!(m.runs[0].paths[0].backhaul_ms, Some(0.0));
        assert_eq!(m.runs[5].t_reordering_ms, Some(150));
        assert_eq!(m.runs[5].seed, 2);
    }

    #[test]
    fn labelled_axis_and_duplicate_keys() {
        let base = r#""base":{"mode":"SC","paths":[{"peak_rate_mbps":15}],"traffic":{"kind":"tcp"}}"#;
        let m = matrix(&format!(
            r#"{{{base},"axes":{{"traffic":{{"tcp":{{"kind":"tcp"}},"udp":{{"kind":"udp","udp_rate_mbps":10}}}}}}}}"#
        ))
        .unwrap();
        assert_eq!(m.runs[1].name, "run-udp");
        assert_eq!(m.runs[1].traffic.kind, TrafficKind::Udp);

        let err = matrix(&format!(
            r#"{{{base},"variants":[{{"name":"x"}},{{"name":"x"}}]}}"#
        ))
        .unwrap_err();
        assert!(err.to_string().contains("not unique"), "{err}");
    }

    #[test]
    fn matrix_errors_name_the_run() {
        let err = matrix(
            r#"{"base":{"mode":"SC","paths":[{"peak_rate_mbps":15}],"traffic":{"kind":"tcp"}},
                "variants":[{"name":"bad","set":{"mode":"DC_Reo","t_reordering_ms":40}}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("bad: paths"), "{err}");
    }
}

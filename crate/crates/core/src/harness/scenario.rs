//! Scenario files.
//!
//! The text format is one `key = value` per line; `#` starts a comment. A
//! file whose first non-blank character is `{` is read as a flat JSON object
//! with the same keys. Omitted keys keep their defaults, which are the
//! `paper-base` preset. Recognised keys:
//!
//! ```text
//! preset                  bundled preset to start from (paper-base, asymmetric, single-path)
//! links                   number of paths (extra paths copy the base link)
//! linkN.capacity_mbps     capacity of path N (1-based), Mbit/s
//! linkN.delay_ms          one-way propagation delay, ms
//! linkN.loss_rate         random loss probability in [0, 1] (`linkN.loss` also accepted)
//! linkN.queue             drop-tail queue limit, packets
//! transfer_bytes          bytes to transfer (default 5000000)
//! mss                     segment payload, bytes (default 1400)
//! coupling                uncoupled | fully-coupled | linked-increases | rtt-compensator
//! detector                none | eifel | dsack
//! seed                    64-bit seed
//! trace_interval_s        congestion-window sampling period
//! stop_time_s             virtual-time limit
//! initial_cwnd            MSS
//! initial_ssthresh_bytes  bytes
//! initial_rto_s, rto_min_s, rto_max_s, initial_rtt_s
//! timestamps              true | false
//! partial_ack_retransmit  true | false
//! ack_loss                apply the path loss rate to ACKs too (default true)
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::coupling::CouplingMode;
use crate::netmodel::{LinkConfig, LinkConfigError};
use crate::spurious::DetectorChoice;
use crate::subflow::SubflowConfig;

pub const DEFAULT_TRANSFER_SIZE: u64 = 5_000_000;
pub const DEFAULT_MSS: u32 = 1400;

const PRESETS: &[(&str, &str)] = &[
    ("paper-base", include_str!("../../presets/paper-base.scn")),
    ("asymmetric", include_str!("../../presets/asymmetric.scn")),
    ("single-path", include_str!("../../presets/single-path.scn")),
];

const MAX_PRESET_DEPTH: usize = 4;

/// TCP knobs not covered by the link and transfer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpOptions {
    pub initial_cwnd: f64,
    pub initial_ssthresh_bytes: f64,
    pub initial_rto: f64,
    pub rto_min: f64,
    pub rto_max: f64,
    pub initial_rtt: f64,
    pub timestamps: bool,
    pub partial_ack_retransmit: bool,
}

impl Default for TcpOptions {
    fn default() -> Self {
        let d = SubflowConfig::default();
        TcpOptions {
            initial_cwnd: d.initial_cwnd,
            initial_ssthresh_bytes: 65535.0,
            initial_rto: d.initial_rto,
            rto_min: d.rto_min,
            rto_max: d.rto_max,
            initial_rtt: d.initial_rtt,
            timestamps: d.timestamps,
            partial_ack_retransmit: d.partial_ack_retransmit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub links: Vec<LinkConfig>,
    pub transfer_size: u64,
    pub mss: u32,
    pub coupling: CouplingMode,
    pub detector: DetectorChoice,
    pub seed: u64,
    pub trace_interval: f64,
    pub stop_time: f64,
    pub tcp: TcpOptions,
    pub ack_loss: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            links: vec![LinkConfig::paper_base(), LinkConfig::paper_base()],
            transfer_size: DEFAULT_TRANSFER_SIZE,
            mss: DEFAULT_MSS,
            coupling: CouplingMode::RttCompensator,
            detector: DetectorChoice::None,
            seed: 1,
            trace_interval: 0.05,
            stop_time: 3600.0,
            tcp: TcpOptions::default(),
            ack_loss: true,
        }
    }
}

impl ScenarioConfig {
    /// A bundled preset by name.
    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        load_preset(name, 0)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn subflow_config(&self) -> SubflowConfig {
        SubflowConfig {
            mss: self.mss,
            initial_cwnd: self.tcp.initial_cwnd,
            initial_ssthresh: self.tcp.initial_ssthresh_bytes / self.mss as f64,
            initial_rto: self.tcp.initial_rto,
            rto_min: self.tcp.rto_min,
            rto_max: self.tcp.rto_max,
            initial_rtt: self.tcp.initial_rtt,
            timestamps: self.tcp.timestamps,
            partial_ack_retransmit: self.tcp.partial_ack_retransmit,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.validate_with_lines(&HashMap::new())
    }

    fn validate_with_lines(&self, lines: &HashMap<String, usize>) -> Result<(), ScenarioError> {
        let err = |field: &str, message: String| ScenarioError::Invalid {
            field: field.to_string(),
            line: lines.get(field).copied(),
            message,
        };
        if self.links.is_empty() {
            return Err(err("links", "at least one link is required".into()));
        }
        for (i, link) in self.links.iter().enumerate() {
            if let Err(e) = link.validate() {
                let suffix = match e {
                    LinkConfigError::Capacity(_) => "capacity_mbps",
                    LinkConfigError::Delay(_) => "delay_ms",
                    LinkConfigError::LossRate(_) => "loss_rate",
                    LinkConfigError::QueueLimit => "queue",
                };
                return Err(err(&format!("link{}.{}", i + 1, suffix), e.to_string()));
            }
        }
        if self.mss == 0 {
            return Err(err("mss", "must be positive".into()));
        }
        if !(self.trace_interval.is_finite() && self.trace_interval > 0.0) {
            return Err(err("trace_interval_s", format!("must be positive, got {}", self.trace_interval)));
        }
        if !(self.stop_time.is_finite() && self.stop_time > 0.0) {
            return Err(err("stop_time_s", format!("must be positive, got {}", self.stop_time)));
        }
        let t = &self.tcp;
        if !(t.initial_cwnd.is_finite() && t.initial_cwnd >= 1.0) {
            return Err(err("initial_cwnd", format!("must be at least 1, got {}", t.initial_cwnd)));
        }
        if !(t.initial_ssthresh_bytes.is_finite() && t.initial_ssthresh_bytes > 0.0) {
            return Err(err("initial_ssthresh_bytes", "must be positive".into()));
        }
        for (field, v) in [
            ("initial_rto_s", t.initial_rto),
            ("rto_min_s", t.rto_min),
            ("rto_max_s", t.rto_max),
            ("initial_rtt_s", t.initial_rtt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(err(field, format!("must be positive, got {v}")));
            }
        }
        if t.rto_min > t.rto_max {
            return Err(err("rto_min_s", "must not exceed rto_max_s".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{}field `{field}`: {message}", LinePrefix(*line))]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

impl ScenarioError {
    /// The offending field, if the error concerns one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ScenarioError::Syntax { line, .. } => Some(*line),
            ScenarioError::Invalid { line, .. } => *line,
            _ => None,
        }
    }
}

struct LinePrefix(Option<usize>);

impl fmt::Display for LinePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(l) => write!(f, "line {l}: "),
            None => Ok(()),
        }
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Reads a scenario file. A bare preset name that is not an existing file
/// loads the bundled preset.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    if !path.exists() {
        if let Some(name) = path.to_str() {
            if PRESETS.iter().any(|(n, _)| *n == name) {
                return ScenarioConfig::preset(name);
            }
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Parses scenario text (key-value or JSON) and validates the result.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    parse_with_depth(text, 0)
}

fn load_preset(name: &str, depth: usize) -> Result<ScenarioConfig, ScenarioError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
    parse_with_depth(text, depth + 1)
}

fn parse_with_depth(text: &str, depth: usize) -> Result<ScenarioConfig, ScenarioError> {
    let mut entries = if text.trim_start().starts_with('{') {
        json_entries(text)?
    } else {
        kv_entries(text)?
    };
    for e in &mut entries {
        if let Some(prefix) = e.key.strip_suffix(".loss") {
            e.key = format!("{prefix}.loss_rate");
        }
    }

    let mut seen: HashMap<String, usize> = HashMap::new();
    for e in &entries {
        if let Some(first) = seen.insert(e.key.clone(), e.line) {
            return Err(ScenarioError::Syntax {
                line: e.line,
                message: format!("duplicate key `{}` (first set on line {first})", e.key),
            });
        }
    }

    let mut cfg = match entries.iter().find(|e| e.key == "preset") {
        Some(e) if depth >= MAX_PRESET_DEPTH => {
            return Err(ScenarioError::Syntax {
                line: e.line,
                message: "presets nested too deeply".into(),
            })
        }
        Some(e) => load_preset(&e.value, depth).map_err(|err| match err {
            ScenarioError::UnknownPreset(name) => ScenarioError::Invalid {
                field: "preset".into(),
                line: Some(e.line),
                message: format!("unknown preset {name:?}"),
            },
            other => other,
        })?,
        None => ScenarioConfig::default(),
    };

    // The link count goes first so per-link keys can address new links.
    if let Some(e) = entries.iter().find(|e| e.key == "links") {
        let n: usize = parse_value(e)?;
        if n == 0 {
            return Err(invalid(e, "at least one link is required"));
        }
        let template = cfg.links.first().cloned().unwrap_or_else(LinkConfig::paper_base);
        cfg.links.resize(n, template);
    }
    for e in entries.iter().filter(|e| e.key != "preset" && e.key != "links") {
        apply(&mut cfg, e)?;
    }
    cfg.validate_with_lines(&seen)?;
    Ok(cfg)
}

fn invalid(e: &Entry, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: e.key.clone(),
        line: Some(e.line),
        message: message.into(),
    }
}

fn parse_value<T: std::str::FromStr>(e: &Entry) -> Result<T, ScenarioError>
where
    T::Err: fmt::Display,
{
    let cleaned = e.value.replace('_', "");
    cleaned
        .parse::<T>()
        .map_err(|err| invalid(e, format!("cannot parse {:?}: {err}", e.value)))
}

fn parse_f64(e: &Entry) -> Result<f64, ScenarioError> {
    let v: f64 = parse_value(e)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(e, format!("{:?} is not a finite number", e.value)))
    }
}

fn parse_bool(e: &Entry) -> Result<bool, ScenarioError> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(e, format!("expected true or false, got {:?}", e.value))),
    }
}

fn apply(cfg: &mut ScenarioConfig, e: &Entry) -> Result<(), ScenarioError> {
    if let Some((idx, field)) = link_key(&e.key) {
        if idx == 0 || idx > cfg.links.len() {
            return Err(invalid(
                e,
                format!("link index {idx} out of range 1..={} (set `links` first)", cfg.links.len()),
            ));
        }
        let link = &mut cfg.links[idx - 1];
        match field {
            "capacity_mbps" => link.capacity_bps = parse_f64(e)? * 1e6,
            "capacity_bps" => link.capacity_bps = parse_f64(e)?,
            "delay_ms" => link.one_way_delay = parse_f64(e)? / 1e3,
            "loss_rate" => link.loss_rate = parse_f64(e)?,
            "queue" => link.queue_limit = parse_value(e)?,
            _ => return Err(invalid(e, "unknown link field")),
        }
        return Ok(());
    }
    match e.key.as_str() {
        "transfer_bytes" => cfg.transfer_size = parse_value(e)?,
        "mss" => cfg.mss = parse_value(e)?,
        "coupling" => cfg.coupling = e.value.parse().map_err(|err| invalid(e, format!("{err}")))?,
        "detector" => cfg.detector = e.value.parse().map_err(|err| invalid(e, format!("{err}")))?,
        "seed" => cfg.seed = parse_value(e)?,
        "trace_interval_s" => cfg.trace_interval = parse_f64(e)?,
        "stop_time_s" => cfg.stop_time = parse_f64(e)?,
        "initial_cwnd" => cfg.tcp.initial_cwnd = parse_f64(e)?,
        "initial_ssthresh_bytes" => cfg.tcp.initial_ssthresh_bytes = parse_f64(e)?,
        "initial_rto_s" => cfg.tcp.initial_rto = parse_f64(e)?,
        "rto_min_s" => cfg.tcp.rto_min = parse_f64(e)?,
        "rto_max_s" => cfg.tcp.rto_max = parse_f64(e)?,
        "initial_rtt_s" => cfg.tcp.initial_rtt = parse_f64(e)?,
        "timestamps" => cfg.tcp.timestamps = parse_bool(e)?,
        "partial_ack_retransmit" => cfg.tcp.partial_ack_retransmit = parse_bool(e)?,
        "ack_loss" => cfg.ack_loss = parse_bool(e)?,
        _ => return Err(invalid(e, "unknown key")),
    }
    Ok(())
}

fn link_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("link")?;
    let (num, field) = rest.split_once('.')?;
    Some((num.parse().ok()?, field))
}

fn kv_entries(text: &str) -> Result<Vec<Entry>, ScenarioError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ScenarioError::Syntax {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(ScenarioError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(out)
}

fn json_entries(text: &str) -> Result<Vec<Entry>, ScenarioError> {
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|err| ScenarioError::Syntax {
            line: err.line(),
            message: err.to_string(),
        })?;
    let mut out = Vec::with_capacity(map.len());
    for (key, value) in map {
        let line = json_key_line(text, &key);
        let value = match value {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            other => {
                return Err(ScenarioError::Invalid {
                    field: key,
                    line: Some(line),
                    message: format!("expected a string, number or boolean, got {other}"),
                })
            }
        };
        out.push(Entry { key, value, line });
    }
    out.sort_by_key(|e| e.line);
    Ok(out)
}

fn json_key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.find(&needle)
        .map(|pos| text[..pos].matches('\n').count() + 1)
        .unwrap_or(1)
}

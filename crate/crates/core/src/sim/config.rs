//! Simulation configuration: a TOML document with defaults for every key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::PolicyKind;
use crate::error::ConfigError;
use crate::time::Micros;
use crate::traffic::TrafficConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Constant server-to-bottleneck delay.
    #[default]
    Stable,
    /// Constant delay plus an exponential per-frame jitter.
    Unstable,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Stable => "stable",
            Regime::Unstable => "unstable",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stable" => Ok(Regime::Stable),
            "unstable" => Ok(Regime::Unstable),
            _ => Err(format!("unknown regime `{s}` (expected stable or unstable)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub bottleneck_mbps: f64,
    /// Bottleneck to client.
    pub propagation_ms: f64,
    /// Server to bottleneck, before jitter.
    pub server_delay_ms: f64,
    /// Client to server; acknowledgements take the same time.
    pub request_delay_ms: f64,
    pub regime: Regime,
    /// Mean of the exponential jitter in the unstable regime.
    pub jitter_mean_ms: f64,
    pub flows: u32,
    /// Long interval.
    pub lti_ms: u32,
    /// Short interval.
    pub sti_ms: u32,
    pub beta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub d_min_ms: f64,
    /// External delay assumed until a flow's first RTT mark arrives.
    pub prior_external_delay_ms: f64,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Drop frames at the bottleneck once their bound is violated.
    pub proactive_drop: bool,
    pub st_stop_on_nonpositive_gain: bool,
    /// Hand surplus left after the short-timescale grants to backlogged flows.
    pub distribute_residual: bool,
    pub mtu_bytes: u32,
    /// Header bytes per packet, option included.
    pub header_bytes: u32,
    /// Queuing delays remembered per flow for resolving RTT marks.
    pub delay_record_capacity: usize,
    /// Check budget and conservation at every event.
    pub check_invariants: bool,
    pub log_decisions: bool,
    pub log_events: bool,
    /// Trace files, one per flow; generated traces are used when empty.
    pub traces: Vec<PathBuf>,
    pub traffic: TrafficConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            bottleneck_mbps: 25.0,
            propagation_ms: 5.0,
            server_delay_ms: 5.0,
            request_delay_ms: 10.0,
            regime: Regime::Stable,
            jitter_mean_ms: 15.0,
            flows: 10,
            lti_ms: 1000,
            sti_ms: 50,
            beta: 0.01,
            epsilon: 0.1,
            alpha: 0.125,
            d_min_ms: 1.0,
            prior_external_delay_ms: 20.0,
            policy: PolicyKind::Proposed,
            seed: 42,
            proactive_drop: true,
            st_stop_on_nonpositive_gain: true,
            distribute_residual: true,
            mtu_bytes: 1500,
            header_bytes: 52,
            delay_record_capacity: 8192,
            check_invariants: true,
            log_decisions: false,
            log_events: false,
            traces: Vec::new(),
            traffic: TrafficConfig::default(),
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn override_value(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').map(str::trim).collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| ConfigError::field(key, "empty override key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::field(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::Syntax(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl SimConfig {
    /// Parses a TOML document, applies `key=value` overrides (dotted keys
    /// reach into sections) and validates the result.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for (k, v) in overrides {
            set_path(&mut table, k, override_value(v))?;
        }
        let cfg: SimConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::field(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative trace paths resolve against the file's
    /// directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let Some(dir) = path.parent() {
            for t in &mut cfg.traces {
                if t.is_relative() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, msg: &str| Err(ConfigError::field(field, msg));
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !(self.bottleneck_mbps > 0.0 && self.bottleneck_mbps.is_finite()) {
            return bad("bottleneck_mbps", "must be positive");
        }
        for (name, v) in [
            ("propagation_ms", self.propagation_ms),
            ("server_delay_ms", self.server_delay_ms),
            ("request_delay_ms", self.request_delay_ms),
            ("jitter_mean_ms", self.jitter_mean_ms),
            ("prior_external_delay_ms", self.prior_external_delay_ms),
            ("beta", self.beta),
        ] {
            if !nonneg(v) {
                return bad(name, "must be a nonnegative number");
            }
        }
        if self.sti_ms == 0 || self.lti_ms == 0 {
            return bad("sti_ms", "intervals must be positive");
        }
        if !self.lti_ms.is_multiple_of(self.sti_ms) {
            return bad("lti_ms", "must be a multiple of sti_ms");
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad("epsilon", "must be in [0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", "must be in (0, 1]");
        }
        if !(self.d_min_ms > 0.0 && self.d_min_ms.is_finite()) {
            return bad("d_min_ms", "must be positive");
        }
        if self.header_bytes >= self.mtu_bytes {
            return bad("header_bytes", "must be smaller than mtu_bytes");
        }
        if self.delay_record_capacity == 0 {
            return bad("delay_record_capacity", "must be positive");
        }
        if !self.traces.is_empty() && self.traces.len() != self.flows as usize {
            return bad("traces", "needs one trace per flow");
        }
        if let PolicyKind::SingleTimescale(p) = self.policy {
            if p.as_us() % 1000 != 0 {
                return bad("policy", "single-timescale period must be whole milliseconds");
            }
        }
        self.traffic.validate()
    }

    pub fn link_bps(&self) -> u64 {
        (self.bottleneck_mbps * 1e6).round() as u64
    }

    pub fn lti(&self) -> Micros {
        Micros::from_ms(i64::from(self.lti_ms))
    }

    pub fn sti(&self) -> Micros {
        Micros::from_ms(i64::from(self.sti_ms))
    }
}

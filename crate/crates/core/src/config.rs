//! Scenario configuration and its TOML file representation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentKind, LearningConfig};
use crate::clock::SuClock;
use crate::error::{Error, Result};
use crate::phy::{GeometryConfig, RadioConfig};
use crate::traffic::TrafficConfig;

/// How S_TX windows are laid over the per-SU counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    #[default]
    Tumbling,
    Sliding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// SUs per S_TX window.
    pub window_sus: u64,
    pub window_mode: WindowMode,
    /// Stride between sliding windows, in SUs.
    pub sliding_stride_sus: u64,
    /// Convergence level on windowed S_TX.
    pub convergence_level: f64,
    /// Consecutive windows that must stay at or above the level.
    pub convergence_hold: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window_sus: 1000,
            window_mode: WindowMode::Tumbling,
            sliding_stride_sus: 100,
            convergence_level: 0.999,
            convergence_hold: 4,
        }
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of agents (UEs), N.
    pub agents: usize,
    /// Number of orthogonal channels, K. Defaults to what the radio bandwidth yields.
    pub channels: usize,
    pub agent_kind: AgentKind,
    /// Total simulated time in seconds.
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    /// Times at which sweep tables report S_TX.
    pub eval_times_s: Vec<f64>,
    /// SUs between an attempt and the arrival of its feedback (0 = same SU).
    pub feedback_delay_sus: u64,
    pub learning: LearningConfig,
    pub traffic: TrafficConfig,
    pub radio: RadioConfig,
    pub geometry: GeometryConfig,
    pub clock: SuClock,
    pub metrics: MetricsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let radio = RadioConfig::default();
        Self {
            agents: 50,
            channels: radio.derived_channel_count(),
            agent_kind: AgentKind::Ts,
            duration_s: 240.0,
            seeds: (0..10).collect(),
            eval_times_s: vec![60.0],
            feedback_delay_sus: 0,
            learning: LearningConfig::default(),
            traffic: TrafficConfig::default(),
            radio,
            geometry: GeometryConfig::default(),
            clock: SuClock::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::config("agents", "must be >= 1"));
        }
        if self.channels == 0 {
            return Err(Error::config("channels", "must be >= 1"));
        }
        if self.channels > u16::MAX as usize {
            return Err(Error::config("channels", "too many channels"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::config("duration_s", "must be finite and > 0"));
        }
        if self.seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(Error::config("seeds", "must be <= 2^63 - 1"));
        }
        if self.eval_times_s.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::config("eval_times_s", "every time must be finite and > 0"));
        }
        if self.feedback_delay_sus > 1 {
            return Err(Error::config("feedback_delay_sus", "only 0 or 1 is supported"));
        }
        self.clock.validate()?;
        if self.clock.su_count(self.duration_s) == 0 {
            return Err(Error::config("duration_s", "shorter than one SU"));
        }
        self.learning.validate()?;
        self.traffic.validate(&self.clock)?;
        self.radio.validate()?;
        self.geometry.validate()?;
        let m = &self.metrics;
        if m.window_sus == 0 {
            return Err(Error::config("metrics.window_sus", "must be >= 1"));
        }
        if m.sliding_stride_sus == 0 {
            return Err(Error::config("metrics.sliding_stride_sus", "must be >= 1"));
        }
        if !(m.convergence_level > 0.0 && m.convergence_level <= 1.0) {
            return Err(Error::config("metrics.convergence_level", "must lie in (0, 1]"));
        }
        if m.convergence_hold == 0 {
            return Err(Error::config("metrics.convergence_hold", "must be >= 1"));
        }
        Ok(())
    }

    pub fn su_count(&self) -> u64 {
        self.clock.su_count(self.duration_s)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads and validates a config file.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical TOML form with seeds and evaluation times
    /// blanked, so runs that differ only in seed share a hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.eval_times_s.clear();
        let text = toml::to_string(&canonical).expect("scenario configs always serialise");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses a seed list such as `3`, `0,4,9` or `0..10` (half-open), or a
/// comma-separated mix of both.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| Error::Parse(format!("bad seed `{part}`; expected N, A..B or a comma list"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
            let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
            if b <= a || b - a > 1_000_000 {
                return Err(bad(part));
            }
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    if seeds.iter().any(|&s| s > i64::MAX as u64) {
        return Err(Error::Parse("seeds above 2^63 - 1 cannot be stored in config files".into()));
    }
    Ok(seeds)
}

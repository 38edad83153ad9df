//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};
use std::time::Duration;

use flowsplit_splitter::SplitterConfig;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::netsim::{RoutingPolicy, SimConfig, TunnelConfig, DEFAULT_MTU, MIN_PACKET_BYTES};
use crate::time::SimTime;
use crate::workload::{BackgroundLoad, Pacing, QueryMix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Seeds used by multi-seed checks.
    pub seeds: Vec<u64>,
    /// Splitter threshold T.
    pub threshold: u64,
    /// Flows with fewer packets than this are reported as short. Defaults to
    /// `threshold`; sweeps over T pin it so rows stay comparable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_threshold: Option<u64>,
    pub treatment: RoutingPolicy,
    pub baseline: RoutingPolicy,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub splitter: SplitterSection,
    pub tunnel: TunnelConfig,
    pub workload: WorkloadSection,
    pub background: BackgroundLoad,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitterSection {
    pub idle_timeout_s: f64,
    pub eviction_interval_s: f64,
    pub short_mark: u8,
    pub long_mark: u8,
}

impl Default for SplitterSection {
    fn default() -> Self {
        Self { idle_timeout_s: 30.0, eviction_interval_s: 1.0, short_mark: 0x00, long_mark: 0x08 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    /// Application query arrivals per second.
    pub flow_rate: f64,
    pub packet_bytes: u32,
    pub pacing: Pacing,
    pub mix: QueryMix,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self {
            flow_rate: 100.0,
            packet_bytes: 1500,
            pacing: Pacing::Burst { burst_size: 3072, gap_us: 600_000 },
            mix: QueryMix::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub utilization: Vec<f64>,
    pub threshold: Vec<u64>,
    pub flow_rate: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            utilization: vec![0.1, 0.2, 0.3, 0.4],
            threshold: vec![1, 8, 16, 40],
            flow_rate: vec![25.0, 50.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write per-packet delivery traces and record their SHA-256.
    pub trace: bool,
    pub histogram_bin_us: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), trace: false, histogram_bin_us: 50.0 }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            threshold: 40,
            report_threshold: None,
            treatment: RoutingPolicy::SplitterTos,
            baseline: RoutingPolicy::EcmpPerPacket,
            horizon_s: 120.0,
            warmup_s: 5.0,
            splitter: SplitterSection::default(),
            tunnel: TunnelConfig::default(),
            workload: WorkloadSection::default(),
            background: BackgroundLoad::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&src, &path.display().to_string())
    }

    /// Parses and validates. Errors carry the offending line when it can be
    /// found in `src`.
    pub fn from_toml_str(src: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(src).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        config.check().map_err(|(key, message)| {
            let location = match locate_key(src, key) {
                Some(line) => format!("{origin}: line {line}: {key}: "),
                None => format!("{origin}: {key}: "),
            };
            ConfigError::Invalid { location, message }
        })?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.check().map_err(|(key, message)| ConfigError::Invalid {
            location: format!("{key}: "),
            message,
        })
    }

    fn check(&self) -> Result<(), (&'static str, String)> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.threshold == 0 {
            return Err(("threshold", "must be at least 1".into()));
        }
        if self.report_threshold == Some(0) {
            return Err(("report_threshold", "must be at least 1".into()));
        }
        if !positive(self.horizon_s) {
            return Err(("horizon_s", format!("must be positive, got {}", self.horizon_s)));
        }
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0 && self.warmup_s < self.horizon_s) {
            return Err(("warmup_s", format!("must lie in [0, horizon_s), got {}", self.warmup_s)));
        }
        if !positive(self.splitter.idle_timeout_s) {
            return Err(("splitter.idle_timeout_s", "must be positive".into()));
        }
        if !positive(self.splitter.eviction_interval_s) {
            return Err(("splitter.eviction_interval_s", "must be positive".into()));
        }
        if self.splitter.short_mark == self.splitter.long_mark {
            return Err(("splitter.long_mark", "short and long marks must differ".into()));
        }
        if self.tunnel.capacity_bps == 0 {
            return Err(("tunnel.capacity_bps", "must be positive".into()));
        }
        if !positive(self.workload.flow_rate) {
            return Err(("workload.flow_rate", format!("must be positive, got {}", self.workload.flow_rate)));
        }
        if !(MIN_PACKET_BYTES..=DEFAULT_MTU).contains(&self.workload.packet_bytes) {
            return Err((
                "workload.packet_bytes",
                format!("must lie in [{MIN_PACKET_BYTES}, {DEFAULT_MTU}]"),
            ));
        }
        self.workload.pacing.validate().map_err(|e| ("workload.pacing", e.to_string()))?;
        self.workload.mix.validate().map_err(|e| ("workload.mix", e.to_string()))?;
        self.background.validate().map_err(|e| ("background.utilization", e.to_string()))?;
        if !positive(self.output.histogram_bin_us) {
            return Err(("output.histogram_bin_us", "must be positive".into()));
        }
        if self.sweep.utilization.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(("sweep.utilization", "values must lie in [0, 1]".into()));
        }
        if self.sweep.threshold.contains(&0) {
            return Err(("sweep.threshold", "values must be at least 1".into()));
        }
        if self.sweep.flow_rate.iter().any(|r| !positive(*r)) {
            return Err(("sweep.flow_rate", "values must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.horizon_s)
    }

    pub fn warmup(&self) -> SimTime {
        SimTime::from_secs_f64(self.warmup_s)
    }

    pub fn report_threshold(&self) -> u64 {
        self.report_threshold.unwrap_or(self.threshold)
    }

    pub fn combined_capacity_bps(&self) -> u64 {
        2 * self.tunnel.capacity_bps
    }

    pub fn splitter_config(&self) -> SplitterConfig {
        SplitterConfig {
            threshold: self.threshold,
            idle_timeout: Duration::from_secs_f64(self.splitter.idle_timeout_s),
            short_mark: self.splitter.short_mark,
            long_mark: self.splitter.long_mark,
        }
    }

    pub fn sim_config(&self, policy: RoutingPolicy) -> SimConfig {
        SimConfig {
            tunnel: self.tunnel,
            policy,
            splitter: self.splitter_config(),
            eviction_interval: Some(SimTime::from_secs_f64(self.splitter.eviction_interval_s)),
        }
    }

    /// Tunnels at a tenth of the capacity for quick desk runs. Flow arrivals
    /// are unchanged; bulk flows (those spanning more than one burst) and the
    /// burst size shrink tenfold, so bursts take as long to drain as at full
    /// scale. Flows with their own pacing keep their size and slow down.
    pub fn fast(mut self) -> Self {
        const FACTOR: u64 = 10;
        self.tunnel.capacity_bps /= FACTOR;
        let burst = match &mut self.workload.pacing {
            Pacing::Burst { burst_size, .. } => {
                let full = *burst_size;
                *burst_size = (full / FACTOR).max(1);
                Some(full)
            }
            smooth => {
                *smooth = smooth.slowed(FACTOR);
                None
            }
        };
        for c in &mut self.workload.mix.categories {
            match (c.pacing, burst) {
                (Some(p), _) => c.pacing = Some(p.slowed(FACTOR)),
                (None, Some(b)) if c.n_packets > b => c.n_packets = (c.n_packets / FACTOR).max(1),
                _ => {}
            }
        }
        self
    }
}

/// 1-based line on which `key` (dotted path) is assigned, if any.
fn locate_key(src: &str, key: &str) -> Option<usize> {
    let (section, leaf) = match key.rsplit_once('.') {
        Some((s, l)) => (s, l),
        None => ("", key),
    };
    let mut current = String::new();
    let mut fallback = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = header.trim().to_string();
            if current == key {
                return Some(i + 1);
            }
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim().to_string();
            if current == key || current.starts_with(&format!("{key}.")) {
                fallback.get_or_insert(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        let full = if current.is_empty() { lhs.to_string() } else { format!("{current}.{lhs}") };
        if full == key || (current == section && lhs == leaf) {
            return Some(i + 1);
        }
    }
    fallback
}

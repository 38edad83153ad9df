use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::MetricsError;
use crate::metrics::{Histogram, Summary};
use crate::netsim::RoutingPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub flows: usize,
    pub fct_us: Option<Summary>,
    pub jitter_us: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub n_packets: u64,
    pub flows: usize,
    pub fct_us: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelReport {
    pub index: usize,
    pub pkts_sent: u64,
    pub bytes_sent: u64,
    pub max_queue_depth: usize,
    /// Busy fraction over the whole horizon.
    pub utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub splitter_errors: u64,
    pub unknown_marks: u64,
    pub evicted_flows: u64,
    /// Long-to-short re-markings inside a completed flow (eviction of a live
    /// long flow sends its tail back to the short tunnel).
    pub mark_regressions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowCounts {
    pub completed: usize,
    pub incomplete: usize,
    pub warmup_excluded: usize,
}

/// Offered packet rates, averaged over the horizon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub app_pps: f64,
    pub background_pps: f64,
    pub total_pps: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub short_fct_us: Option<Histogram>,
    pub short_jitter_us: Option<Histogram>,
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: RoutingPolicy,
    pub seed: u64,
    pub report_threshold: u64,
    pub short: ClassReport,
    pub long: ClassReport,
    pub by_size: Vec<SizeReport>,
    pub tunnels: Vec<TunnelReport>,
    pub anomalies: AnomalyReport,
    pub flows: FlowCounts,
    pub offered: RateReport,
    pub histograms: HistogramReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_sha256: Option<String>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// Fewer packets than the report threshold.
    Short,
    Long,
    /// Exactly this many packets.
    Size(u64),
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selector::Short => f.write_str("short"),
            Selector::Long => f.write_str("long"),
            Selector::Size(n) => write!(f, "{n}-packet"),
        }
    }
}

impl RunReport {
    pub fn fct(&self, selector: Selector) -> Option<&Summary> {
        match selector {
            Selector::Short => self.short.fct_us.as_ref(),
            Selector::Long => self.long.fct_us.as_ref(),
            Selector::Size(n) => self.by_size.iter().find(|s| s.n_packets == n)?.fct_us.as_ref(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "policy {}  seed {}  short < {} packets", self.policy.name(), self.seed, self.report_threshold);
        let _ = writeln!(
            out,
            "offered {:.0} pps (app {:.0}, background {:.0})",
            self.offered.total_pps, self.offered.app_pps, self.offered.background_pps
        );
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "metric", "n", "mean", "std", "p50", "p99", "p99.9"
        );
        let mut row = |name: &str, s: Option<&Summary>| match s {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:<14} {:>8} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1}",
                    name, s.count, s.mean, s.std, s.p50, s.p99, s.p999
                );
            }
            None => {
                let _ = writeln!(out, "{name:<14} {:>8}", 0);
            }
        };
        row("short fct us", self.short.fct_us.as_ref());
        row("short jitter", self.short.jitter_us.as_ref());
        row("long fct us", self.long.fct_us.as_ref());
        row("long jitter", self.long.jitter_us.as_ref());
        for s in &self.by_size {
            row(&format!("fct {}p", s.n_packets), s.fct_us.as_ref());
        }
        for t in &self.tunnels {
            let _ = writeln!(
                out,
                "tunnel {}: {} pkts, utilization {:.3}, max queue {}",
                t.index, t.pkts_sent, t.utilization, t.max_queue_depth
            );
        }
        let _ = writeln!(
            out,
            "flows: {} completed, {} incomplete, {} in warmup; anomalies: {} splitter, {} unknown marks, {} evictions, {} regressions",
            self.flows.completed,
            self.flows.incomplete,
            self.flows.warmup_excluded,
            self.anomalies.splitter_errors,
            self.anomalies.unknown_marks,
            self.anomalies.evicted_flows,
            self.anomalies.mark_regressions
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    /// Baseline mean FCT over treatment mean FCT.
    pub mean: f64,
    pub p99: f64,
}

/// FCT acceleration of `treatment` over `baseline` for the selected flows.
pub fn speedup(
    baseline: &RunReport,
    treatment: &RunReport,
    selector: Selector,
) -> Result<Speedup, MetricsError> {
    let empty = || MetricsError::EmptySelection(selector.to_string());
    let b = baseline.fct(selector).ok_or_else(empty)?;
    let t = treatment.fct(selector).ok_or_else(empty)?;
    Ok(Speedup { mean: b.mean / t.mean, p99: b.p99 / t.p99 })
}

//! The acceptance suite, shared by `flowsplit check` and the `acceptance`
//! test target. Each criterion yields one pass/fail line.

use std::fmt;
use std::net::Ipv4Addr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use flowsplit_splitter::{set_tos, FlowClass, FlowTable, Ipv4Header, SplitterConfig, PROTO_TCP, PROTO_UDP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::bench_splitter;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{run_policy, sweep, Comparison, ExperimentReport, RunCache, RunOptions, SweepAxis, SweepTable};
use crate::metrics::compute_fct;
use crate::netsim::{FlowKind, Packet, RoutingPolicy, SimConfig, Simulator, TupleAllocator};
use crate::time::SimTime;

pub const CHECKSUM_CASES: usize = 10_000;
pub const CHECKSUM_BUDGET: Duration = Duration::from_secs(1);
pub const HEADLINE_BAND: (f64, f64) = (1.3, 2.2);
pub const HEADLINE_STRONG: f64 = 1.4;
pub const TREND_UTILIZATION: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
pub const TREND_MIN_GAIN: f64 = 0.15;
pub const THRESHOLDS: [u64; 4] = [1, 8, 16, 40];
pub const THRESHOLD_SLACK: f64 = 0.1;
pub const JITTER_MIN_UTILIZATION: f64 = 0.2;
pub const LONG_FCT_MAX_RATIO: f64 = 1.10;
pub const OVERHEAD_PACKETS: u64 = 1_000_000;
pub const OVERHEAD_FLOWS: u64 = 10_000;
pub const OVERHEAD_MAX_NS: f64 = 1_000.0;

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "incremental checksum matches full recompute"),
    (2, "classification follows the packet-count threshold"),
    (3, "idle flows are evicted after the timeout"),
    (4, "single-flow FCT matches the queueing closed form"),
    (5, "short-flow speedup at 40% utilization"),
    (6, "speedup grows with utilization"),
    (7, "lower thresholds do not lose speedup"),
    (8, "short-flow jitter no worse than ECMP"),
    (9, "long flows are not slowed down"),
    (10, "splitter per-packet overhead"),
    (11, "runs are deterministic"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

fn result(id: u8, passed: bool, detail: String) -> CriterionResult {
    let name = CRITERIA.iter().find(|(i, _)| *i == id).map_or("?", |(_, n)| *n);
    CriterionResult { id, name, passed, detail }
}

/// Runs criteria against one base configuration, sharing simulation runs
/// between criteria.
pub struct Acceptance {
    config: ExperimentConfig,
    cache: Mutex<RunCache>,
    utilization: Mutex<Option<SweepTable>>,
}

impl Acceptance {
    pub fn new(config: ExperimentConfig) -> Self {
        Self { config, cache: Mutex::new(RunCache::new()), utilization: Mutex::new(None) }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn run_all(&self) -> Vec<Result<CriterionResult>> {
        CRITERIA.iter().map(|(id, _)| self.check(*id)).collect()
    }

    pub fn check(&self, id: u8) -> Result<CriterionResult> {
        match id {
            1 => Ok(checksum()),
            2 => Ok(classification()),
            3 => Ok(eviction()),
            4 => closed_form(),
            5 => self.headline(),
            6 => self.trend(),
            7 => self.thresholds(),
            8 => self.jitter(),
            9 => self.long_flows(),
            10 => overhead(),
            11 => self.determinism(),
            other => Err(crate::Error::Parameter(format!("no acceptance criterion {other}"))),
        }
    }

    fn with_cache<T>(&self, f: impl FnOnce(&mut RunCache) -> Result<T>) -> Result<T> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut cache)
    }

    pub fn utilization_sweep(&self) -> Result<SweepTable> {
        let mut slot = self.utilization.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = &*slot {
            return Ok(t.clone());
        }
        let table = self.with_cache(|c| sweep(&self.config, SweepAxis::Utilization, &TREND_UTILIZATION, c))?;
        *slot = Some(table.clone());
        Ok(table)
    }

    fn headline(&self) -> Result<CriterionResult> {
        let (lo, hi) = HEADLINE_BAND;
        let mut speedups = Vec::new();
        for &seed in &self.config.seeds {
            let c = ExperimentConfig { seed, ..self.config.clone() };
            let (b, t) = self.with_cache(|cache| Ok((cache.get(&c, c.baseline)?, cache.get(&c, c.treatment)?)))?;
            speedups.push(Comparison::new(&b, &t).short_speedup.map_or(f64::NAN, |s| s.mean));
        }
        let in_band = speedups.iter().all(|s| (lo..=hi).contains(s));
        let strong = speedups.iter().filter(|&&s| s >= HEADLINE_STRONG).count();
        let needed = (speedups.len() * 4).div_ceil(5);
        let shown: Vec<String> = speedups.iter().map(|s| format!("{s:.3}")).collect();
        Ok(result(
            5,
            !speedups.is_empty() && in_band && strong >= needed,
            format!(
                "speedups [{}] at rho={} T={}; band [{lo}, {hi}]: {}; >= {HEADLINE_STRONG} in {strong}/{} (need {needed})",
                shown.join(", "),
                self.config.background.utilization,
                self.config.threshold,
                if in_band { "all inside" } else { "outside" },
                speedups.len()
            ),
        ))
    }

    fn trend(&self) -> Result<CriterionResult> {
        let t = self.utilization_sweep()?;
        let s = |u: f64| t.row(u).map_or(f64::NAN, |r| r.speedup_mean);
        let gain = s(0.4) - s(0.1);
        let all: Vec<String> = t.rows.iter().map(|r| format!("{}:{:.3}", r.value, r.speedup_mean)).collect();
        Ok(result(
            6,
            gain >= TREND_MIN_GAIN,
            format!("S(0.4) - S(0.1) = {gain:.3} (min {TREND_MIN_GAIN}); sweep {}", all.join(" ")),
        ))
    }

    /// Threshold sweep at the highest configured flow rate, with the short
    /// selector held at the base threshold.
    pub fn threshold_sweep(&self) -> Result<SweepTable> {
        let values: Vec<f64> = THRESHOLDS.iter().map(|&t| t as f64).collect();
        let c = self.threshold_config();
        self.with_cache(|cache| sweep(&c, SweepAxis::Threshold, &values, cache))
    }

    fn threshold_config(&self) -> ExperimentConfig {
        let top = self.config.sweep.flow_rate.iter().copied().fold(self.config.workload.flow_rate, f64::max);
        let mut c = self.config.clone();
        c.workload.flow_rate = top;
        c
    }

    fn thresholds(&self) -> Result<CriterionResult> {
        let c = self.threshold_config();
        let top = c.workload.flow_rate;
        let t = self.threshold_sweep()?;
        let s = |v: f64| t.row(v).map_or(f64::NAN, |r| r.speedup_mean);
        let low_ok = s(8.0) >= s(40.0) - THRESHOLD_SLACK;
        let below: Vec<String> =
            t.rows.iter().filter(|r| r.speedup_mean.partial_cmp(&1.0).is_none_or(|o| o.is_lt())).map(|r| format!("T={}", r.value)).collect();
        let all: Vec<String> = t.rows.iter().map(|r| format!("T={}:{:.3}", r.value, r.speedup_mean)).collect();
        Ok(result(
            7,
            low_ok && below.is_empty(),
            format!(
                "flow rate {top}/s, short < {} packets: {}; S(8) >= S(40) - {THRESHOLD_SLACK}: {low_ok}; below 1.0: [{}]",
                c.report_threshold(),
                all.join(" "),
                below.join(", ")
            ),
        ))
    }

    fn jitter(&self) -> Result<CriterionResult> {
        let t = self.utilization_sweep()?;
        let mut ok = true;
        let mut parts = Vec::new();
        for r in t.rows.iter().filter(|r| r.value >= JITTER_MIN_UTILIZATION) {
            let good = r.jitter_mean_treatment_us <= r.jitter_mean_baseline_us
                && r.jitter_std_treatment_us <= r.jitter_std_baseline_us;
            ok &= good;
            parts.push(format!(
                "rho={}: mean {:.2}/{:.2} std {:.2}/{:.2}",
                r.value,
                r.jitter_mean_treatment_us,
                r.jitter_mean_baseline_us,
                r.jitter_std_treatment_us,
                r.jitter_std_baseline_us
            ));
        }
        Ok(result(8, ok && !parts.is_empty(), format!("splitter/ECMP us: {}", parts.join("; "))))
    }

    fn long_flows(&self) -> Result<CriterionResult> {
        let t = self.utilization_sweep()?;
        let ok = t.rows.iter().all(|r| r.long_fct_ratio <= LONG_FCT_MAX_RATIO);
        let parts: Vec<String> = t.rows.iter().map(|r| format!("rho={}:{:.3}", r.value, r.long_fct_ratio)).collect();
        Ok(result(
            9,
            ok,
            format!("long-flow FCT ratio splitter/ECMP {} (max {LONG_FCT_MAX_RATIO})", parts.join(" ")),
        ))
    }

    fn determinism(&self) -> Result<CriterionResult> {
        let c = &self.config;
        let once = || -> Result<String> {
            let opts = RunOptions { trace_path: None, hash_trace: true };
            let treatment = run_policy(c, c.treatment, &opts)?.report;
            let baseline = run_policy(c, c.baseline, &opts)?.report;
            let comparison = Comparison::new(&baseline, &treatment);
            Ok(ExperimentReport { treatment, baseline, comparison }.to_json())
        };
        let (a, b) = (once()?, once()?);
        let hash = |s: &str| {
            let v: serde_json::Value = serde_json::from_str(s).expect("own json");
            v["treatment"]["trace_sha256"].as_str().unwrap_or("").chars().take(16).collect::<String>()
        };
        Ok(result(
            11,
            a == b,
            format!("seed {}: report.json {} bytes, identical: {}; trace hash {}..", c.seed, a.len(), a == b, hash(&a)),
        ))
    }
}

/// One's-complement header sum over big-endian byte pairs, written out
/// independently of the splitter's checksum module.
fn reference_checksum(bytes: &[u8]) -> u16 {
    let mut sum: u32 = bytes
        .chunks(2)
        .enumerate()
        .filter(|(i, _)| *i != 5)
        .map(|(_, p)| u32::from(p[0]) << 8 | u32::from(p[1]))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn checksum() -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = 0usize;
    for _ in 0..CHECKSUM_CASES {
        let mut h = Ipv4Header::new(
            Ipv4Addr::from(rng.random::<u32>()),
            Ipv4Addr::from(rng.random::<u32>()),
            rng.random(),
            rng.random_range(20..=1500),
            rng.random(),
        );
        h.identification = rng.random();
        h.ttl = rng.random();
        h.header_checksum = reference_checksum(&h.to_bytes());
        let out = set_tos(h, rng.random());
        if out.header_checksum != reference_checksum(&out.to_bytes()) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    result(
        1,
        mismatches == 0 && elapsed < CHECKSUM_BUDGET,
        format!("{mismatches} mismatches in {CHECKSUM_CASES} rewrites, {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

fn tcp(sport: u16) -> (Ipv4Header, u16) {
    (Ipv4Header::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), PROTO_TCP, 1500, 0), sport)
}

fn classification() -> CriterionResult {
    let classes = |threshold: u64, n: usize| -> Vec<FlowClass> {
        let mut t = FlowTable::new(SplitterConfig::with_threshold(threshold));
        let (h, sp) = tcp(1000);
        (0..n).map(|i| t.process_packet(h, sp, 80, Duration::from_micros(i as u64)).expect("valid").0).collect()
    };
    let c40 = classes(40, 100);
    let short = c40.iter().take_while(|c| **c == FlowClass::Short).count();
    let long = c40[short..].iter().filter(|c| **c == FlowClass::Long).count();
    let fidelity = short == 39 && long == 61;
    let all_long = classes(1, 100).iter().all(|c| *c == FlowClass::Long);
    let mut t = FlowTable::new(SplitterConfig::default());
    let udp = Ipv4Header::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), PROTO_UDP, 1500, 0x2e);
    let passthrough = (0..100).all(|_| t.process_packet(udp, 1, 2, Duration::ZERO).map(|r| r.1) == Ok(udp));
    let untouched = passthrough && t.is_empty();
    result(
        2,
        fidelity && all_long && untouched,
        format!(
            "T=40: {short} short then {long} long; T=1 all long: {all_long}; UDP bypasses the table: {untouched}"
        ),
    )
}

fn eviction() -> CriterionResult {
    let idle = |gap: Duration| -> (usize, FlowClass) {
        let mut t = FlowTable::new(SplitterConfig::default());
        let (h, sp) = tcp(2000);
        for _ in 0..40 {
            t.process_packet(h, sp, 80, Duration::ZERO).expect("valid");
        }
        let evicted = t.evict_idle(gap);
        (evicted, t.process_packet(h, sp, 80, gap).expect("valid").0)
    };
    let timeout = SplitterConfig::default().idle_timeout;
    let over = idle(timeout + Duration::from_micros(1));
    let exact = idle(timeout);
    result(
        3,
        over == (1, FlowClass::Short) && exact == (0, FlowClass::Long),
        format!(
            "idle {:?}+1us: evicted {}, next {:?}; idle exactly {:?}: evicted {}, next {:?}",
            timeout, over.0, over.1, timeout, exact.0, exact.1
        ),
    )
}

fn closed_form() -> Result<CriterionResult> {
    let config = SimConfig { policy: RoutingPolicy::EcmpPerFlow, ..SimConfig::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [1u64, 5, 100] {
        let mut sim = Simulator::new(config.clone(), Vec::new());
        let tuple = TupleAllocator::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), 80, PROTO_TCP)
            .next_tuple();
        for seq in 0..n {
            sim.inject_packet(Packet::new(7, FlowKind::App, tuple, 1500, seq, Some(n), SimTime::ZERO)?, SimTime::ZERO)?;
        }
        sim.run_until(SimTime::from_secs(1))?;
        let fct = compute_fct(sim.sink(), SimTime::ZERO)?.flows.first().map(|f| f.fct);
        let want = SimTime::from_micros(n * 12 + 1000);
        ok &= fct == Some(want);
        parts.push(format!("n={n}: {} us (want {})", fct.map_or("none".into(), |f| f.to_string()), want));
    }
    Ok(result(4, ok, parts.join("; ")))
}

fn overhead() -> Result<CriterionResult> {
    let s = bench_splitter(OVERHEAD_PACKETS, OVERHEAD_FLOWS)?;
    Ok(result(
        10,
        s.mean_ns < OVERHEAD_MAX_NS,
        format!(
            "mean {:.1} ns, p99 {:.1} ns per call over {} packets / {} flows (limit {OVERHEAD_MAX_NS} ns)",
            s.mean_ns, s.p99_ns, s.n_packets, s.flows
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_checksum_matches_a_known_header() {
        // Classic worked example with checksum 0xb861.
        let bytes = [
            0x45, 0x00, 0x00, 0x73, 0x00, 0x00, 0x40, 0x00, 0x40, 0x11, 0xb8, 0x61, 0xc0, 0xa8, 0x00, 0x01,
            0xc0, 0xa8, 0x00, 0xc7,
        ];
        assert_eq!(reference_checksum(&bytes), 0xb861);
    }

    #[test]
    fn cheap_criteria_pass() {
        for r in [checksum(), classification(), eviction(), closed_form().unwrap()] {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn unknown_criterion() {
        assert!(Acceptance::new(ExperimentConfig::default()).check(12).is_err());
    }
}

//! Seed-matched experiment runs, sweeps and their on-disk artifacts.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{
    compute_fct, compute_jitter, histogram, speedup, summarize, AnomalyReport, ClassReport, FctOutcome,
    FlowCounts, FlowStats, HistogramReport, RateReport, RunReport, Selector, SizeReport, Speedup,
    Summary, TunnelReport,
};
use crate::netsim::{DeliveryRecord, DeliverySink, FlowKind, RoutingPolicy, Simulator};
use crate::plot::{emit_plots, Chart, Series};
use crate::time::SimTime;
use crate::workload::{app_tuples, background_stream, sample_flow_arrivals, sample_query, FlowSpec, Workload};

pub const TRACE_HEADER: &str =
    "flow_id,seq,tunnel,t_created,t_splitter_egress,t_dest_ingress,tos,kind,flow_packets,size_bytes";

const APP_STREAM: u64 = 1;
const BACKGROUND_STREAM: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Application flows for `config.seed`. Identical for every routing policy.
pub fn app_flows(config: &ExperimentConfig) -> Result<Vec<FlowSpec>> {
    let mut rng = rng(config.seed, APP_STREAM);
    let mut tuples = app_tuples();
    let w = &config.workload;
    sample_flow_arrivals(w.flow_rate, config.horizon(), &mut rng)?
        .into_iter()
        .enumerate()
        .map(|(i, start)| {
            sample_query(&w.mix, &mut rng, &mut tuples, i as u64, start, w.packet_bytes, w.pacing)
                .map_err(Error::from)
        })
        .collect()
}

pub fn build_workload(config: &ExperimentConfig) -> Result<Workload> {
    config.validate()?;
    let app = app_flows(config)?;
    let stream = background_stream(
        &config.background,
        config.combined_capacity_bps(),
        config.horizon(),
        rng(config.seed, BACKGROUND_STREAM),
    )?;
    Ok(Workload::new(app, &config.background, stream))
}

/// Keeps application deliveries for metrics and optionally streams the full
/// trace to CSV and/or a hash.
struct Collector {
    app: Vec<DeliveryRecord>,
    csv: Option<(PathBuf, BufWriter<File>)>,
    hasher: Option<Sha256>,
    line: String,
    io_error: Option<Error>,
}

impl Collector {
    fn new(csv_path: Option<&Path>, hash: bool) -> Result<Self> {
        let csv = match csv_path {
            Some(p) => {
                let f = File::create(p).map_err(|e| Error::io(p, e))?;
                Some((p.to_path_buf(), BufWriter::new(f)))
            }
            None => None,
        };
        let mut c = Self {
            app: Vec::new(),
            hasher: (hash || csv.is_some()).then(Sha256::new),
            csv,
            line: String::with_capacity(128),
            io_error: None,
        };
        c.line.push_str(TRACE_HEADER);
        c.line.push('\n');
        c.emit();
        Ok(c)
    }

    fn emit(&mut self) {
        if let Some(h) = &mut self.hasher {
            h.update(self.line.as_bytes());
        }
        if let Some((path, w)) = &mut self.csv {
            if self.io_error.is_none() {
                if let Err(e) = w.write_all(self.line.as_bytes()) {
                    self.io_error = Some(Error::io(path.as_path(), e));
                }
            }
        }
    }

    fn finish(mut self) -> Result<(Vec<DeliveryRecord>, Option<String>)> {
        if let Some((path, w)) = &mut self.csv {
            if let Err(e) = w.flush() {
                self.io_error.get_or_insert(Error::io(path.as_path(), e));
            }
        }
        if let Some(e) = self.io_error {
            return Err(e);
        }
        let hash = self.hasher.map(|h| {
            h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
        });
        Ok((self.app, hash))
    }
}

fn us(t: SimTime) -> String {
    format!("{}.{:03}", t.as_nanos() / 1000, t.as_nanos() % 1000)
}

impl DeliverySink for Collector {
    fn deliver(&mut self, r: &DeliveryRecord) {
        if r.kind == FlowKind::App {
            self.app.push(*r);
        }
        if self.hasher.is_none() {
            return;
        }
        self.line.clear();
        let _ = writeln!(
            self.line,
            "{},{},{},{},{},{},{},{},{},{}",
            r.flow_id,
            r.seq,
            r.tunnel,
            us(r.t_created),
            us(r.t_splitter_egress),
            us(r.t_dest_ingress),
            r.tos,
            r.kind.as_str(),
            r.flow_packets,
            r.size_bytes
        );
        self.emit();
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write every delivered packet to this CSV file.
    pub trace_path: Option<PathBuf>,
    /// Hash the trace even when it is not written.
    pub hash_trace: bool,
}

/// A report plus the per-flow statistics it was computed from.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub flows: FctOutcome,
}

/// Simulates one policy over the whole horizon.
pub fn run_policy(config: &ExperimentConfig, policy: RoutingPolicy, opts: &RunOptions) -> Result<RunOutcome> {
    let mut workload = build_workload(config)?;
    let horizon = config.horizon();
    let collector = Collector::new(opts.trace_path.as_deref(), opts.hash_trace)?;
    let mut sim = Simulator::new(config.sim_config(policy), collector);
    let (mut app_pkts, mut bg_pkts) = (0u64, 0u64);
    while let Some(t) = workload.peek_time() {
        if t > horizon {
            break;
        }
        let (at, packet) = workload.next().expect("peeked");
        match packet.kind {
            FlowKind::App => app_pkts += 1,
            FlowKind::Background => bg_pkts += 1,
        }
        sim.run_until(at)?;
        sim.inject_packet(packet, at)?;
    }
    sim.run_until(horizon)?;

    let counters = *sim.counters();
    let unknown_marks = sim.router().unknown_marks();
    let horizon_s = config.horizon_s;
    let tunnels = sim
        .tunnels()
        .iter()
        .enumerate()
        .map(|(index, t)| TunnelReport {
            index,
            pkts_sent: t.pkts_sent(),
            bytes_sent: t.bytes_sent(),
            max_queue_depth: t.max_depth(),
            utilization: t.bytes_sent() as f64 * 8.0 / (t.capacity_bps() as f64 * horizon_s),
        })
        .collect();
    let (records, trace_sha256) = sim.into_sink().finish()?;
    let flows = compute_fct(&records, config.warmup())?;
    drop(records);

    let threshold = config.report_threshold();
    let long_mark = config.splitter.long_mark;
    let class = |pick: &dyn Fn(&FlowStats) -> bool| {
        let selected: Vec<&FlowStats> = flows.flows.iter().filter(|f| pick(f)).collect();
        let fct: Vec<f64> = selected.iter().map(|f| f.fct_us()).collect();
        let jitter: Vec<f64> = selected.iter().flat_map(|f| compute_jitter(f).values).collect();
        (ClassReport { flows: selected.len(), fct_us: summarize(&fct), jitter_us: summarize(&jitter) }, fct, jitter)
    };
    let (short, short_fct, short_jitter) = class(&|f| f.n_packets < threshold);
    let (long, _, _) = class(&|f| f.n_packets >= threshold);
    let sizes: BTreeSet<u64> = config.workload.mix.categories.iter().map(|c| c.n_packets).collect();
    let by_size = sizes
        .into_iter()
        .map(|n| {
            let fct: Vec<f64> = flows.flows.iter().filter(|f| f.n_packets == n).map(FlowStats::fct_us).collect();
            SizeReport { n_packets: n, flows: fct.len(), fct_us: summarize(&fct) }
        })
        .collect();
    let bin = config.output.histogram_bin_us;
    let report = RunReport {
        policy,
        seed: config.seed,
        report_threshold: threshold,
        short,
        long,
        by_size,
        tunnels,
        anomalies: AnomalyReport {
            splitter_errors: counters.splitter_errors,
            unknown_marks,
            evicted_flows: counters.evicted_flows,
            mark_regressions: flows.flows.iter().map(|f| f.mark_regressions(long_mark)).sum(),
        },
        flows: FlowCounts {
            completed: flows.flows.len(),
            incomplete: flows.incomplete,
            warmup_excluded: flows.warmup_excluded,
        },
        offered: RateReport {
            app_pps: app_pkts as f64 / horizon_s,
            background_pps: bg_pkts as f64 / horizon_s,
            total_pps: (app_pkts + bg_pkts) as f64 / horizon_s,
        },
        histograms: HistogramReport {
            short_fct_us: histogram(&short_fct, bin).ok(),
            short_jitter_us: histogram(&short_jitter, bin).ok(),
        },
        trace_sha256,
        config: config.clone(),
    };
    Ok(RunOutcome { report, flows })
}

pub fn run_single(config: &ExperimentConfig, policy: RoutingPolicy) -> Result<RunReport> {
    Ok(run_policy(config, policy, &RunOptions::default())?.report)
}

/// Memoizes reports by (config, policy) so repeated checks share runs.
#[derive(Debug, Default)]
pub struct RunCache {
    runs: HashMap<String, RunReport>,
}

impl RunCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn get(&mut self, config: &ExperimentConfig, policy: RoutingPolicy) -> Result<RunReport> {
        let key = format!("{}|{}", policy.name(), serde_json::to_string(config).expect("configs serialize"));
        if let Some(r) = self.runs.get(&key) {
            return Ok(r.clone());
        }
        let report = run_single(config, policy)?;
        self.runs.insert(key, report.clone());
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub baseline: f64,
    pub treatment: f64,
}

/// Treatment against seed-matched baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub short_speedup: Option<Speedup>,
    pub long_speedup: Option<Speedup>,
    pub short_jitter_mean_us: Option<Spread>,
    pub short_jitter_std_us: Option<Spread>,
}

impl Comparison {
    pub fn new(baseline: &RunReport, treatment: &RunReport) -> Self {
        let jitter = |f: fn(&Summary) -> f64| {
            Some(Spread {
                baseline: f(baseline.short.jitter_us.as_ref()?),
                treatment: f(treatment.short.jitter_us.as_ref()?),
            })
        };
        Self {
            short_speedup: speedup(baseline, treatment, Selector::Short).ok(),
            long_speedup: speedup(baseline, treatment, Selector::Long).ok(),
            short_jitter_mean_us: jitter(|s| s.mean),
            short_jitter_std_us: jitter(|s| s.std),
        }
    }

    /// Treatment long-flow mean FCT over baseline.
    pub fn long_fct_ratio(&self) -> Option<f64> {
        self.long_speedup.map(|s| 1.0 / s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub treatment: RunReport,
    pub baseline: RunReport,
    pub comparison: Comparison,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = self.treatment.to_text();
        out.push('\n');
        out.push_str(&self.baseline.to_text());
        out.push('\n');
        let c = &self.comparison;
        if let Some(s) = c.short_speedup {
            let _ = writeln!(out, "short-flow speedup: mean {:.3}, p99 {:.3}", s.mean, s.p99);
        }
        if let Some(r) = c.long_fct_ratio() {
            let _ = writeln!(out, "long-flow FCT ratio (treatment/baseline): {r:.3}");
        }
        if let (Some(m), Some(s)) = (c.short_jitter_mean_us, c.short_jitter_std_us) {
            let _ = writeln!(
                out,
                "short-flow jitter us: mean {:.2} vs {:.2}, std {:.2} vs {:.2} (treatment vs baseline)",
                m.treatment, m.baseline, s.treatment, s.baseline
            );
        }
        out
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs treatment and baseline for `config.seed` and writes `report.json`,
/// `report.txt`, histogram CSVs, SVGs and (if enabled) traces to `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let run = |policy: RoutingPolicy| {
        let opts = RunOptions {
            trace_path: config.output.trace.then(|| out_dir.join(format!("trace-{}.csv", policy.name()))),
            hash_trace: config.output.trace,
        };
        run_policy(config, policy, &opts).map(|o| o.report)
    };
    let treatment = run(config.treatment)?;
    let baseline = run(config.baseline)?;
    let comparison = Comparison::new(&baseline, &treatment);
    let report = ExperimentReport { treatment, baseline, comparison };
    write(&out_dir.join("report.json"), &report.to_json())?;
    write(&out_dir.join("report.txt"), &report.to_text())?;

    let mut charts = Vec::new();
    type Pick = fn(&RunReport) -> Option<&crate::metrics::Histogram>;
    let kinds: [(&str, &str, Pick); 2] = [
        ("short-fct", "short-flow FCT (us)", |r| r.histograms.short_fct_us.as_ref()),
        ("short-jitter", "short-flow jitter (us)", |r| r.histograms.short_jitter_us.as_ref()),
    ];
    for (name, label, pick) in kinds {
        let mut hists = Vec::new();
        for r in [&report.treatment, &report.baseline] {
            if let Some(h) = pick(r) {
                write(&out_dir.join(format!("hist-{name}-{}.csv", r.policy.name())), &h.to_csv())?;
                hists.push((r.policy.name(), h));
            }
        }
        if !hists.is_empty() {
            charts.push(Chart::from_histograms(&format!("pdf-{name}"), &format!("PDF of {label}"), label, &hists));
        }
    }
    if !charts.is_empty() {
        emit_plots(&charts, out_dir)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Threshold,
    Utilization,
    /// Application flow arrival rate; rows also carry the resulting pps.
    FlowRate,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Threshold => "threshold",
            SweepAxis::Utilization => "utilization",
            SweepAxis::FlowRate => "flow-rate",
        }
    }

    pub fn configured_values(self, config: &ExperimentConfig) -> Vec<f64> {
        match self {
            SweepAxis::Threshold => config.sweep.threshold.iter().map(|&t| t as f64).collect(),
            SweepAxis::Utilization => config.sweep.utilization.clone(),
            SweepAxis::FlowRate => config.sweep.flow_rate.clone(),
        }
    }

    /// `base` with this axis set to `value`. Threshold sweeps keep the report
    /// selector at the base threshold so every row measures the same flows.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        match self {
            SweepAxis::Threshold => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Parameter(format!("threshold must be a positive integer, got {value}")));
                }
                c.report_threshold = Some(base.report_threshold());
                c.threshold = value as u64;
            }
            SweepAxis::Utilization => c.background.utilization = value,
            SweepAxis::FlowRate => c.workload.flow_rate = value,
        }
        c.validate()?;
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(SweepAxis::Threshold),
            "utilization" => Ok(SweepAxis::Utilization),
            "flow-rate" | "pps" => Ok(SweepAxis::FlowRate),
            other => Err(Error::Parameter(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub speedup_mean: f64,
    pub speedup_p99: f64,
    pub long_fct_ratio: f64,
    pub jitter_mean_baseline_us: f64,
    pub jitter_mean_treatment_us: f64,
    pub jitter_std_baseline_us: f64,
    pub jitter_std_treatment_us: f64,
    pub app_pps: f64,
    pub total_pps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},speedup_mean,speedup_p99,long_fct_ratio,jitter_mean_baseline_us,jitter_mean_treatment_us,jitter_std_baseline_us,jitter_std_treatment_us,app_pps,total_pps\n",
            self.axis.name().replace('-', "_")
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3},{:.3}",
                r.value,
                r.speedup_mean,
                r.speedup_p99,
                r.long_fct_ratio,
                r.jitter_mean_baseline_us,
                r.jitter_mean_treatment_us,
                r.jitter_std_baseline_us,
                r.jitter_std_treatment_us,
                r.app_pps,
                r.total_pps
            );
        }
        s
    }

    pub fn row(&self, value: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value)
    }

    pub fn chart(&self) -> Chart {
        let pts = |f: fn(&SweepRow) -> f64| self.rows.iter().map(|r| (r.value, f(r))).collect();
        Chart {
            name: "sweep".to_string(),
            title: format!("short-flow FCT speedup vs {}", self.axis.name()),
            x_label: self.axis.name().to_string(),
            y_label: "speedup".to_string(),
            series: vec![
                Series { name: "mean".into(), points: pts(|r| r.speedup_mean) },
                Series { name: "p99".into(), points: pts(|r| r.speedup_p99) },
            ],
            reference_y: Some(1.0),
        }
    }
}

fn sweep_row(value: f64, baseline: &RunReport, treatment: &RunReport) -> Result<SweepRow> {
    let s = speedup(baseline, treatment, Selector::Short)?;
    let long = speedup(baseline, treatment, Selector::Long).map(|l| 1.0 / l.mean).unwrap_or(f64::NAN);
    let j = |r: &RunReport, f: fn(&Summary) -> f64| r.short.jitter_us.as_ref().map_or(f64::NAN, f);
    Ok(SweepRow {
        value,
        speedup_mean: s.mean,
        speedup_p99: s.p99,
        long_fct_ratio: long,
        jitter_mean_baseline_us: j(baseline, |s| s.mean),
        jitter_mean_treatment_us: j(treatment, |s| s.mean),
        jitter_std_baseline_us: j(baseline, |s| s.std),
        jitter_std_treatment_us: j(treatment, |s| s.std),
        app_pps: treatment.offered.app_pps,
        total_pps: treatment.offered.total_pps,
    })
}

/// One seed-matched treatment/baseline pair per axis value, in the order
/// given.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64], cache: &mut RunCache) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Parameter(format!("no values for the {} sweep", axis.name())));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let c = axis.apply(config, v)?;
        // The baseline never consults the splitter, so a threshold sweep shares it.
        let baseline_config = if axis == SweepAxis::Threshold { axis.apply(config, config.threshold as f64)? } else { c.clone() };
        let baseline = cache.get(&baseline_config, config.baseline)?;
        let treatment = cache.get(&c, config.treatment)?;
        rows.push(sweep_row(v, &baseline, &treatment)?);
    }
    Ok(SweepTable { axis, seed: config.seed, rows })
}

/// Writes `sweep.csv` and `sweep.svg`.
pub fn write_sweep(table: &SweepTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = out_dir.join("sweep.csv");
    write(&csv, &table.to_csv())?;
    let mut paths = vec![csv];
    paths.extend(emit_plots(&[table.chart()], out_dir)?);
    Ok(paths)
}

/// CSV of the application flows a config generates.
pub fn dump_workload(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let mut s = String::from("flow_id,src,src_port,dst,dst_port,protocol,n_packets,packet_size_bytes,start_time_us,kind\n");
    for f in app_flows(config)? {
        let t = f.tuple;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            f.flow_id,
            t.src_addr,
            t.src_port,
            t.dst_addr,
            t.dst_port,
            t.protocol,
            f.n_packets.unwrap_or(0),
            f.packet_size_bytes,
            us(f.start_time),
            f.kind.as_str()
        );
    }
    Ok(s)
}

use flowsplit::experiment::{
    run_experiment, run_single, sweep, write_sweep, Comparison, RunCache, SweepAxis, TRACE_HEADER,
};
use flowsplit::metrics::{speedup, Selector};
use flowsplit::netsim::RoutingPolicy;
use flowsplit::workload::{Pacing, QueryCategory, QueryMix};
use flowsplit::{Error, ExperimentConfig};
use proptest::prelude::*;

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig { horizon_s: 3.0, warmup_s: 0.5, ..ExperimentConfig::default() };
    c.background.utilization = 0.2;
    c
}

#[test]
fn no_contention_gives_no_speedup() {
    let mut c = ExperimentConfig { horizon_s: 20.0, warmup_s: 1.0, ..ExperimentConfig::default() };
    c.background.utilization = 0.0;
    c.workload.flow_rate = 200.0;
    c.workload.mix = QueryMix {
        categories: vec![QueryCategory {
            n_packets: 5,
            weight: 1.0,
            pacing: Some(Pacing::Smooth { rate_bps: 1_000_000_000 }),
        }],
    };
    let t = run_single(&c, RoutingPolicy::SplitterTos).unwrap();
    let b = run_single(&c, RoutingPolicy::EcmpPerPacket).unwrap();
    let s = speedup(&b, &t, Selector::Short).unwrap();
    assert!((s.mean - 1.0).abs() <= 0.05, "{s:?}");
    assert!(t.short.flows > 3000);
}

#[test]
fn self_comparison_is_identity() {
    let r = run_single(&small(), RoutingPolicy::SplitterTos).unwrap();
    let c = Comparison::new(&r, &r);
    assert_eq!(c.short_speedup.unwrap().mean, 1.0);
    assert_eq!(c.short_speedup.unwrap().p99, 1.0);
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let mut c = small();
    c.output.trace = true;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&c, a.path()).unwrap();
    let rb = run_experiment(&c, b.path()).unwrap();
    assert_eq!(ra, rb);
    assert!(ra.treatment.trace_sha256.is_some());
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
    let names: Vec<String> = names.iter().map(|n| n.to_string_lossy().into_owned()).collect();
    for want in ["report.json", "report.txt", "trace-splitter-tos.csv", "trace-ecmp-per-packet.csv", "pdf-short-fct.svg"] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
}

#[test]
fn trace_csv_layout() {
    let mut c = small();
    c.horizon_s = 1.0;
    c.warmup_s = 0.1;
    c.output.trace = true;
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&c, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("trace-splitter-tos.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), TRACE_HEADER.split(',').count());
    assert!(first[3].contains('.'), "times are printed in microseconds: {first:?}");
    let tunnel_pkts: u64 = r.treatment.tunnels.iter().map(|t| t.pkts_sent).sum();
    assert!(text.lines().count() as u64 - 1 <= tunnel_pkts);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = run_experiment(&small(), &blocker.join("out")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn single_point_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let t = sweep(&small(), SweepAxis::Utilization, &[0.3], &mut RunCache::new()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].value, 0.3);
    let paths = write_sweep(&t, dir.path()).unwrap();
    assert_eq!(paths.len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap().contains("stroke-dasharray"));
}

#[test]
fn empty_sweep_is_rejected() {
    assert!(sweep(&small(), SweepAxis::Threshold, &[], &mut RunCache::new()).is_err());
}

#[test]
fn threshold_sweep_pins_the_selector_and_shares_the_baseline() {
    let mut cache = RunCache::new();
    let t = sweep(&small(), SweepAxis::Threshold, &[8.0, 40.0], &mut cache).unwrap();
    assert_eq!(cache.len(), 3);
    assert_eq!(t.rows.len(), 2);
    let c = SweepAxis::Threshold.apply(&small(), 8.0).unwrap();
    assert_eq!((c.threshold, c.report_threshold()), (8, 40));
    assert!(SweepAxis::Threshold.apply(&small(), 0.0).is_err());
    assert!(SweepAxis::Threshold.apply(&small(), 2.5).is_err());
}

#[test]
fn cache_returns_the_same_report() {
    let mut cache = RunCache::new();
    let a = cache.get(&small(), RoutingPolicy::SplitterTos).unwrap();
    let b = cache.get(&small(), RoutingPolicy::SplitterTos).unwrap();
    assert_eq!(a, b);
    assert_eq!(cache.len(), 1);
}

#[test]
fn summaries_exclude_warmup_flows() {
    let r = run_single(&small(), RoutingPolicy::SplitterTos).unwrap();
    assert!(r.flows.warmup_excluded > 0);
    assert_eq!(r.short.flows + r.long.flows, r.flows.completed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        threshold in 1u64..1000,
        rho in 0.0f64..=1.0,
        horizon in 1.0f64..500.0,
        burst in 1u64..5000,
        gap in 0u64..1_000_000,
        rate in 1.0f64..1e4,
        trace in any::<bool>(),
        report in prop::option::of(1u64..100),
    ) {
        let mut c = ExperimentConfig {
            seed,
            threshold,
            report_threshold: report,
            horizon_s: horizon,
            warmup_s: horizon / 10.0,
            ..ExperimentConfig::default()
        };
        c.background.utilization = rho;
        c.workload.pacing = Pacing::Burst { burst_size: burst, gap_us: gap };
        c.workload.flow_rate = rate;
        c.output.trace = trace;
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string(), "generated").unwrap();
        prop_assert_eq!(back, c);
    }
}

//! Wall-clock cost of the splitter's per-packet path.

use std::hint::black_box;
use std::net::Ipv4Addr;
use std::time::{Duration, Instant};

use flowsplit_splitter::{FlowTable, Ipv4Header, SplitterConfig, PROTO_TCP};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calls timed together; one `Instant` read per batch keeps clock overhead
/// out of sub-microsecond figures.
pub const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub n_packets: u64,
    pub flows: u64,
    /// Per-call cost, ns.
    pub mean_ns: f64,
    /// 99th percentile of per-batch mean cost, ns.
    pub p99_ns: f64,
}

/// Times `n_packets` `process_packet` calls spread over `flow_cardinality`
/// distinct TCP flows, visited in a shuffled order. Every flow is inserted
/// before timing starts, so the figures describe a table at steady state.
pub fn bench_splitter(n_packets: u64, flow_cardinality: u64) -> Result<BenchStats> {
    if flow_cardinality == 0 {
        return Err(Error::Parameter("flow_cardinality must be at least 1".into()));
    }
    if n_packets == 0 {
        return Err(Error::Parameter("n_packets must be at least 1".into()));
    }
    let flows: Vec<(Ipv4Header, u16, u16)> = (0..flow_cardinality)
        .map(|i| {
            let src = Ipv4Addr::from(0x0a00_0000 + (i / 60_000) as u32);
            let h = Ipv4Header::new(src, Ipv4Addr::new(10, 128, 0, 1), PROTO_TCP, 1500, 0);
            (h, 1024 + (i % 60_000) as u16, 443)
        })
        .collect();
    let mut order: Vec<u32> = (0..n_packets).map(|i| (i % flow_cardinality) as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    // Laid out in visiting order so only the table lookup touches cold memory.
    let packets: Vec<(Ipv4Header, u16, u16)> = order.iter().map(|&i| flows[i as usize]).collect();
    drop(order);

    let mut table = FlowTable::new(SplitterConfig::default());
    let mut now = Duration::ZERO;
    for &(h, sp, dp) in &flows {
        table.process_packet(h, sp, dp, now).expect("valid header");
    }
    drop(flows);
    let mut batch_ns = Vec::with_capacity(packets.len() / BATCH + 1);
    let start = Instant::now();
    for chunk in packets.chunks(BATCH) {
        let t0 = Instant::now();
        for &(h, sp, dp) in chunk {
            now += Duration::from_nanos(1);
            black_box(table.process_packet(black_box(h), sp, dp, now).expect("valid header"));
        }
        batch_ns.push(t0.elapsed().as_nanos() as f64 / chunk.len() as f64);
    }
    let total = start.elapsed();
    batch_ns.sort_by(f64::total_cmp);
    let p99 = batch_ns[((batch_ns.len() as f64 * 0.99).ceil() as usize).clamp(1, batch_ns.len()) - 1];
    Ok(BenchStats {
        n_packets,
        flows: flow_cardinality,
        mean_ns: total.as_nanos() as f64 / n_packets as f64,
        p99_ns: p99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flows_is_a_parameter_error() {
        assert!(matches!(bench_splitter(10, 0), Err(Error::Parameter(_))));
        assert!(matches!(bench_splitter(0, 10), Err(Error::Parameter(_))));
    }

    #[test]
    fn small_run_reports_sane_numbers() {
        let s = bench_splitter(10_000, 100).unwrap();
        assert_eq!((s.n_packets, s.flows), (10_000, 100));
        assert!(s.mean_ns > 0.0 && s.p99_ns >= 0.0);
    }
}

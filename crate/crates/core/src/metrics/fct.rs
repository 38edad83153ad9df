use std::collections::BTreeMap;

use crate::error::MetricsError;
use crate::netsim::{DeliveryRecord, FlowId, FlowKind, TUNNELS};
use crate::time::SimTime;

/// Completion statistics of one fully delivered flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub n_packets: u64,
    /// Splitter egress of the first packet; the FCT clock starts here.
    pub first_departure: SimTime,
    /// Last arrival at the destination border router minus `first_departure`.
    pub fct: SimTime,
    /// Per-packet one-way delay (destination ingress minus splitter egress),
    /// indexed by sequence number.
    pub packet_delays: Vec<SimTime>,
    /// ToS byte each packet carried, indexed by sequence number.
    pub marks: Vec<u8>,
}

impl FlowStats {
    pub fn fct_us(&self) -> f64 {
        self.fct.as_micros_f64()
    }

    pub fn final_mark(&self) -> u8 {
        *self.marks.last().expect("flows have at least one packet")
    }

    /// Times the flow went from `long_mark` back to another mark, which only
    /// happens when its table entry was evicted mid-flow.
    pub fn mark_regressions(&self, long_mark: u8) -> u64 {
        self.marks
            .windows(2)
            .filter(|w| w[0] == long_mark && w[1] != long_mark)
            .count() as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FctOutcome {
    /// Completed flows that started at or after the warmup cutoff, by flow id.
    pub flows: Vec<FlowStats>,
    /// Still had packets in flight (or never sent) at the end of the trace.
    pub incomplete: usize,
    /// Completed, but first departure fell inside the warmup window.
    pub warmup_excluded: usize,
}

struct Partial {
    kind: FlowKind,
    n_packets: u64,
    received: u64,
    first_departure: SimTime,
    last_arrival: SimTime,
    delays: Vec<SimTime>,
    marks: Vec<u8>,
    last_seq: [Option<u64>; TUNNELS],
}

/// Groups a delivery trace into per-flow completion statistics.
///
/// Open-ended background streams (`flow_packets == 0`) are skipped. The trace
/// must be in delivery order; a flow whose packets left one tunnel out of
/// sequence is reported as a FIFO violation.
pub fn compute_fct(trace: &[DeliveryRecord], warmup: SimTime) -> Result<FctOutcome, MetricsError> {
    let mut partial: BTreeMap<FlowId, Partial> = BTreeMap::new();
    for r in trace {
        if r.flow_packets == 0 {
            continue;
        }
        let p = partial.entry(r.flow_id).or_insert_with(|| Partial {
            kind: r.kind,
            n_packets: r.flow_packets,
            received: 0,
            first_departure: SimTime::MAX,
            last_arrival: SimTime::ZERO,
            delays: vec![SimTime::ZERO; r.flow_packets as usize],
            marks: vec![0; r.flow_packets as usize],
            last_seq: [None; TUNNELS],
        });
        let tunnel = usize::from(r.tunnel);
        if let Some(prev) = p.last_seq[tunnel] {
            if r.seq <= prev {
                return Err(MetricsError::FifoViolation {
                    flow_id: r.flow_id,
                    tunnel: r.tunnel,
                    prev,
                    seq: r.seq,
                });
            }
        }
        p.last_seq[tunnel] = Some(r.seq);
        p.received += 1;
        p.first_departure = p.first_departure.min(r.t_splitter_egress);
        p.last_arrival = p.last_arrival.max(r.t_dest_ingress);
        if let Some(slot) = p.delays.get_mut(r.seq as usize) {
            *slot = r.one_way_delay();
            p.marks[r.seq as usize] = r.tos;
        }
    }

    let mut out = FctOutcome::default();
    for (flow_id, p) in partial {
        if p.received < p.n_packets {
            out.incomplete += 1;
        } else if p.first_departure < warmup {
            out.warmup_excluded += 1;
        } else {
            out.flows.push(FlowStats {
                flow_id,
                kind: p.kind,
                n_packets: p.n_packets,
                first_departure: p.first_departure,
                fct: p.last_arrival.saturating_sub(p.first_departure),
                packet_delays: p.delays,
                marks: p.marks,
            });
        }
    }
    Ok(out)
}

/// Absolute delay differences between consecutive packets of one flow, µs.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterSample {
    pub flow_id: FlowId,
    pub values: Vec<f64>,
}

pub fn compute_jitter(stats: &FlowStats) -> JitterSample {
    JitterSample {
        flow_id: stats.flow_id,
        values: stats
            .packet_delays
            .windows(2)
            .map(|w| w[1].abs_diff(w[0]).as_micros_f64())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(flow_id: u64, seq: u64, n: u64, tunnel: u8, dep_us: u64, arr_us: u64) -> DeliveryRecord {
        DeliveryRecord {
            flow_id,
            kind: FlowKind::App,
            seq,
            flow_packets: n,
            tunnel,
            tunnel_seq: 0,
            size_bytes: 1500,
            t_created: SimTime::from_micros(dep_us),
            t_splitter_egress: SimTime::from_micros(dep_us),
            t_dest_ingress: SimTime::from_micros(arr_us),
            tos: 0,
        }
    }

    fn stats_with_delays(delays_us: &[u64]) -> FlowStats {
        FlowStats {
            flow_id: 1,
            kind: FlowKind::App,
            n_packets: delays_us.len() as u64,
            first_departure: SimTime::ZERO,
            fct: SimTime::ZERO,
            packet_delays: delays_us.iter().map(|&d| SimTime::from_micros(d)).collect(),
            marks: vec![0; delays_us.len()],
        }
    }

    #[test]
    fn single_packet_flow() {
        let out = compute_fct(&[rec(1, 0, 1, 0, 6_000_000, 6_001_012)], SimTime::from_secs(5)).unwrap();
        assert_eq!(out.flows.len(), 1);
        assert_eq!(out.flows[0].fct_us(), 1012.0);
    }

    #[test]
    fn warmup_and_incomplete_flows_are_counted_not_reported() {
        let trace = [
            rec(1, 0, 1, 0, 4_999_999, 5_001_011),
            rec(2, 0, 2, 0, 6_000_000, 6_001_012),
            rec(3, 0, 1, 1, 5_000_000, 5_001_012),
        ];
        let out = compute_fct(&trace, SimTime::from_secs(5)).unwrap();
        assert_eq!(out.flows.iter().map(|f| f.flow_id).collect::<Vec<_>>(), vec![3]);
        assert_eq!(out.warmup_excluded, 1);
        assert_eq!(out.incomplete, 1);
    }

    #[test]
    fn warmup_filter_is_idempotent() {
        let trace: Vec<_> = (0..20).map(|i| rec(i, 0, 1, 0, i * 1_000_000, i * 1_000_000 + 1012)).collect();
        let warmup = SimTime::from_secs(5);
        let once = compute_fct(&trace, warmup).unwrap();
        let kept: Vec<_> = trace
            .iter()
            .filter(|r| once.flows.iter().any(|f| f.flow_id == r.flow_id))
            .copied()
            .collect();
        let twice = compute_fct(&kept, warmup).unwrap();
        assert_eq!(once.flows, twice.flows);
    }

    #[test]
    fn fifo_violation_detected() {
        let trace = [rec(1, 1, 3, 0, 0, 1012), rec(1, 0, 3, 0, 0, 1024)];
        assert!(matches!(
            compute_fct(&trace, SimTime::ZERO),
            Err(MetricsError::FifoViolation { flow_id: 1, tunnel: 0, prev: 1, seq: 0 })
        ));
        // Different tunnels may legitimately reorder.
        let ok = [rec(1, 1, 2, 1, 0, 1012), rec(1, 0, 2, 0, 0, 1024)];
        assert_eq!(compute_fct(&ok, SimTime::ZERO).unwrap().flows[0].fct_us(), 1024.0);
    }

    #[test]
    fn background_records_are_ignored() {
        let trace = [rec(7, 0, 0, 0, 0, 1012)];
        let out = compute_fct(&trace, SimTime::ZERO).unwrap();
        assert!(out.flows.is_empty());
        assert_eq!(out.incomplete, 0);
    }

    #[test]
    fn jitter_definition() {
        assert_eq!(compute_jitter(&stats_with_delays(&[1000, 1012, 1000])).values, vec![12.0, 12.0]);
        assert_eq!(compute_jitter(&stats_with_delays(&[1012; 6])).values, vec![0.0; 5]);
        assert!(compute_jitter(&stats_with_delays(&[1012])).values.is_empty());
    }

    #[test]
    fn regressions_count_long_to_short() {
        let mut s = stats_with_delays(&[0; 6]);
        s.marks = vec![0, 8, 8, 0, 8, 0];
        assert_eq!(s.mark_regressions(8), 2);
        assert_eq!(s.final_mark(), 0);
    }
}

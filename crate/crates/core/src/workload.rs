//! Traffic generation: Poisson-arriving application queries drawn from a
//! size catalogue, plus Poisson background messages spread over a few
//! long-lived streams.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::net::Ipv4Addr;

use flowsplit_splitter::{FiveTuple, PROTO_TCP};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::WorkloadError;
use crate::netsim::{serialization_time, FlowId, FlowKind, Packet, TupleAllocator, DEFAULT_MTU, MIN_PACKET_BYTES};
use crate::time::SimTime;

pub const BACKGROUND_FLOW_ID_BASE: FlowId = 1 << 40;

/// How the packets of one flow are handed to the border router.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Pacing {
    /// `burst_size` packets injected at the same instant, consecutive bursts
    /// starting `gap_us` apart. A gap of 0 dumps the whole flow at once.
    Burst { burst_size: u64, gap_us: u64 },
    /// Evenly spaced packets at a fixed bit rate.
    Smooth { rate_bps: u64 },
}

impl Pacing {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        match *self {
            Pacing::Burst { burst_size: 0, .. } => {
                Err(WorkloadError::Pacing("burst_size must be at least 1".into()))
            }
            Pacing::Smooth { rate_bps: 0 } => {
                Err(WorkloadError::Pacing("rate_bps must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// The same pattern stretched `factor` times in time.
    pub fn slowed(self, factor: u64) -> Self {
        match self {
            Pacing::Burst { burst_size, gap_us } => Pacing::Burst { burst_size, gap_us: gap_us * factor },
            Pacing::Smooth { rate_bps } => Pacing::Smooth { rate_bps: (rate_bps / factor).max(1) },
        }
    }

    /// Injection offset of packet `seq` relative to the flow start.
    pub fn offset(&self, seq: u64, packet_bytes: u32) -> SimTime {
        match *self {
            Pacing::Burst { burst_size, gap_us } => {
                SimTime::from_micros((seq / burst_size) * gap_us)
            }
            Pacing::Smooth { rate_bps } => {
                SimTime::from_nanos(seq * serialization_time(packet_bytes, rate_bps).as_nanos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryCategory {
    pub n_packets: u64,
    pub weight: f64,
    /// Overrides the workload-wide pacing for flows of this size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pacing: Option<Pacing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryMix {
    pub categories: Vec<QueryCategory>,
}

impl Default for QueryMix {
    /// Folder listing, RPC, video and large upload.
    fn default() -> Self {
        let line_rate = Some(Pacing::Smooth { rate_bps: 1_000_000_000 });
        let c = |n_packets, weight, pacing| QueryCategory { n_packets, weight, pacing };
        Self {
            categories: vec![
                c(5, 0.989, line_rate),
                c(40, 0.01, line_rate),
                c(60_000, 0.00075, None),
                c(120_000, 0.00025, None),
            ],
        }
    }
}

impl QueryMix {
    pub fn single(n_packets: u64) -> Self {
        Self { categories: vec![QueryCategory { n_packets, weight: 1.0, pacing: None }] }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.categories.is_empty() {
            return Err(WorkloadError::EmptyMix);
        }
        for c in &self.categories {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(WorkloadError::BadWeight { n_packets: c.n_packets, weight: c.weight });
            }
            if c.n_packets == 0 {
                return Err(WorkloadError::ZeroPackets);
            }
            if let Some(p) = &c.pacing {
                p.validate()?;
            }
        }
        Ok(())
    }

    /// Weights scaled to sum to one.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.categories.iter().map(|c| c.weight).sum();
        self.categories.iter().map(|c| c.weight / total).collect()
    }

    pub fn mean_packets(&self) -> f64 {
        self.probabilities()
            .iter()
            .zip(&self.categories)
            .map(|(p, c)| p * c.n_packets as f64)
            .sum()
    }

    fn sampler(&self) -> Result<WeightedIndex<f64>, WorkloadError> {
        self.validate()?;
        WeightedIndex::new(self.categories.iter().map(|c| c.weight))
            .map_err(|_| WorkloadError::EmptyMix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    pub tuple: FiveTuple,
    /// `None` for open-ended background streams.
    pub n_packets: Option<u64>,
    pub packet_size_bytes: u32,
    pub pacing: Pacing,
    pub start_time: SimTime,
    pub kind: FlowKind,
}

/// Poisson arrival instants in `[0, horizon)`, ascending.
pub fn sample_flow_arrivals(
    rate_per_s: f64,
    horizon: SimTime,
    rng: &mut impl Rng,
) -> Result<Vec<SimTime>, WorkloadError> {
    let exp = Exp::new(rate_per_s)
        .ok()
        .filter(|_| rate_per_s.is_finite() && rate_per_s > 0.0)
        .ok_or(WorkloadError::NonPositiveRate(rate_per_s))?;
    let horizon_s = horizon.as_secs_f64();
    let mut out = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += exp.sample(rng);
        if t >= horizon_s {
            break;
        }
        out.push(SimTime::from_secs_f64(t));
    }
    Ok(out)
}

/// Draws one query: a size from the mix and a fresh 5-tuple.
pub fn sample_query(
    mix: &QueryMix,
    rng: &mut impl Rng,
    tuples: &mut TupleAllocator,
    flow_id: FlowId,
    start_time: SimTime,
    packet_size_bytes: u32,
    pacing: Pacing,
) -> Result<FlowSpec, WorkloadError> {
    let category = &mix.categories[mix.sampler()?.sample(rng)];
    Ok(FlowSpec {
        flow_id,
        tuple: tuples.next_tuple(),
        n_packets: Some(category.n_packets),
        packet_size_bytes,
        pacing: category.pacing.unwrap_or(pacing),
        start_time,
        kind: FlowKind::App,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundMode {
    /// Background enters at the source border router and is split like any
    /// other TCP traffic.
    ViaSplitter,
    /// Background is attached straight to the tunnels, stream `i` to tunnel
    /// `i % 2`, never seen by the splitter or router.
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundLoad {
    /// Fraction of the combined tunnel capacity.
    pub utilization: f64,
    pub message_bytes: u32,
    /// Header bytes added to each message on the wire.
    pub header_bytes: u32,
    pub streams: usize,
    pub mode: BackgroundMode,
}

impl Default for BackgroundLoad {
    fn default() -> Self {
        Self {
            utilization: 0.4,
            message_bytes: 1472,
            header_bytes: 28,
            streams: 4,
            mode: BackgroundMode::ViaSplitter,
        }
    }
}

impl BackgroundLoad {
    pub fn wire_bytes(&self) -> u32 {
        self.message_bytes + self.header_bytes
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(0.0..=1.0).contains(&self.utilization) {
            return Err(WorkloadError::Utilization(self.utilization));
        }
        if self.streams == 0 {
            return Err(WorkloadError::NoStreams);
        }
        let wire = self.wire_bytes();
        if !(MIN_PACKET_BYTES..=DEFAULT_MTU).contains(&wire) {
            return Err(WorkloadError::Pacing(format!(
                "background message of {wire} B on the wire does not fit in [{MIN_PACKET_BYTES}, {DEFAULT_MTU}]"
            )));
        }
        Ok(())
    }

    /// Mean message rate for `combined_capacity_bps` of tunnel capacity.
    pub fn packet_rate(&self, combined_capacity_bps: u64) -> f64 {
        self.utilization * combined_capacity_bps as f64 / (f64::from(self.wire_bytes()) * 8.0)
    }

    pub fn flows(&self) -> Vec<FlowSpec> {
        let mut tuples = background_tuples();
        (0..self.streams)
            .map(|i| FlowSpec {
                flow_id: BACKGROUND_FLOW_ID_BASE + i as u64,
                tuple: tuples.next_tuple(),
                n_packets: None,
                packet_size_bytes: self.wire_bytes(),
                pacing: Pacing::Smooth { rate_bps: 1 },
                start_time: SimTime::ZERO,
                kind: FlowKind::Background,
            })
            .collect()
    }
}

fn background_tuples() -> TupleAllocator {
    TupleAllocator::new(Ipv4Addr::new(10, 200, 0, 1), Ipv4Addr::new(10, 201, 0, 1), 5001, PROTO_TCP)
}

pub(crate) fn app_tuples() -> TupleAllocator {
    TupleAllocator::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 128, 0, 1), 443, PROTO_TCP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackgroundArrival {
    pub at: SimTime,
    pub stream: usize,
}

/// Lazy Poisson message stream; messages are dealt to streams round-robin.
#[derive(Debug, Clone)]
pub struct BackgroundStream {
    exp: Option<Exp<f64>>,
    rng: ChaCha8Rng,
    t_ns: f64,
    horizon: SimTime,
    streams: usize,
    emitted: u64,
}

impl Iterator for BackgroundStream {
    type Item = BackgroundArrival;

    fn next(&mut self) -> Option<BackgroundArrival> {
        let exp = self.exp.as_ref()?;
        self.t_ns += exp.sample(&mut self.rng);
        let at = SimTime::from_nanos(self.t_ns.round() as u64);
        if at >= self.horizon {
            self.exp = None;
            return None;
        }
        let stream = (self.emitted % self.streams as u64) as usize;
        self.emitted += 1;
        Some(BackgroundArrival { at, stream })
    }
}

pub fn background_stream(
    load: &BackgroundLoad,
    combined_capacity_bps: u64,
    horizon: SimTime,
    rng: ChaCha8Rng,
) -> Result<BackgroundStream, WorkloadError> {
    load.validate()?;
    let per_ns = load.packet_rate(combined_capacity_bps) / 1e9;
    let exp = if per_ns > 0.0 {
        Some(Exp::new(per_ns).map_err(|_| WorkloadError::NonPositiveRate(per_ns))?)
    } else {
        None
    };
    Ok(BackgroundStream { exp, rng, t_ns: 0.0, horizon, streams: load.streams, emitted: 0 })
}

/// Everything that enters the source border router during one run, merged in
/// time order. Application packets win ties against background messages.
pub struct Workload {
    app: Vec<FlowSpec>,
    background: Vec<FlowSpec>,
    bypass: bool,
    pending: BinaryHeap<Reverse<(SimTime, usize)>>,
    next_seq: Vec<u64>,
    stream: BackgroundStream,
    next_bg: Option<BackgroundArrival>,
    bg_seq: Vec<u64>,
}

impl Workload {
    pub fn new(app: Vec<FlowSpec>, load: &BackgroundLoad, mut stream: BackgroundStream) -> Self {
        let pending = app
            .iter()
            .enumerate()
            .map(|(i, f)| Reverse((f.start_time, i)))
            .collect();
        let background = load.flows();
        Self {
            next_seq: vec![0; app.len()],
            bg_seq: vec![0; background.len()],
            app,
            background,
            bypass: load.mode == BackgroundMode::Bypass,
            pending,
            next_bg: stream.next(),
            stream,
        }
    }

    pub fn app_flows(&self) -> &[FlowSpec] {
        &self.app
    }

    pub fn background_flows(&self) -> &[FlowSpec] {
        &self.background
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        let app = self.pending.peek().map(|Reverse((t, _))| *t);
        let bg = self.next_bg.map(|a| a.at);
        match (app, bg) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn next_app(&mut self) -> Option<(SimTime, Packet)> {
        let Reverse((at, idx)) = self.pending.pop()?;
        let flow = &self.app[idx];
        let n = flow.n_packets.expect("application flows are finite");
        let seq = self.next_seq[idx];
        self.next_seq[idx] += 1;
        if seq + 1 < n {
            let next_at = flow.start_time + flow.pacing.offset(seq + 1, flow.packet_size_bytes);
            self.pending.push(Reverse((next_at, idx)));
        }
        let packet = Packet::new(flow.flow_id, FlowKind::App, flow.tuple, flow.packet_size_bytes, seq, Some(n), at)
            .expect("packet size validated with the config");
        Some((at, packet))
    }

    fn next_background(&mut self) -> Option<(SimTime, Packet)> {
        let arrival = self.next_bg.take()?;
        self.next_bg = self.stream.next();
        let flow = &self.background[arrival.stream];
        let seq = self.bg_seq[arrival.stream];
        self.bg_seq[arrival.stream] += 1;
        let mut packet = Packet::new(
            flow.flow_id,
            FlowKind::Background,
            flow.tuple,
            flow.packet_size_bytes,
            seq,
            None,
            arrival.at,
        )
        .expect("packet size validated with the config");
        if self.bypass {
            packet.bypass_tunnel = Some((arrival.stream % 2) as u8);
        }
        Some((arrival.at, packet))
    }
}

impl Iterator for Workload {
    type Item = (SimTime, Packet);

    fn next(&mut self) -> Option<(SimTime, Packet)> {
        let app = self.pending.peek().map(|Reverse((t, _))| *t);
        let bg = self.next_bg.map(|a| a.at);
        match (app, bg) {
            (Some(a), Some(b)) if b < a => self.next_background(),
            (Some(_), _) => self.next_app(),
            (None, Some(_)) => self.next_background(),
            (None, None) => None,
        }
    }
}

//! Discrete-event model of the two-tunnel topology: a source border router
//! (optionally running the splitter), a router choosing a tunnel per packet,
//! two identical FIFO tunnels, and the destination border router where
//! packets are recorded on arrival.

mod event;
mod packet;
mod routing;
mod tunnel;

use flowsplit_splitter::{FlowTable, SplitterConfig};

pub use event::EventQueue;
pub use packet::{
    DeliveryRecord, FlowId, FlowKind, Packet, TupleAllocator, DEFAULT_MTU, MIN_PACKET_BYTES,
};
pub use routing::{ecmp_hash, Router, RoutingPolicy};
pub use tunnel::{serialization_time, TunnelConfig, TunnelState};

use crate::error::SimError;
use crate::time::SimTime;

pub const TUNNELS: usize = 2;

/// Receives every packet as it arrives at the destination border router.
pub trait DeliverySink {
    fn deliver(&mut self, record: &DeliveryRecord);
}

impl DeliverySink for Vec<DeliveryRecord> {
    fn deliver(&mut self, record: &DeliveryRecord) {
        self.push(*record);
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl DeliverySink for NullSink {
    fn deliver(&mut self, _: &DeliveryRecord) {}
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub tunnel: TunnelConfig,
    pub policy: RoutingPolicy,
    pub splitter: SplitterConfig,
    /// Period of the idle-flow scan; `None` disables it.
    pub eviction_interval: Option<SimTime>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tunnel: TunnelConfig::default(),
            policy: RoutingPolicy::SplitterTos,
            splitter: SplitterConfig::default(),
            eviction_interval: Some(SimTime::from_secs(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub injected: u64,
    pub delivered: u64,
    /// Headers the splitter refused; forwarded unmodified on tunnel 0.
    pub splitter_errors: u64,
    pub evicted_flows: u64,
    pub routed: [u64; TUNNELS],
}

enum Event {
    Arrival(usize),
    Delivery(usize),
    EvictionTick,
}

/// Single-threaded simulation instance; owns all of its state.
pub struct Simulator<S> {
    queue: EventQueue<Event>,
    tunnels: [TunnelState; TUNNELS],
    router: Router,
    table: Option<FlowTable>,
    eviction_interval: Option<SimTime>,
    slots: Vec<Option<(Packet, u8, u64)>>,
    free: Vec<usize>,
    counters: SimCounters,
    sink: S,
}

impl<S: DeliverySink> Simulator<S> {
    pub fn new(config: SimConfig, sink: S) -> Self {
        let table = config.policy.uses_splitter().then(|| FlowTable::new(config.splitter));
        let mut queue = EventQueue::new();
        let eviction_interval = config.eviction_interval.filter(|_| table.is_some());
        if let Some(every) = eviction_interval {
            queue
                .schedule(every, Event::EvictionTick)
                .expect("first tick is in the future");
        }
        Self {
            queue,
            tunnels: [TunnelState::new(config.tunnel), TunnelState::new(config.tunnel)],
            router: Router::new(config.policy, config.splitter.short_mark, config.splitter.long_mark),
            table,
            eviction_interval,
            slots: Vec::new(),
            free: Vec::new(),
            counters: SimCounters::default(),
            sink,
        }
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn counters(&self) -> &SimCounters {
        &self.counters
    }

    pub fn tunnels(&self) -> &[TunnelState; TUNNELS] {
        &self.tunnels
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    /// The splitter's flow table, present only under `SplitterTos`.
    pub fn table(&self) -> Option<&FlowTable> {
        self.table.as_ref()
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }

    /// Injected but not yet delivered.
    pub fn in_flight(&self) -> u64 {
        self.counters.injected - self.counters.delivered
    }

    /// Schedules `packet` to arrive at the source border router at `at`.
    pub fn inject_packet(&mut self, packet: Packet, at: SimTime) -> Result<(), SimError> {
        if at < self.queue.now() {
            return Err(SimError::PastEvent { at, now: self.queue.now() });
        }
        let slot = self.store(packet);
        self.queue.schedule(at, Event::Arrival(slot))?;
        self.counters.injected += 1;
        Ok(())
    }

    /// Processes every event due at or before `t_end`, then parks the clock
    /// at `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<(), SimError> {
        if t_end < self.queue.now() {
            return Err(SimError::PastEvent { at: t_end, now: self.queue.now() });
        }
        while let Some((now, event)) = self.queue.pop_until(t_end) {
            match event {
                Event::Arrival(slot) => self.on_arrival(slot, now)?,
                Event::Delivery(slot) => self.on_delivery(slot),
                Event::EvictionTick => self.on_eviction_tick(now)?,
            }
        }
        self.queue.advance_to(t_end);
        Ok(())
    }

    fn store(&mut self, packet: Packet) -> usize {
        match self.free.pop() {
            Some(slot) => {
                self.slots[slot] = Some((packet, 0, 0));
                slot
            }
            None => {
                self.slots.push(Some((packet, 0, 0)));
                self.slots.len() - 1
            }
        }
    }

    fn on_arrival(&mut self, slot: usize, now: SimTime) -> Result<(), SimError> {
        let (packet, tunnel_out, tunnel_seq) =
            self.slots[slot].as_mut().expect("arrival for a live slot");
        let tunnel = match packet.bypass_tunnel {
            Some(t) => usize::from(t),
            None => {
                let mut rejected = false;
                if let Some(table) = self.table.as_mut() {
                    match table.process_packet(
                        packet.header,
                        packet.tuple.src_port,
                        packet.tuple.dst_port,
                        now.as_duration(),
                    ) {
                        Ok((_, header)) => packet.header = header,
                        Err(_) => {
                            self.counters.splitter_errors += 1;
                            rejected = true;
                        }
                    }
                }
                if rejected {
                    0
                } else {
                    self.router.route(packet)
                }
            }
        };
        packet.t_splitter_egress = Some(now);
        *tunnel_out = tunnel as u8;
        *tunnel_seq = self.tunnels[tunnel].enqueued();
        let delivery = self.tunnels[tunnel].enqueue(packet, now);
        self.counters.routed[tunnel] += 1;
        self.queue.schedule(delivery, Event::Delivery(slot))
    }

    fn on_delivery(&mut self, slot: usize) {
        let (p, tunnel, tunnel_seq) = self.slots[slot].take().expect("delivery for a live slot");
        self.free.push(slot);
        let record = DeliveryRecord {
            flow_id: p.flow_id,
            kind: p.kind,
            seq: p.seq_in_flow,
            flow_packets: p.flow_packets.unwrap_or(0),
            tunnel,
            tunnel_seq,
            size_bytes: p.size_bytes,
            t_created: p.t_created,
            t_splitter_egress: p.t_splitter_egress.expect("stamped on arrival"),
            t_dest_ingress: p.t_dest_ingress.expect("stamped on enqueue"),
            tos: p.header.tos,
        };
        self.counters.delivered += 1;
        self.sink.deliver(&record);
    }

    fn on_eviction_tick(&mut self, now: SimTime) -> Result<(), SimError> {
        if let Some(table) = self.table.as_mut() {
            self.counters.evicted_flows += table.evict_idle(now.as_duration()) as u64;
        }
        if let Some(every) = self.eviction_interval {
            self.queue.schedule(now + every, Event::EvictionTick)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use flowsplit_splitter::{PROTO_TCP, PROTO_UDP};

    use super::*;

    fn alloc() -> TupleAllocator {
        TupleAllocator::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 1, 0, 1), 443, PROTO_TCP)
    }

    fn flow(id: u64, n: u64, at: SimTime) -> Vec<Packet> {
        let tuple = alloc().next_tuple();
        let tuple = flowsplit_splitter::FiveTuple { src_port: 1024 + id as u16, ..tuple };
        (0..n)
            .map(|seq| Packet::new(id, FlowKind::App, tuple, 1500, seq, Some(n), at).unwrap())
            .collect()
    }

    fn sim(policy: RoutingPolicy) -> Simulator<Vec<DeliveryRecord>> {
        Simulator::new(SimConfig { policy, ..SimConfig::default() }, Vec::new())
    }

    #[test]
    fn single_flow_closed_form() {
        let splitter_high_t = SimConfig {
            splitter: SplitterConfig::with_threshold(1_000),
            ..SimConfig::default()
        };
        let per_flow = SimConfig { policy: RoutingPolicy::EcmpPerFlow, ..SimConfig::default() };
        for config in [splitter_high_t, per_flow] {
            for n in [1u64, 5, 100] {
                let mut s = Simulator::new(config.clone(), Vec::new());
                let t0 = SimTime::from_micros(10);
                for p in flow(1, n, t0) {
                    s.inject_packet(p, t0).unwrap();
                }
                s.run_until(SimTime::from_secs(1)).unwrap();
                let last = s.sink().iter().map(|r| r.t_dest_ingress).max().unwrap();
                assert_eq!(last, t0 + SimTime::from_micros(n * 12 + 1000), "n={n}");
            }
        }
    }

    #[test]
    fn same_timestamp_injections_keep_order() {
        let mut s = sim(RoutingPolicy::SplitterTos);
        let t0 = SimTime::ZERO;
        for p in flow(1, 1, t0).into_iter().chain(flow(2, 1, t0)) {
            s.inject_packet(p, t0).unwrap();
        }
        s.run_until(SimTime::from_secs(1)).unwrap();
        let order: Vec<_> = s.sink().iter().map(|r| r.flow_id).collect();
        assert_eq!(order, vec![1, 2]);
    }

    #[test]
    fn inject_at_current_time_is_processed_this_step() {
        let mut s = sim(RoutingPolicy::EcmpPerPacket);
        s.run_until(SimTime::from_micros(50)).unwrap();
        let now = s.now();
        s.inject_packet(flow(1, 1, now).pop().unwrap(), now).unwrap();
        s.run_until(now).unwrap();
        assert_eq!(s.tunnels()[0].pkts_sent(), 1);
        assert_eq!(s.in_flight(), 1);
    }

    #[test]
    fn past_injection_is_rejected() {
        let mut s = sim(RoutingPolicy::EcmpPerPacket);
        s.run_until(SimTime::from_micros(100)).unwrap();
        let p = flow(1, 1, SimTime::ZERO).pop().unwrap();
        assert!(matches!(s.inject_packet(p, SimTime::from_micros(99)), Err(SimError::PastEvent { .. })));
        assert!(s.run_until(SimTime::from_micros(99)).is_err());
    }

    #[test]
    fn run_until_without_events_only_moves_clock() {
        let mut s = sim(RoutingPolicy::EcmpPerPacket);
        s.run_until(SimTime::from_secs(3)).unwrap();
        assert_eq!(s.now(), SimTime::from_secs(3));
        s.run_until(SimTime::from_secs(3)).unwrap();
        assert_eq!(s.counters().delivered, 0);
    }

    #[test]
    fn splitter_moves_long_tail_to_tunnel_one() {
        let mut s = sim(RoutingPolicy::SplitterTos);
        for p in flow(1, 100, SimTime::ZERO) {
            s.inject_packet(p, SimTime::ZERO).unwrap();
        }
        s.run_until(SimTime::from_secs(1)).unwrap();
        assert_eq!(s.counters().routed, [39, 61]);
        for r in s.sink() {
            assert_eq!(r.tunnel == 1, r.seq >= 39);
            assert_eq!(r.tos == 0x08, r.tunnel == 1);
        }
    }

    #[test]
    fn udp_rides_short_tunnel() {
        let mut s = sim(RoutingPolicy::SplitterTos);
        let tuple = flowsplit_splitter::FiveTuple { protocol: PROTO_UDP, ..alloc().next_tuple() };
        for seq in 0..100 {
            let p = Packet::new(9, FlowKind::Background, tuple, 1500, seq, None, SimTime::ZERO).unwrap();
            s.inject_packet(p, SimTime::ZERO).unwrap();
        }
        s.run_until(SimTime::from_secs(1)).unwrap();
        assert_eq!(s.counters().routed, [100, 0]);
        assert!(s.table().unwrap().is_empty());
    }

    #[test]
    fn malformed_header_forwarded_on_short_tunnel() {
        let mut s = sim(RoutingPolicy::SplitterTos);
        let mut p = flow(1, 1, SimTime::ZERO).pop().unwrap();
        p.header.header_checksum ^= 0xff;
        p.header.tos = 0x08;
        s.inject_packet(p, SimTime::ZERO).unwrap();
        s.run_until(SimTime::from_secs(1)).unwrap();
        assert_eq!(s.counters().splitter_errors, 1);
        assert_eq!(s.counters().routed, [1, 0]);
        assert_eq!(s.sink()[0].tos, 0x08);
    }

    #[test]
    fn idle_flows_are_evicted_on_the_timer() {
        let mut s = sim(RoutingPolicy::SplitterTos);
        s.inject_packet(flow(1, 1, SimTime::ZERO).pop().unwrap(), SimTime::ZERO).unwrap();
        s.run_until(SimTime::from_secs(30)).unwrap();
        assert_eq!(s.table().unwrap().len(), 1);
        s.run_until(SimTime::from_secs(31)).unwrap();
        assert_eq!(s.table().unwrap().len(), 0);
        assert_eq!(s.counters().evicted_flows, 1);
    }

    #[test]
    fn bypass_skips_splitter() {
        let mut s = sim(RoutingPolicy::SplitterTos);
        let mut p = flow(1, 1, SimTime::ZERO).pop().unwrap();
        p.bypass_tunnel = Some(1);
        s.inject_packet(p, SimTime::ZERO).unwrap();
        s.run_until(SimTime::from_secs(1)).unwrap();
        assert_eq!(s.counters().routed, [0, 1]);
        assert!(s.table().unwrap().is_empty());
    }
}

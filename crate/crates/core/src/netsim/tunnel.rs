use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::netsim::Packet;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunnelConfig {
    pub capacity_bps: u64,
    pub prop_delay_us: u64,
}

impl Default for TunnelConfig {
    fn default() -> Self {
        Self { capacity_bps: 1_000_000_000, prop_delay_us: 1_000 }
    }
}

/// Time to clock `size_bytes` onto a link of `capacity_bps`, rounded up to
/// the nanosecond.
pub fn serialization_time(size_bytes: u32, capacity_bps: u64) -> SimTime {
    let bits = u128::from(size_bytes) * 8 * 1_000_000_000;
    let cap = u128::from(capacity_bps);
    SimTime::from_nanos(bits.div_ceil(cap) as u64)
}

/// A store-and-forward FIFO link with an unbounded queue.
#[derive(Debug, Clone)]
pub struct TunnelState {
    capacity_bps: u64,
    prop_delay: SimTime,
    busy_until: SimTime,
    /// Serialization finish times of packets still in the queue or on the wire
    /// interface, oldest first.
    backlog: VecDeque<SimTime>,
    max_depth: usize,
    enqueued: u64,
    bytes_sent: u64,
    pkts_sent: u64,
}

impl TunnelState {
    pub fn new(config: TunnelConfig) -> Self {
        assert!(config.capacity_bps > 0, "tunnel capacity must be positive");
        Self {
            capacity_bps: config.capacity_bps,
            prop_delay: SimTime::from_micros(config.prop_delay_us),
            busy_until: SimTime::ZERO,
            backlog: VecDeque::new(),
            max_depth: 0,
            enqueued: 0,
            bytes_sent: 0,
            pkts_sent: 0,
        }
    }

    pub fn capacity_bps(&self) -> u64 {
        self.capacity_bps
    }

    pub fn prop_delay(&self) -> SimTime {
        self.prop_delay
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn pkts_sent(&self) -> u64 {
        self.pkts_sent
    }

    /// Packets enqueued whose serialization has not finished by `now`.
    pub fn depth_at(&self, now: SimTime) -> usize {
        self.backlog.iter().filter(|&&t| t > now).count()
    }

    pub fn serialization(&self, size_bytes: u32) -> SimTime {
        serialization_time(size_bytes, self.capacity_bps)
    }

    /// Queues `packet` behind whatever is already waiting and returns the
    /// instant it reaches the far end. Stamps `t_dest_ingress`.
    pub fn enqueue(&mut self, packet: &mut Packet, now: SimTime) -> SimTime {
        let start = now.max(self.busy_until);
        let done = start + self.serialization(packet.size_bytes);
        self.busy_until = done;
        let delivery = done + self.prop_delay;

        while self.backlog.front().is_some_and(|&t| t <= now) {
            self.backlog.pop_front();
        }
        self.backlog.push_back(done);
        self.max_depth = self.max_depth.max(self.backlog.len());

        self.enqueued += 1;
        self.bytes_sent += u64::from(packet.size_bytes);
        self.pkts_sent += 1;
        packet.t_dest_ingress = Some(delivery);
        delivery
    }

    /// Number of packets enqueued so far; also the next packet's FIFO position.
    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use flowsplit_splitter::PROTO_TCP;

    use super::*;
    use crate::netsim::{FlowKind, TupleAllocator};

    fn packet(size: u32) -> Packet {
        let mut alloc =
            TupleAllocator::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 1, 0, 1), 443, PROTO_TCP);
        Packet::new(1, FlowKind::App, alloc.next_tuple(), size, 0, Some(1), SimTime::ZERO).unwrap()
    }

    #[test]
    fn serialization_of_full_frame_is_twelve_micros() {
        assert_eq!(serialization_time(1500, 1_000_000_000), SimTime::from_micros(12));
        assert_eq!(serialization_time(1500, 100_000_000), SimTime::from_micros(120));
        assert_eq!(serialization_time(1, 3), SimTime::from_nanos(2_666_666_667));
    }

    #[test]
    fn idle_tunnel_no_propagation() {
        let mut t = TunnelState::new(TunnelConfig { capacity_bps: 1_000_000_000, prop_delay_us: 0 });
        let now = SimTime::from_micros(100);
        let mut p = packet(1500);
        assert_eq!(t.enqueue(&mut p, now), SimTime::from_micros(112));
        assert_eq!(p.t_dest_ingress, Some(SimTime::from_micros(112)));
    }

    #[test]
    fn back_to_back_burst() {
        let mut t = TunnelState::new(TunnelConfig::default());
        let t0 = SimTime::from_micros(500);
        let deliveries: Vec<_> = (0..5).map(|_| t.enqueue(&mut packet(1500), t0)).collect();
        assert_eq!(*deliveries.last().unwrap(), t0 + SimTime::from_micros(1060));
        assert!(deliveries.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(t.max_depth(), 5);
        assert_eq!(t.depth_at(t0), 5);
        assert_eq!(t.depth_at(t0 + SimTime::from_micros(24)), 3);
    }

    #[test]
    fn link_idles_then_restarts() {
        let mut t = TunnelState::new(TunnelConfig { capacity_bps: 1_000_000_000, prop_delay_us: 0 });
        t.enqueue(&mut packet(1500), SimTime::ZERO);
        let d = t.enqueue(&mut packet(1500), SimTime::from_micros(100));
        assert_eq!(d, SimTime::from_micros(112));
        assert_eq!(t.max_depth(), 1);
    }
}

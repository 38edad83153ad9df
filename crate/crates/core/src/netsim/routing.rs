use serde::{Deserialize, Serialize};

use flowsplit_splitter::FiveTuple;

use crate::netsim::Packet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingPolicy {
    /// Short mark to tunnel 0, long mark to tunnel 1.
    SplitterTos,
    /// 5-tuple hash modulo 2.
    EcmpPerFlow,
    /// Strict round-robin over packets.
    EcmpPerPacket,
}

impl RoutingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            RoutingPolicy::SplitterTos => "splitter-tos",
            RoutingPolicy::EcmpPerFlow => "ecmp-per-flow",
            RoutingPolicy::EcmpPerPacket => "ecmp-per-packet",
        }
    }

    pub fn uses_splitter(self) -> bool {
        self == RoutingPolicy::SplitterTos
    }
}

impl std::str::FromStr for RoutingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "splitter-tos" => Ok(RoutingPolicy::SplitterTos),
            "ecmp-per-flow" => Ok(RoutingPolicy::EcmpPerFlow),
            "ecmp-per-packet" => Ok(RoutingPolicy::EcmpPerPacket),
            other => Err(format!(
                "unknown routing policy `{other}` (expected splitter-tos, ecmp-per-flow or ecmp-per-packet)"
            )),
        }
    }
}

/// Stable 5-tuple hash (splitmix64 finalizer over the packed fields).
pub fn ecmp_hash(tuple: &FiveTuple) -> u64 {
    let mut x = (u64::from(u32::from(tuple.src_addr)) << 32) | u64::from(u32::from(tuple.dst_addr));
    x ^= (u64::from(tuple.src_port) << 24) | (u64::from(tuple.dst_port) << 8) | u64::from(tuple.protocol);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Picks one of the two tunnels for each packet.
#[derive(Debug, Clone)]
pub struct Router {
    policy: RoutingPolicy,
    short_mark: u8,
    long_mark: u8,
    rr_next: usize,
    unknown_marks: u64,
}

impl Router {
    pub fn new(policy: RoutingPolicy, short_mark: u8, long_mark: u8) -> Self {
        Self { policy, short_mark, long_mark, rr_next: 0, unknown_marks: 0 }
    }

    pub fn policy(&self) -> RoutingPolicy {
        self.policy
    }

    /// Packets whose ToS carried neither mark under `SplitterTos`.
    pub fn unknown_marks(&self) -> u64 {
        self.unknown_marks
    }

    pub fn route(&mut self, packet: &Packet) -> usize {
        match self.policy {
            RoutingPolicy::SplitterTos => {
                let tos = packet.header.tos;
                if tos == self.long_mark {
                    1
                } else {
                    if tos != self.short_mark {
                        self.unknown_marks += 1;
                    }
                    0
                }
            }
            RoutingPolicy::EcmpPerFlow => (ecmp_hash(&packet.tuple) % 2) as usize,
            RoutingPolicy::EcmpPerPacket => {
                let t = self.rr_next;
                self.rr_next ^= 1;
                t
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::net::Ipv4Addr;

    use flowsplit_splitter::{set_tos, PROTO_TCP};

    use super::*;
    use crate::netsim::{FlowKind, TupleAllocator};
    use crate::time::SimTime;

    fn packets(n: usize) -> Vec<Packet> {
        let mut alloc =
            TupleAllocator::new(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 1, 0, 1), 443, PROTO_TCP);
        (0..n)
            .map(|i| {
                Packet::new(i as u64, FlowKind::App, alloc.next_tuple(), 1500, 0, Some(1), SimTime::ZERO)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn tos_routing() {
        let mut r = Router::new(RoutingPolicy::SplitterTos, 0x00, 0x08);
        let mut p = packets(1).pop().unwrap();
        assert_eq!(r.route(&p), 0);
        p.header = set_tos(p.header, 0x08);
        assert_eq!(r.route(&p), 1);
        p.header = set_tos(p.header, 0x2e);
        assert_eq!(r.route(&p), 0);
        assert_eq!(r.unknown_marks(), 1);
    }

    #[test]
    fn round_robin_alternates() {
        let mut r = Router::new(RoutingPolicy::EcmpPerPacket, 0, 8);
        let p = packets(1).pop().unwrap();
        let picks: Vec<_> = (0..4).map(|_| r.route(&p)).collect();
        assert_eq!(picks, vec![0, 1, 0, 1]);
    }

    #[test]
    fn per_flow_hash_pins_flows_and_spreads_them() {
        let mut r = Router::new(RoutingPolicy::EcmpPerFlow, 0, 8);
        let ps = packets(1000);
        let first = r.route(&ps[0]);
        for _ in 0..100 {
            assert_eq!(r.route(&ps[0]), first);
        }
        let ones: usize = ps.iter().map(|p| r.route(p)).sum();
        assert!((400..=600).contains(&ones), "{ones} of 1000 flows on tunnel 1");
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [RoutingPolicy::SplitterTos, RoutingPolicy::EcmpPerFlow, RoutingPolicy::EcmpPerPacket] {
            assert_eq!(p.name().parse::<RoutingPolicy>().unwrap(), p);
        }
        assert!("ecmp".parse::<RoutingPolicy>().is_err());
    }
}

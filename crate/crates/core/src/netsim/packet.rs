use std::net::Ipv4Addr;

use flowsplit_splitter::{FiveTuple, Ipv4Header};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::time::SimTime;

pub const MIN_PACKET_BYTES: u32 = 20;
pub const DEFAULT_MTU: u32 = 1500;

pub type FlowId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    App,
    Background,
}

impl FlowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::App => "app",
            FlowKind::Background => "background",
        }
    }
}

/// One simulated datagram as it moves from the source border router to the
/// destination border router.
#[derive(Debug, Clone)]
pub struct Packet {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub tuple: FiveTuple,
    pub size_bytes: u32,
    pub seq_in_flow: u64,
    /// Packets in the whole flow; `None` for open-ended background streams.
    pub flow_packets: Option<u64>,
    pub header: Ipv4Header,
    pub t_created: SimTime,
    pub t_splitter_egress: Option<SimTime>,
    pub t_dest_ingress: Option<SimTime>,
    /// Skip splitter and routing and go straight onto this tunnel.
    pub bypass_tunnel: Option<u8>,
}

impl Packet {
    pub fn new(
        flow_id: FlowId,
        kind: FlowKind,
        tuple: FiveTuple,
        size_bytes: u32,
        seq_in_flow: u64,
        flow_packets: Option<u64>,
        t_created: SimTime,
    ) -> Result<Self, SimError> {
        if !(MIN_PACKET_BYTES..=DEFAULT_MTU).contains(&size_bytes) {
            return Err(SimError::PacketSize {
                size: size_bytes,
                min: MIN_PACKET_BYTES,
                max: DEFAULT_MTU,
            });
        }
        let header = Ipv4Header::new(
            tuple.src_addr,
            tuple.dst_addr,
            tuple.protocol,
            size_bytes as u16,
            0,
        );
        Ok(Self {
            flow_id,
            kind,
            tuple,
            size_bytes,
            seq_in_flow,
            flow_packets,
            header,
            t_created,
            t_splitter_egress: None,
            t_dest_ingress: None,
            bypass_tunnel: None,
        })
    }
}

/// What the destination border router sees for one delivered packet. This is
/// the row type of the trace and the only input to the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub seq: u64,
    /// 0 for open-ended background streams.
    pub flow_packets: u64,
    pub tunnel: u8,
    /// Position in the tunnel's enqueue order.
    pub tunnel_seq: u64,
    pub size_bytes: u32,
    pub t_created: SimTime,
    pub t_splitter_egress: SimTime,
    pub t_dest_ingress: SimTime,
    pub tos: u8,
}

impl DeliveryRecord {
    pub fn one_way_delay(&self) -> SimTime {
        self.t_dest_ingress.saturating_sub(self.t_splitter_egress)
    }
}

/// Deterministic tuple numbering: consecutive source ports, rolling over into
/// the next source address.
#[derive(Debug, Clone)]
pub struct TupleAllocator {
    base_src: u32,
    dst_addr: Ipv4Addr,
    dst_port: u16,
    protocol: u8,
    next: u32,
}

const FIRST_EPHEMERAL: u32 = 1024;
const PORTS_PER_ADDR: u32 = 65536 - FIRST_EPHEMERAL;

impl TupleAllocator {
    pub fn new(base_src: Ipv4Addr, dst_addr: Ipv4Addr, dst_port: u16, protocol: u8) -> Self {
        Self { base_src: u32::from(base_src), dst_addr, dst_port, protocol, next: 0 }
    }

    pub fn next_tuple(&mut self) -> FiveTuple {
        let k = self.next;
        self.next += 1;
        let src = Ipv4Addr::from(self.base_src + k / PORTS_PER_ADDR);
        let port = (FIRST_EPHEMERAL + k % PORTS_PER_ADDR) as u16;
        FiveTuple::new(src, self.dst_addr, port, self.dst_port, self.protocol)
    }
}

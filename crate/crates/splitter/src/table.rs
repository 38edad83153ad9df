use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::time::Duration;

use crate::header::{set_tos, Ipv4Header, IPV4_HEADER_LEN, PROTO_TCP};
use crate::SplitterError;

/// Unidirectional flow key. A→B and B→A are different flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiveTuple {
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    pub fn new(
        src_addr: Ipv4Addr,
        dst_addr: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        protocol: u8,
    ) -> Self {
        Self { src_addr, dst_addr, src_port, dst_port, protocol }
    }

    pub fn from_header(header: &Ipv4Header, src_port: u16, dst_port: u16) -> Self {
        Self::new(header.src_addr, header.dst_addr, src_port, dst_port, header.protocol)
    }

    pub fn is_tcp(&self) -> bool {
        self.protocol == PROTO_TCP
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{} proto {}",
            self.src_addr, self.src_port, self.dst_addr, self.dst_port, self.protocol
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRecord {
    pub pkt_count: u64,
    pub last_seen: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowClass {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitterConfig {
    /// Packet count at which a flow becomes long (`pkt_count >= threshold`).
    pub threshold: u64,
    /// Entries idle for strictly longer than this are evicted.
    pub idle_timeout: Duration,
    pub short_mark: u8,
    pub long_mark: u8,
}

impl Default for SplitterConfig {
    fn default() -> Self {
        Self {
            threshold: 40,
            idle_timeout: Duration::from_secs(30),
            short_mark: 0x00,
            long_mark: 0x08,
        }
    }
}

impl SplitterConfig {
    pub fn with_threshold(threshold: u64) -> Self {
        Self { threshold, ..Self::default() }
    }

    pub fn mark(&self, class: FlowClass) -> u8 {
        match class {
            FlowClass::Short => self.short_mark,
            FlowClass::Long => self.long_mark,
        }
    }
}

/// Per-flow packet counters keyed by 5-tuple.
///
/// Single writer: one table per border router, not shared across threads
/// while being mutated.
#[derive(Debug, Clone, Default)]
pub struct FlowTable {
    config: SplitterConfig,
    entries: HashMap<FiveTuple, FlowRecord>,
}

impl FlowTable {
    pub fn new(config: SplitterConfig) -> Self {
        Self { config, entries: HashMap::new() }
    }

    pub fn config(&self) -> &SplitterConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, tuple: &FiveTuple) -> Option<&FlowRecord> {
        self.entries.get(tuple)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FiveTuple, &FlowRecord)> {
        self.entries.iter()
    }

    /// Counts one packet and returns its class together with the (possibly
    /// re-marked) header.
    ///
    /// Non-TCP packets come back unchanged as `Short` and never touch the
    /// table. A malformed header is rejected before any state changes.
    pub fn process_packet(
        &mut self,
        header: Ipv4Header,
        src_port: u16,
        dst_port: u16,
        now: Duration,
    ) -> Result<(FlowClass, Ipv4Header), SplitterError> {
        header.validate()?;
        if header.protocol != PROTO_TCP {
            return Ok((FlowClass::Short, header));
        }
        let tuple = FiveTuple::from_header(&header, src_port, dst_port);
        let record = self
            .entries
            .entry(tuple)
            .or_insert(FlowRecord { pkt_count: 0, last_seen: now });
        record.pkt_count += 1;
        record.last_seen = record.last_seen.max(now);
        let class = if record.pkt_count >= self.config.threshold {
            FlowClass::Long
        } else {
            FlowClass::Short
        };
        Ok((class, set_tos(header, self.config.mark(class))))
    }

    /// In-place variant over raw bytes: an IPv4 header followed by the first
    /// four bytes of the transport header (source and destination port).
    pub fn process_frame(
        &mut self,
        frame: &mut [u8],
        now: Duration,
    ) -> Result<FlowClass, SplitterError> {
        let header = Ipv4Header::parse(frame)?;
        let (src_port, dst_port) = if header.protocol == PROTO_TCP {
            let need = IPV4_HEADER_LEN + 4;
            if frame.len() < need {
                return Err(SplitterError::Truncated { len: frame.len(), need });
            }
            let p = &frame[IPV4_HEADER_LEN..need];
            (u16::from_be_bytes([p[0], p[1]]), u16::from_be_bytes([p[2], p[3]]))
        } else {
            (0, 0)
        };
        let (class, out) = self.process_packet(header, src_port, dst_port, now)?;
        frame[1] = out.tos;
        frame[10..12].copy_from_slice(&out.header_checksum.to_be_bytes());
        Ok(class)
    }

    /// Removes every entry idle for strictly longer than the timeout and
    /// returns how many were removed.
    pub fn evict_idle(&mut self, now: Duration) -> usize {
        let timeout = self.config.idle_timeout;
        let before = self.entries.len();
        self.entries
            .retain(|_, rec| now.saturating_sub(rec.last_seen) <= timeout);
        before - self.entries.len()
    }

    /// Read-only classification; unseen flows are short.
    pub fn classify_only(&self, tuple: &FiveTuple) -> FlowClass {
        match self.entries.get(tuple) {
            Some(rec) if rec.pkt_count >= self.config.threshold => FlowClass::Long,
            _ => FlowClass::Short,
        }
    }
}

//! Short/long flow splitter.
//!
//! Every TCP packet is counted against its 5-tuple. Once a flow has sent
//! `threshold` packets its packets are re-marked with the long ToS code point
//! (and the IPv4 header checksum is patched incrementally) so that a
//! ToS-aware router can steer it onto the long-flow tunnel. Everything else
//! keeps the short mark. Idle flows are forgotten after a timeout.

pub mod checksum;
mod error;
mod header;
mod table;

pub use error::SplitterError;
pub use header::{set_tos, Ipv4Header, IPV4_HEADER_LEN, PROTO_TCP, PROTO_UDP};
pub use table::{FiveTuple, FlowClass, FlowRecord, FlowTable, SplitterConfig};

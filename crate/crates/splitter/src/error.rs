use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitterError {
    #[error("frame too short: {len} bytes, need {need}")]
    Truncated { len: usize, need: usize },
    #[error("not an IPv4 header (version {0})")]
    BadVersion(u8),
    #[error("unsupported IHL {ihl} (only 20-byte headers without options)")]
    UnsupportedIhl { ihl: u8 },
    #[error("invalid header checksum {found:#06x}")]
    BadChecksum { found: u16 },
}

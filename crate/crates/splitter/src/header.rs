use std::net::Ipv4Addr;

use crate::checksum;
use crate::SplitterError;

pub const IPV4_HEADER_LEN: usize = 20;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

/// A 20-byte IPv4 header (no options), fields in host order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv4Header {
    pub version_ihl: u8,
    pub tos: u8,
    pub total_length: u16,
    pub identification: u16,
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub header_checksum: u16,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
}

impl Ipv4Header {
    /// Builds a header with DF set, TTL 64 and a valid checksum.
    pub fn new(
        src_addr: Ipv4Addr,
        dst_addr: Ipv4Addr,
        protocol: u8,
        total_length: u16,
        tos: u8,
    ) -> Self {
        let mut header = Self {
            version_ihl: 0x45,
            tos,
            total_length,
            identification: 0,
            flags_fragment: 0x4000,
            ttl: 64,
            protocol,
            header_checksum: 0,
            src_addr,
            dst_addr,
        };
        header.header_checksum = header.computed_checksum();
        header
    }

    /// Parses the first 20 bytes of `bytes`. The checksum is not validated
    /// here; see [`Ipv4Header::validate`].
    pub fn parse(bytes: &[u8]) -> Result<Self, SplitterError> {
        if bytes.len() < IPV4_HEADER_LEN {
            return Err(SplitterError::Truncated { len: bytes.len(), need: IPV4_HEADER_LEN });
        }
        let be16 = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let addr = |i: usize| Ipv4Addr::new(bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]);
        Ok(Self {
            version_ihl: bytes[0],
            tos: bytes[1],
            total_length: be16(2),
            identification: be16(4),
            flags_fragment: be16(6),
            ttl: bytes[8],
            protocol: bytes[9],
            header_checksum: be16(10),
            src_addr: addr(12),
            dst_addr: addr(16),
        })
    }

    /// Wire representation, network byte order.
    pub fn to_bytes(&self) -> [u8; IPV4_HEADER_LEN] {
        let mut out = [0u8; IPV4_HEADER_LEN];
        for (i, w) in self.words().iter().enumerate() {
            out[2 * i..2 * i + 2].copy_from_slice(&w.to_be_bytes());
        }
        out
    }

    /// The ten 16-bit header words, checksum field included.
    pub fn words(&self) -> [u16; 10] {
        let src = u32::from(self.src_addr);
        let dst = u32::from(self.dst_addr);
        [
            u16::from_be_bytes([self.version_ihl, self.tos]),
            self.total_length,
            self.identification,
            self.flags_fragment,
            u16::from_be_bytes([self.ttl, self.protocol]),
            self.header_checksum,
            (src >> 16) as u16,
            src as u16,
            (dst >> 16) as u16,
            dst as u16,
        ]
    }

    /// Full RFC 1071 checksum of this header with the checksum field zeroed.
    pub fn computed_checksum(&self) -> u16 {
        let mut words = self.words();
        words[5] = 0;
        checksum::compute(&words)
    }

    pub fn checksum_valid(&self) -> bool {
        checksum::verify(&self.words())
    }

    /// Rejects anything other than a 20-byte IPv4 header with a valid checksum.
    pub fn validate(&self) -> Result<(), SplitterError> {
        let version = self.version_ihl >> 4;
        if version != 4 {
            return Err(SplitterError::BadVersion(version));
        }
        let ihl = self.version_ihl & 0x0f;
        if ihl != 5 {
            return Err(SplitterError::UnsupportedIhl { ihl });
        }
        if !self.checksum_valid() {
            return Err(SplitterError::BadChecksum { found: self.header_checksum });
        }
        Ok(())
    }
}

/// Rewrites the ToS byte and patches the checksum incrementally. All other
/// fields are left untouched.
pub fn set_tos(header: Ipv4Header, new_tos: u8) -> Ipv4Header {
    if header.tos == new_tos {
        return header;
    }
    let old_word = u16::from_be_bytes([header.version_ihl, header.tos]);
    let new_word = u16::from_be_bytes([header.version_ihl, new_tos]);
    Ipv4Header {
        tos: new_tos,
        header_checksum: checksum::update(header.header_checksum, old_word, new_word),
        ..header
    }
}

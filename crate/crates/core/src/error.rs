use std::path::PathBuf;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} µs: simulation clock is already at {now} µs")]
    PastEvent { at: SimTime, now: SimTime },
    #[error("packet size {size} B outside [{min}, {max}]")]
    PacketSize { size: u32, min: u32, max: u32 },
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("arrival rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
    #[error("query mix is empty")]
    EmptyMix,
    #[error("query mix weight for {n_packets}-packet queries must be positive, got {weight}")]
    BadWeight { n_packets: u64, weight: f64 },
    #[error("query mix contains a 0-packet category")]
    ZeroPackets,
    #[error("background utilization must lie in [0, 1], got {0}")]
    Utilization(f64),
    #[error("invalid pacing: {0}")]
    Pacing(String),
    #[error("background load needs at least one stream")]
    NoStreams,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("flow {flow_id}: packet {seq} delivered after packet {prev} on tunnel {tunnel} (FIFO violated)")]
    FifoViolation { flow_id: u64, tunnel: u8, prev: u64, seq: u64 },
    #[error("selector `{0}` matches no flows")]
    EmptySelection(String),
    #[error("histogram needs at least one finite sample")]
    EmptySamples,
    #[error("histogram bin width must be positive, got {0}")]
    BinWidth(f64),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{location}{message}")]
    Invalid { location: String, message: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parameter(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

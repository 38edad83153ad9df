pub mod acceptance;
pub mod bench;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod netsim;
pub mod plot;
pub mod time;
pub mod workload;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use time::SimTime;

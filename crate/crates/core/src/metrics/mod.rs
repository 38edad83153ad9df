//! Flow completion times, jitter, distribution summaries and speedups.

mod fct;
mod histogram;
mod report;
mod summary;

pub use fct::{compute_fct, compute_jitter, FctOutcome, FlowStats, JitterSample};
pub use histogram::{histogram, Bin, Histogram};
pub use report::{
    speedup, AnomalyReport, ClassReport, FlowCounts, HistogramReport, RateReport, RunReport,
    Selector, SizeReport, Speedup, TunnelReport,
};
pub use summary::{summarize, Summary};

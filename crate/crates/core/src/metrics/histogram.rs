use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub start: f64,
    pub end: f64,
    pub density: f64,
}

/// Normalized histogram: Σ density × width = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub bins: Vec<Bin>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,bin_end,density\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", b.start, b.end, b.density));
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.bins.iter().map(|b| b.density * (b.end - b.start)).sum()
    }
}

/// Bins are aligned to multiples of `bin_width`; the first bin holds the
/// smallest sample. Non-finite samples are ignored.
pub fn histogram(samples: &[f64], bin_width: f64) -> Result<Histogram, MetricsError> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(MetricsError::BinWidth(bin_width));
    }
    let finite: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (min / bin_width).floor();
    let n_bins = ((max / bin_width).floor() - first) as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for v in &finite {
        let idx = ((v / bin_width).floor() - first) as usize;
        counts[idx.min(n_bins - 1)] += 1;
    }
    let total = finite.len() as f64;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let start = (first + i as f64) * bin_width;
            Bin { start, end: start + bin_width, density: c as f64 / (total * bin_width) }
        })
        .collect();
    Ok(Histogram { bin_width, bins })
}

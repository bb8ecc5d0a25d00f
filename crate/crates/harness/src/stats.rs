//! Batch statistics: per-column summaries and cross-correlations of
//! Monte Carlo outputs, plus refinement-order regressions.

use eqdiff::stats::{correlation, summarize, Summary};
use nalgebra::DMatrix;

pub use eqdiff::sde::convergence_order;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub columns: Vec<Summary>,
    /// Pairwise correlations; `NaN` where a column is constant.
    pub correlations: DMatrix<f64>,
}

/// `samples[i][c]` is output `c` of path `i`. `None` with fewer than two
/// samples.
pub fn statistics(samples: &[Vec<f64>]) -> Option<BatchSummary> {
    let width = samples.first()?.len();
    let cols: Vec<Vec<f64>> = (0..width).map(|c| samples.iter().map(|s| s[c]).collect()).collect();
    let columns = cols.iter().map(|c| summarize(c)).collect::<Option<Vec<_>>>()?;
    let correlations = DMatrix::from_fn(width, width, |a, b| correlation(&cols[a], &cols[b]).unwrap_or(f64::NAN));
    Some(BatchSummary { columns, correlations })
}

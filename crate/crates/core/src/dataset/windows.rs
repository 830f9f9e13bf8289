//! Training-sample construction: per-time-step expert query windows, the
//! ground-truth search scope around each target hour, and the gating input
//! vector.

use alloc::vec::Vec;
use core::ops::Range;

use crate::matrix::Matrix;

use super::{DatasetError, ForecastPanel, NormalizationStats};

/// One trainable time step.
///
/// `queries` stacks, per expert, the forecast trajectory over the m hours
/// ending at `index`. `search_scope` carries the observed values covering
/// every length-m window ending within `delta` hours of `index`, i.e. panel
/// rows `[index - delta - m + 1, index + delta]`. Steps whose scope would
/// leave the panel are never built.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    /// Panel row this sample targets.
    pub index: usize,
    /// K x m expert trajectories in mm/h, one row per expert.
    pub queries: Matrix,
    /// Observed rainfall covering the shifted-window search scope, mm/h.
    pub search_scope: Vec<f64>,
    /// Observed rainfall at `index`, mm/h.
    pub target: f64,
    /// Gating input: Z-scored features, optionally with raw expert values
    /// appended.
    pub features: Vec<f64>,
}

/// Assemble the gating input for panel row `t`: normalized features,
/// optionally followed by the raw expert forecasts at `t`.
pub fn gate_input(
    panel: &ForecastPanel,
    stats: &NormalizationStats,
    t: usize,
    append_experts: bool,
) -> Vec<f64> {
    let mut x = stats.normalize_row(panel.features().row(t));
    if append_experts {
        x.extend_from_slice(panel.experts().row(t));
    }
    x
}

/// Build samples for every index in `rows` whose query window and
/// ground-truth search scope both fit inside the panel. Out-of-range steps
/// are skipped, never padded; the result can be empty.
pub fn build_windows(
    panel: &ForecastPanel,
    rows: Range<usize>,
    m: usize,
    delta: usize,
    stats: &NormalizationStats,
    append_experts: bool,
) -> Result<Vec<WindowedSample>, DatasetError> {
    if m == 0 {
        return Err(DatasetError::BadWindowLength);
    }
    let n = panel.n_rows();
    let k = panel.n_experts();
    // The scope reaches back delta + m - 1 rows and forward delta rows.
    let first = delta + m - 1;
    let mut samples = Vec::new();
    for t in rows {
        if t < first || t + delta >= n {
            continue;
        }
        let mut queries = Matrix::zeros(k, m);
        for j in 0..m {
            let row = panel.experts().row(t + 1 - m + j);
            for (kk, &v) in row.iter().enumerate() {
                queries[(kk, j)] = v;
            }
        }
        let search_scope = panel.observed()[t - first..=t + delta].to_vec();
        samples.push(WindowedSample {
            index: t,
            queries,
            search_scope,
            target: panel.observed()[t],
            features: gate_input(panel, stats, t, append_experts),
        });
    }
    Ok(samples)
}

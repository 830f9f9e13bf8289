//! Verification metrics over the held-out split: hourly and accumulated
//! MAE, dynamic-time-warping cost, and threshold exceedance skill (CSI).
//!
//! The DTW here is the classic unconstrained dynamic program with
//! absolute-difference local cost and match/insert/delete steps, reported
//! as the raw accumulated cost along the optimal path — no band, no
//! normalization by path length. The convention travels with every report
//! as [`DTW_CONVENTION`].

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::dataset::{gate_input, ForecastPanel, NormalizationStats};
use crate::gating::{combine, GatingError, GatingModel};

/// Exceedance thresholds (mm) averaged by the multi-threshold skill score.
pub const CSI_THRESHOLDS_MM: [u32; 3] = [1, 3, 5];

/// Accumulation horizons (hours) for the rolling-sum error.
pub const ACC_HORIZONS_H: [u32; 3] = [12, 24, 48];

/// Identifier of the DTW variant used by [`dtw_distance`]; emitted with
/// reports so numbers are comparable across tools.
pub const DTW_CONVENTION: &str = "unconstrained-dp, abs cost, unnormalized accumulated cost";

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptyInput,
    LengthMismatch { expected: usize, got: usize },
    /// Horizon of zero hours.
    ZeroHorizon,
    /// Series shorter than the requested accumulation horizon.
    HorizonTooLong { horizon: usize, len: usize },
    EmptyTestSplit,
    /// Forward/combine failure while producing forecasts.
    Gating(GatingError),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyInput => write!(f, "metric over empty series"),
            Self::LengthMismatch { expected, got } => {
                write!(f, "series length mismatch: expected {expected}, got {got}")
            }
            Self::ZeroHorizon => write!(f, "accumulation horizon must be >= 1"),
            Self::HorizonTooLong { horizon, len } => {
                write!(f, "horizon {horizon} exceeds series length {len}")
            }
            Self::EmptyTestSplit => write!(f, "evaluation over an empty test split"),
            Self::Gating(e) => write!(f, "forecast evaluation failed: {e}"),
        }
    }
}

impl core::error::Error for MetricsError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Self::Gating(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GatingError> for MetricsError {
    fn from(e: GatingError) -> Self {
        Self::Gating(e)
    }
}

/// Mean absolute residual, mm.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64, MetricsError> {
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if predictions.len() != targets.len() {
        return Err(MetricsError::LengthMismatch {
            expected: predictions.len(),
            got: targets.len(),
        });
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / predictions.len() as f64)
}

/// Trailing rolling sums: output position i covers the `horizon` hours
/// ending at input position i + horizon - 1. Length shrinks to
/// n - horizon + 1.
pub fn accumulate(series: &[f64], horizon: usize) -> Result<Vec<f64>, MetricsError> {
    if horizon == 0 {
        return Err(MetricsError::ZeroHorizon);
    }
    if series.len() < horizon {
        return Err(MetricsError::HorizonTooLong { horizon, len: series.len() });
    }
    Ok(series.windows(horizon).map(|w| w.iter().sum()).collect())
}

/// Optimal accumulated alignment cost between two hourly series.
///
/// Unconstrained DP over |a_i - b_j| with match/insert/delete steps; see
/// [`DTW_CONVENTION`].
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    // One rolling row over b; prev[j] = cost ending at (i-1, j).
    let mut prev = alloc::vec![f64::INFINITY; b.len()];
    let mut curr = alloc::vec![0.0; b.len()];
    for (i, &av) in a.iter().enumerate() {
        for j in 0..b.len() {
            let local = (av - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else if i == 0 {
                curr[j - 1]
            } else if j == 0 {
                prev[0]
            } else {
                prev[j - 1].min(prev[j]).min(curr[j - 1])
            };
            curr[j] = local + best;
        }
        core::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[b.len() - 1])
}

/// Critical success index at exceedance threshold `r`:
/// hits / (hits + misses + false alarms), with exceedance meaning ≥ r.
/// `None` when the contingency table is empty (nothing reached r).
pub fn csi(predictions: &[f64], targets: &[f64], r: f64) -> Result<Option<f64>, MetricsError> {
    if predictions.len() != targets.len() {
        return Err(MetricsError::LengthMismatch {
            expected: predictions.len(),
            got: targets.len(),
        });
    }
    let mut hits = 0u64;
    let mut misses = 0u64;
    let mut false_alarms = 0u64;
    for (&p, &t) in predictions.iter().zip(targets) {
        match (p >= r, t >= r) {
            (true, true) => hits += 1,
            (false, true) => misses += 1,
            (true, false) => false_alarms += 1,
            (false, false) => {}
        }
    }
    let denom = hits + misses + false_alarms;
    Ok(if denom == 0 { None } else { Some(hits as f64 / denom as f64) })
}

/// Mean CSI over the standard thresholds, skipping undefined ones; `None`
/// only when every threshold is undefined.
pub fn csi_m(predictions: &[f64], targets: &[f64]) -> Result<Option<f64>, MetricsError> {
    let mut sum = 0.0;
    let mut count = 0u32;
    for &r in &CSI_THRESHOLDS_MM {
        if let Some(v) = csi(predictions, targets, r as f64)? {
            sum += v;
            count += 1;
        }
    }
    Ok(if count == 0 { None } else { Some(sum / count as f64) })
}

/// Verification summary of one trained gate over one test split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    /// Hourly mean absolute error, mm.
    pub mae_1h: f64,
    /// Accumulated-rainfall MAE per horizon (hours). Horizons longer than
    /// the test series are absent.
    pub mae_acc: BTreeMap<u32, f64>,
    /// Accumulated DTW cost between forecast and observed test series.
    pub dtw: f64,
    /// CSI per threshold (mm); `None` where no exceedance occurred.
    pub csi_per_threshold: BTreeMap<u32, Option<f64>>,
    /// Mean of the defined per-threshold CSI values.
    pub csi_m: Option<f64>,
    /// Gate weight per expert, averaged over the test hours. For a fixed
    /// blend (baselines) this carries the blend weights instead.
    pub mean_gate_weights: Vec<f64>,
    pub n_test: usize,
}

/// Run the gate over every test hour and assemble the verification report.
///
/// Inference needs features only — no window construction, so the full
/// contiguous test split participates, including hours that training
/// excluded at the boundaries.
pub fn evaluate(
    model: &GatingModel,
    panel: &ForecastPanel,
    test: Range<usize>,
    stats: &NormalizationStats,
    append_experts: bool,
) -> Result<MetricsReport, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::EmptyTestSplit);
    }
    let k = panel.n_experts();
    let n_test = test.len();
    let mut forecasts = Vec::with_capacity(n_test);
    let mut observed = Vec::with_capacity(n_test);
    let mut gate_sums = alloc::vec![0.0; k];
    for t in test {
        let x = gate_input(panel, stats, t, append_experts);
        let gate = model.forward(&x)?;
        forecasts.push(combine(&gate, panel.experts().row(t))?);
        observed.push(panel.observed()[t]);
        for (s, p) in gate_sums.iter_mut().zip(&gate) {
            *s += p;
        }
    }
    for s in &mut gate_sums {
        *s /= n_test as f64;
    }
    report_from_series(&forecasts, &observed, gate_sums)
}

/// Assemble the standard report from an already-produced forecast series.
/// This is the single scoring path — model evaluation and baseline blends
/// both end up here, so their numbers are always comparable.
///
/// `blend_weights` records whatever weighting produced the forecasts: mean
/// gate weights for a gated model, fixed weights for a baseline blend.
pub fn report_from_series(
    forecasts: &[f64],
    observed: &[f64],
    blend_weights: Vec<f64>,
) -> Result<MetricsReport, MetricsError> {
    if forecasts.is_empty() {
        return Err(MetricsError::EmptyTestSplit);
    }
    if forecasts.len() != observed.len() {
        return Err(MetricsError::LengthMismatch {
            expected: forecasts.len(),
            got: observed.len(),
        });
    }
    let n_test = forecasts.len();
    let mut mae_acc = BTreeMap::new();
    for &h in &ACC_HORIZONS_H {
        let h_us = h as usize;
        if n_test >= h_us {
            let pa = accumulate(forecasts, h_us)?;
            let oa = accumulate(observed, h_us)?;
            mae_acc.insert(h, mae(&pa, &oa)?);
        }
    }

    let mut csi_per_threshold = BTreeMap::new();
    for &r in &CSI_THRESHOLDS_MM {
        csi_per_threshold.insert(r, csi(forecasts, observed, r as f64)?);
    }

    Ok(MetricsReport {
        mae_1h: mae(forecasts, observed)?,
        mae_acc,
        dtw: dtw_distance(forecasts, observed)?,
        csi_per_threshold,
        csi_m: csi_m(forecasts, observed)?,
        mean_gate_weights: blend_weights,
        n_test,
    })
}

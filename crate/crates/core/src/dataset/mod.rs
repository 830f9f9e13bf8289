//! Aligned forecast panels, synthetic basins, splits, normalization, and
//! training-window construction.
//!
//! A [`ForecastPanel`] holds hourly expert forecasts, gating features, and
//! gauge observations on a shared strictly-hourly time axis. Timestamps are
//! epoch hours (hours since the Unix epoch); parsing calendar formats is the
//! IO layer's job.

mod synth;
mod windows;

pub use synth::{generate_synthetic, ExpertCorruption, SynthError, SyntheticSpec};
pub use windows::{build_windows, gate_input, WindowedSample};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::matrix::Matrix;

/// Columns whose population standard deviation falls below this are treated
/// as degenerate and get std 1, so constant features pass through unscaled
/// instead of exploding.
pub const STD_CLAMP_EPS: f64 = 1e-12;

/// Minimum panel length accepted by [`split`].
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    /// A data block's row count disagrees with the timestamp column.
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    /// No rows survived ingestion.
    EmptyPanel,
    /// A non-finite value escaped the ingestion drop rule.
    NonFinite { column: String, row: usize },
    /// Rainfall columns must be nonnegative.
    NegativeValue { column: String, row: usize },
    /// Consecutive timestamps are not exactly one hour apart.
    TimeGap { row: usize, prev_hour: i64, next_hour: i64 },
    /// Fewer rows than an operation's minimum.
    TooFewRows { n: usize, min: usize },
    /// Split fraction outside (0, 1).
    BadSplitFraction { fraction: f64 },
    /// Window length must be at least one hour.
    BadWindowLength,
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LengthMismatch { what, expected, got } => {
                write!(f, "{what}: expected {expected} rows, got {got}")
            }
            Self::EmptyPanel => write!(f, "panel has no rows after ingestion"),
            Self::NonFinite { column, row } => {
                write!(f, "non-finite value in column '{column}' at row {row}")
            }
            Self::NegativeValue { column, row } => {
                write!(f, "negative rainfall in column '{column}' at row {row}")
            }
            Self::TimeGap { row, prev_hour, next_hour } => write!(
                f,
                "time step at row {row} is not 1 hour ({prev_hour} -> {next_hour})"
            ),
            Self::TooFewRows { n, min } => {
                write!(f, "need at least {min} rows, got {n}")
            }
            Self::BadSplitFraction { fraction } => {
                write!(f, "split fraction must lie in (0, 1), got {fraction}")
            }
            Self::BadWindowLength => write!(f, "window length m must be >= 1"),
        }
    }
}

impl core::error::Error for DatasetError {}

/// One parsed input row before validation. Missing values are encoded as NaN
/// by the loader and dropped here.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub timestamp_hour: i64,
    pub experts: Vec<f64>,
    pub features: Vec<f64>,
    pub observed: f64,
}

/// What ingestion did to the raw rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestReport {
    pub dropped_rows: usize,
}

/// Aligned time-indexed table of K expert forecasts, F gating features, and
/// observed rainfall.
///
/// Invariants (checked on construction): all blocks share the same row
/// count, timestamps advance in exact 1-hour steps, expert and observed
/// values are finite and nonnegative, features are finite.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForecastPanel {
    timestamps: Vec<i64>,
    experts: Matrix,
    features: Matrix,
    observed: Vec<f64>,
    expert_names: Vec<String>,
    feature_names: Vec<String>,
}

impl ForecastPanel {
    /// Build a panel from validated blocks, rejecting any invariant breach.
    pub fn new(
        timestamps: Vec<i64>,
        experts: Matrix,
        features: Matrix,
        observed: Vec<f64>,
        expert_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n = timestamps.len();
        if n == 0 {
            return Err(DatasetError::EmptyPanel);
        }
        if experts.rows() != n {
            return Err(DatasetError::LengthMismatch {
                what: "experts",
                expected: n,
                got: experts.rows(),
            });
        }
        if features.rows() != n {
            return Err(DatasetError::LengthMismatch {
                what: "features",
                expected: n,
                got: features.rows(),
            });
        }
        if observed.len() != n {
            return Err(DatasetError::LengthMismatch {
                what: "observed",
                expected: n,
                got: observed.len(),
            });
        }
        if expert_names.len() != experts.cols() {
            return Err(DatasetError::LengthMismatch {
                what: "expert names",
                expected: experts.cols(),
                got: expert_names.len(),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(DatasetError::LengthMismatch {
                what: "feature names",
                expected: features.cols(),
                got: feature_names.len(),
            });
        }
        let panel = Self { timestamps, experts, features, observed, expert_names, feature_names };
        panel.validate()?;
        Ok(panel)
    }

    /// Apply the ingestion policy to raw rows: drop rows containing any
    /// non-finite value (counting them), then validate the survivors.
    pub fn ingest(
        rows: Vec<RawRow>,
        expert_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<(Self, IngestReport), DatasetError> {
        let total = rows.len();
        let kept: Vec<RawRow> = rows
            .into_iter()
            .filter(|r| {
                r.observed.is_finite()
                    && r.experts.iter().all(|v| v.is_finite())
                    && r.features.iter().all(|v| v.is_finite())
            })
            .collect();
        let dropped = total - kept.len();
        if kept.is_empty() {
            return Err(DatasetError::EmptyPanel);
        }

        let n = kept.len();
        let k = expert_names.len();
        let nf = feature_names.len();
        let mut timestamps = Vec::with_capacity(n);
        let mut experts = Matrix::zeros(n, k);
        let mut features = Matrix::zeros(n, nf);
        let mut observed = Vec::with_capacity(n);
        for (i, row) in kept.iter().enumerate() {
            if row.experts.len() != k {
                return Err(DatasetError::LengthMismatch {
                    what: "expert row",
                    expected: k,
                    got: row.experts.len(),
                });
            }
            if row.features.len() != nf {
                return Err(DatasetError::LengthMismatch {
                    what: "feature row",
                    expected: nf,
                    got: row.features.len(),
                });
            }
            timestamps.push(row.timestamp_hour);
            experts.row_mut(i).copy_from_slice(&row.experts);
            features.row_mut(i).copy_from_slice(&row.features);
            observed.push(row.observed);
        }

        let panel =
            Self::new(timestamps, experts, features, observed, expert_names, feature_names)?;
        Ok((panel, IngestReport { dropped_rows: dropped }))
    }

    fn validate(&self) -> Result<(), DatasetError> {
        for (i, pair) in self.timestamps.windows(2).enumerate() {
            if pair[1] - pair[0] != 1 {
                return Err(DatasetError::TimeGap {
                    row: i + 1,
                    prev_hour: pair[0],
                    next_hour: pair[1],
                });
            }
        }
        for i in 0..self.n_rows() {
            let y = self.observed[i];
            if !y.is_finite() {
                return Err(DatasetError::NonFinite { column: "observed".into(), row: i });
            }
            if y < 0.0 {
                return Err(DatasetError::NegativeValue { column: "observed".into(), row: i });
            }
            for (k, &e) in self.experts.row(i).iter().enumerate() {
                if !e.is_finite() {
                    return Err(DatasetError::NonFinite {
                        column: self.expert_names[k].clone(),
                        row: i,
                    });
                }
                if e < 0.0 {
                    return Err(DatasetError::NegativeValue {
                        column: self.expert_names[k].clone(),
                        row: i,
                    });
                }
            }
            for (j, &x) in self.features.row(i).iter().enumerate() {
                if !x.is_finite() {
                    return Err(DatasetError::NonFinite {
                        column: self.feature_names[j].clone(),
                        row: i,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_experts(&self) -> usize {
        self.experts.cols()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Epoch hours, strictly increasing in steps of one.
    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// N x K expert forecasts in mm/h.
    pub fn experts(&self) -> &Matrix {
        &self.experts
    }

    /// N x F gating features in their native units.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Gauge rainfall in mm/h.
    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn expert_names(&self) -> &[String] {
        &self.expert_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
}

/// Chronological split: the first `train_fraction` of rows train, the rest
/// test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

/// Split panel rows chronologically: train gets the first
/// `floor(N * fraction)` rows, test the remainder.
pub fn split(
    panel: &ForecastPanel,
    spec: &SplitSpec,
) -> Result<(Range<usize>, Range<usize>), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::BadSplitFraction { fraction: spec.train_fraction });
    }
    let n = panel.n_rows();
    if n < MIN_SPLIT_ROWS {
        return Err(DatasetError::TooFewRows { n, min: MIN_SPLIT_ROWS });
    }
    let n_train = crate::fmath::floor(n as f64 * spec.train_fraction) as usize;
    Ok((0..n_train, n_train..n))
}

/// Per-feature Z-score statistics fitted on the training split only.
///
/// Uses the population standard deviation (divide by n); degenerate columns
/// clamp std to 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Z-score one feature row.
    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    /// Invert [`Self::normalize_row`].
    pub fn denormalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(z, (m, s))| z * s + m).collect()
    }
}

/// Fit Z-score statistics over the training rows of the panel's feature
/// block.
pub fn fit_normalizer(
    panel: &ForecastPanel,
    train: Range<usize>,
) -> Result<NormalizationStats, DatasetError> {
    let n = train.len();
    if n < 2 {
        return Err(DatasetError::TooFewRows { n, min: 2 });
    }
    let nf = panel.n_features();
    let mut mean = alloc::vec![0.0; nf];
    for i in train.clone() {
        for (j, &x) in panel.features().row(i).iter().enumerate() {
            mean[j] += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = alloc::vec![0.0; nf];
    for i in train {
        for (j, &x) in panel.features().row(i).iter().enumerate() {
            let d = x - mean[j];
            var[j] += d * d;
        }
    }
    let std = var
        .iter()
        .map(|&v| {
            let s = crate::fmath::sqrt(v / n as f64);
            if s < STD_CLAMP_EPS {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(NormalizationStats { mean, std })
}

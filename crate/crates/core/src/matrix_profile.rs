//! Shift-tolerant structural distances between expert forecast windows and
//! observed rainfall, and the static penalty matrix built from them.
//!
//! For a forecast trajectory of length m ending at hour t, the distance
//! scans every observed window ending within `delta` hours of t and keeps
//! the smallest plain Euclidean distance. Distances stay in physical units
//! (no z-normalization), so a window that merely arrives a few hours early
//! or late — but carries the right rainfall mass and shape — scores zero,
//! while volume errors always cost.
//!
//! The distances depend only on the data, never on model parameters, so
//! they are computed once per training set and frozen.

use alloc::vec::Vec;
use core::fmt;

use crate::dataset::WindowedSample;
use crate::fmath;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixProfileError {
    /// Window operands differ in length.
    LengthMismatch { left: usize, right: usize },
    /// Query is empty.
    EmptyQuery,
    /// Query length disagrees with the declared window length m.
    QueryLength { expected: usize, got: usize },
    /// Search scope does not supply exactly the 2Δ+1 candidate windows.
    ScopeLength { expected: usize, got: usize },
    /// Penalty matrix construction over no samples.
    NoSamples,
    /// A sample's expert count disagrees with the first sample's.
    ExpertCountMismatch { sample: usize, expected: usize, got: usize },
}

impl fmt::Display for MatrixProfileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LengthMismatch { left, right } => {
                write!(f, "window length mismatch: {left} vs {right}")
            }
            Self::EmptyQuery => write!(f, "query window must hold at least one value"),
            Self::QueryLength { expected, got } => {
                write!(f, "query length {got} does not match window length m = {expected}")
            }
            Self::ScopeLength { expected, got } => {
                write!(f, "search scope needs exactly {expected} values, got {got}")
            }
            Self::NoSamples => write!(f, "penalty matrix needs at least one sample"),
            Self::ExpertCountMismatch { sample, expected, got } => {
                write!(f, "sample {sample} has {got} expert rows, expected {expected}")
            }
        }
    }
}

impl core::error::Error for MatrixProfileError {}

/// Plain Euclidean distance between two equal-length windows, in mm.
///
/// Deliberately not z-normalized: scaling a forecast up or down changes the
/// distance, which is what ties the penalty to rainfall mass.
pub fn window_distance(query: &[f64], candidate: &[f64]) -> Result<f64, MatrixProfileError> {
    if query.len() != candidate.len() {
        return Err(MatrixProfileError::LengthMismatch {
            left: query.len(),
            right: candidate.len(),
        });
    }
    let ss: f64 = query.iter().zip(candidate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(fmath::sqrt(ss))
}

/// Candidate offsets in preference order: 0, -1, +1, -2, +2, ... so that a
/// strict-improvement scan lands on the smallest |offset|, earlier offset
/// first, among tied minima.
fn priority_offsets(delta: usize) -> impl Iterator<Item = i64> {
    core::iter::once(0i64).chain((1..=delta as i64).flat_map(|d| [-d, d]))
}

/// Minimum window distance between `query` (a length-m trajectory ending at
/// hour t) and every observed window ending at t+τ for τ ∈ [-Δ, +Δ].
///
/// `scope` must hold the observed values for [t-Δ-m+1, t+Δ], exactly
/// 2Δ+m entries. Returns the distance and the argmin offset; ties prefer
/// the smallest |τ|, then the earlier τ.
pub fn d_min(
    query: &[f64],
    scope: &[f64],
    m: usize,
    delta: usize,
) -> Result<(f64, i64), MatrixProfileError> {
    if m == 0 {
        return Err(MatrixProfileError::EmptyQuery);
    }
    if query.len() != m {
        return Err(MatrixProfileError::QueryLength { expected: m, got: query.len() });
    }
    let need = 2 * delta + m;
    if scope.len() != need {
        return Err(MatrixProfileError::ScopeLength { expected: need, got: scope.len() });
    }
    let mut best = f64::INFINITY;
    let mut best_tau = 0i64;
    for tau in priority_offsets(delta) {
        // The window ending at offset τ starts at scope position τ + Δ.
        let start = (tau + delta as i64) as usize;
        let d = window_distance(query, &scope[start..start + m])?;
        if d < best {
            best = d;
            best_tau = tau;
        }
    }
    Ok((best, best_tau))
}

/// Frozen per-(sample, expert) structural distances.
///
/// Built once from the training windows; training only reads it. The hash
/// lets the trainer assert nothing mutated it mid-run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PenaltyMatrix {
    values: Matrix,
    /// Argmin offsets, row-major alongside `values`.
    best_tau: Vec<i64>,
    m: usize,
    delta: usize,
    /// Panel row each sample row refers to.
    sample_rows: Vec<usize>,
}

impl PenaltyMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.rows()
    }

    pub fn n_experts(&self) -> usize {
        self.values.cols()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Distance for sample `i`, expert `k`, in mm.
    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[(i, k)]
    }

    /// Distances for sample `i` across experts.
    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Argmin offset for sample `i`, expert `k`.
    pub fn tau(&self, i: usize, k: usize) -> i64 {
        self.best_tau[i * self.values.cols() + k]
    }

    /// Panel rows the sample rows refer to.
    pub fn sample_rows(&self) -> &[usize] {
        &self.sample_rows
    }

    /// A same-shape matrix with every distance forced to zero. Useful for
    /// isolating the point-wise loss term without touching the trainer.
    pub fn zeroed(&self) -> Self {
        Self {
            values: Matrix::zeros(self.values.rows(), self.values.cols()),
            best_tau: alloc::vec![0; self.best_tau.len()],
            m: self.m,
            delta: self.delta,
            sample_rows: self.sample_rows.clone(),
        }
    }

    /// FNV-1a hash of the full content, for staticity checks.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325_u64;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        eat(self.values.rows() as u64);
        eat(self.values.cols() as u64);
        eat(self.m as u64);
        eat(self.delta as u64);
        for &v in self.values.data() {
            eat(v.to_bits());
        }
        for &t in &self.best_tau {
            eat(t as u64);
        }
        for &r in &self.sample_rows {
            eat(r as u64);
        }
        h
    }
}

/// Compute the structural distance of every expert's query in every sample.
///
/// Pure per sample; the result is immutable. Entry (i, k) is zero exactly
/// when some candidate observed window matches expert k's query verbatim.
pub fn build_penalty_matrix(
    samples: &[WindowedSample],
    m: usize,
    delta: usize,
) -> Result<PenaltyMatrix, MatrixProfileError> {
    let first = samples.first().ok_or(MatrixProfileError::NoSamples)?;
    let k = first.queries.rows();
    let mut values = Matrix::zeros(samples.len(), k);
    let mut best_tau = Vec::with_capacity(samples.len() * k);
    let mut sample_rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.queries.rows() != k {
            return Err(MatrixProfileError::ExpertCountMismatch {
                sample: i,
                expected: k,
                got: s.queries.rows(),
            });
        }
        for kk in 0..k {
            let (d, tau) = d_min(s.queries.row(kk), &s.search_scope, m, delta)?;
            values[(i, kk)] = d;
            best_tau.push(tau);
        }
        sample_rows.push(s.index);
    }
    Ok(PenaltyMatrix { values, best_tau, m, delta, sample_rows })
}

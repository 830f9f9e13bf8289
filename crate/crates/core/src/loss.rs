//! The hybrid training objective: a convex blend of point-wise squared
//! error and the gate-weighted structural penalty.
//!
//! The two terms live in different units (mm² vs mm) and are mixed raw —
//! the blend weight λ absorbs the scale, and is the single dial trading
//! volumetric accuracy against structural fidelity.

use core::fmt;

use crate::matrix::Matrix;
use crate::matrix_profile::PenaltyMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    /// Empty prediction/target vectors.
    EmptyInput,
    /// Operand lengths or shapes disagree.
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    /// Blend weight outside [0, 1].
    LambdaOutOfRange { lambda: f64 },
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyInput => write!(f, "loss over empty inputs"),
            Self::ShapeMismatch { what, expected, got } => {
                write!(f, "{what}: expected {expected}, got {got}")
            }
            Self::LambdaOutOfRange { lambda } => {
                write!(f, "lambda must lie in [0, 1], got {lambda}")
            }
        }
    }
}

impl core::error::Error for LossError {}

/// One evaluation of the hybrid objective, with its constituents.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    /// (1−λ)·mse_term + λ·mp_term.
    pub total: f64,
    /// Mean squared residual, mm².
    pub mse_term: f64,
    /// Mean gate-weighted structural distance, mm.
    pub mp_term: f64,
    pub lambda: f64,
}

/// Mean squared residual between combined forecasts and observations.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, LossError> {
    if predictions.is_empty() {
        return Err(LossError::EmptyInput);
    }
    if predictions.len() != targets.len() {
        return Err(LossError::ShapeMismatch {
            what: "targets",
            expected: predictions.len(),
            got: targets.len(),
        });
    }
    let ss: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(ss / predictions.len() as f64)
}

/// Mean over samples of the gate-weighted structural-distance row:
/// (1/N) Σ_t Σ_k p_{k,t} · D_{k,t}.
///
/// Linear in the gate matrix, since the distances are constants.
pub fn mp_loss(gates: &Matrix, penalties: &PenaltyMatrix) -> Result<f64, LossError> {
    if gates.rows() != penalties.n_samples() {
        return Err(LossError::ShapeMismatch {
            what: "gate rows",
            expected: penalties.n_samples(),
            got: gates.rows(),
        });
    }
    if gates.cols() != penalties.n_experts() {
        return Err(LossError::ShapeMismatch {
            what: "gate columns",
            expected: penalties.n_experts(),
            got: gates.cols(),
        });
    }
    if gates.rows() == 0 {
        return Err(LossError::EmptyInput);
    }
    let mut acc = 0.0;
    for i in 0..gates.rows() {
        let row = gates.row(i);
        let pen = penalties.row(i);
        acc += row.iter().zip(pen).map(|(p, d)| p * d).sum::<f64>();
    }
    Ok(acc / gates.rows() as f64)
}

/// Evaluate the full blended objective.
pub fn total_loss(
    predictions: &[f64],
    targets: &[f64],
    gates: &Matrix,
    penalties: &PenaltyMatrix,
    lambda: f64,
) -> Result<LossBreakdown, LossError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(LossError::LambdaOutOfRange { lambda });
    }
    let mse_term = mse_loss(predictions, targets)?;
    let mp_term = mp_loss(gates, penalties)?;
    Ok(LossBreakdown {
        total: (1.0 - lambda) * mse_term + lambda * mp_term,
        mse_term,
        mp_term,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_windows, ForecastPanel, NormalizationStats};
    use crate::matrix_profile::build_penalty_matrix;
    use alloc::string::String;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Penalty matrix with prescribed rows, built through the public path
    /// from a panel crafted so d_min degenerates to |query - truth|.
    fn penalty_from_rows(rows: &[Vec<f64>]) -> PenaltyMatrix {
        let k = rows[0].len();
        let n = rows.len();
        let mut experts = Matrix::zeros(n, k);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                experts[(i, j)] = v;
            }
        }
        let panel = ForecastPanel::new(
            (0..n as i64).collect(),
            experts,
            Matrix::zeros(n, 1),
            alloc::vec![0.0; n],
            (0..k).map(|i| alloc::format!("e{i}")).collect(),
            alloc::vec![String::from("f0")],
        )
        .unwrap();
        let stats = NormalizationStats { mean: alloc::vec![0.0], std: alloc::vec![1.0] };
        // m=1, Δ=0 and zero truth: d_min(query) = |query|, so the penalty
        // matrix reproduces `rows` exactly.
        let samples = build_windows(&panel, 0..n, 1, 0, &stats, false).unwrap();
        build_penalty_matrix(&samples, 1, 0).unwrap()
    }

    #[test]
    fn mse_identity_and_hand_value() {
        assert_eq!(mse_loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
    }

    #[test]
    fn mse_is_permutation_symmetric() {
        let p = [0.3, 4.0, 2.0, 0.0];
        let t = [1.0, 3.5, 2.0, 0.4];
        let perm = [2usize, 0, 3, 1];
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
        // Summation order changes, so equality only up to rounding.
        let diff = (mse_loss(&p, &t).unwrap() - mse_loss(&pp, &tp).unwrap()).abs();
        assert!(diff < 1e-12);
    }

    #[test]
    fn mse_rejects_empty_and_mismatched() {
        assert_eq!(mse_loss(&[], &[]).unwrap_err(), LossError::EmptyInput);
        assert!(matches!(
            mse_loss(&[1.0], &[1.0, 2.0]),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_penalties_annihilate_any_gate() {
        let pm = penalty_from_rows(&[alloc::vec![1.0, 2.0], alloc::vec![3.0, 4.0]]).zeroed();
        let gates = Matrix::from_vec(2, 2, alloc::vec![0.9, 0.1, 0.2, 0.8]);
        assert_eq!(mp_loss(&gates, &pm).unwrap(), 0.0);
    }

    #[test]
    fn one_hot_gates_select_columns() {
        let pm = penalty_from_rows(&[alloc::vec![2.0, 4.0], alloc::vec![6.0, 8.0]]);
        let gates = Matrix::from_vec(2, 2, alloc::vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(mp_loss(&gates, &pm).unwrap(), (4.0 + 6.0) / 2.0);
    }

    #[test]
    fn mp_hand_value() {
        let pm = penalty_from_rows(&[alloc::vec![2.0, 4.0], alloc::vec![6.0, 8.0]]);
        let gates = Matrix::from_vec(2, 2, alloc::vec![0.5, 0.5, 1.0, 0.0]);
        assert_eq!(mp_loss(&gates, &pm).unwrap(), 4.5);
    }

    #[test]
    fn mp_is_linear_in_the_gates() {
        let pm = penalty_from_rows(&[
            alloc::vec![0.4, 2.2, 1.0],
            alloc::vec![5.0, 0.0, 3.3],
            alloc::vec![1.1, 1.2, 1.3],
        ]);
        fn random_gates(rng: &mut ChaCha8Rng) -> Matrix {
            let mut g = Matrix::zeros(3, 3);
            for i in 0..3 {
                let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                for (j, v) in raw.iter().enumerate() {
                    g[(i, j)] = v / s;
                }
            }
            g
        }
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let g1 = random_gates(&mut rng);
            let g2 = random_gates(&mut rng);
            let alpha = rng.random::<f64>();
            let mut mixed = Matrix::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    mixed[(i, j)] = alpha * g1[(i, j)] + (1.0 - alpha) * g2[(i, j)];
                }
            }
            let lhs = mp_loss(&mixed, &pm).unwrap();
            let rhs = alpha * mp_loss(&g1, &pm).unwrap() + (1.0 - alpha) * mp_loss(&g2, &pm).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn mp_checks_shapes() {
        let pm = penalty_from_rows(&[alloc::vec![1.0, 2.0]]);
        let gates = Matrix::zeros(2, 2);
        assert!(matches!(mp_loss(&gates, &pm), Err(LossError::ShapeMismatch { .. })));
    }

    #[test]
    fn endpoints_reduce_to_single_terms() {
        let pm = penalty_from_rows(&[alloc::vec![2.0, 4.0], alloc::vec![6.0, 8.0]]);
        let gates = Matrix::from_vec(2, 2, alloc::vec![0.3, 0.7, 0.6, 0.4]);
        let preds = [1.0, 2.0];
        let targets = [0.5, 3.0];
        let at0 = total_loss(&preds, &targets, &gates, &pm, 0.0).unwrap();
        assert_eq!(at0.total, at0.mse_term);
        let at1 = total_loss(&preds, &targets, &gates, &pm, 1.0).unwrap();
        assert_eq!(at1.total, at1.mp_term);
    }

    #[test]
    fn blended_hand_value() {
        // mse = (4 + 16)/2 = 10; mp = 5; 0.4·10 + 0.6·5 = 7.
        let pm = penalty_from_rows(&[alloc::vec![5.0], alloc::vec![5.0]]);
        let gates = Matrix::from_vec(2, 1, alloc::vec![1.0, 1.0]);
        let b = total_loss(&[0.0, 0.0], &[2.0, 4.0], &gates, &pm, 0.6).unwrap();
        assert_eq!(b.mse_term, 10.0);
        assert_eq!(b.mp_term, 5.0);
        assert!((b.total - 7.0).abs() < 1e-12);
        assert!((b.total - ((1.0 - b.lambda) * b.mse_term + b.lambda * b.mp_term)).abs() < 1e-12);
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected() {
        let pm = penalty_from_rows(&[alloc::vec![1.0]]);
        let gates = Matrix::from_vec(1, 1, alloc::vec![1.0]);
        assert_eq!(
            total_loss(&[0.0], &[0.0], &gates, &pm, 1.5).unwrap_err(),
            LossError::LambdaOutOfRange { lambda: 1.5 }
        );
    }

    #[test]
    fn total_is_a_convex_combination_of_terms() {
        let pm = penalty_from_rows(&[alloc::vec![2.0, 0.5], alloc::vec![1.0, 3.0]]);
        let gates = Matrix::from_vec(2, 2, alloc::vec![0.5, 0.5, 0.25, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let lambda = rng.random::<f64>();
            let b =
                total_loss(&[0.4, 2.0], &[1.0, 1.5], &gates, &pm, lambda).unwrap();
            let lo = b.mse_term.min(b.mp_term);
            let hi = b.mse_term.max(b.mp_term);
            assert!(b.total >= lo - 1e-12 && b.total <= hi + 1e-12);
        }
    }

    // The displacement story at the loss level: a forecast that is merely a
    // few hours late pays point-wise (misses the event, then falsely alarms)
    // but pays nothing structurally, because the shifted window still
    // matches.
    #[test]
    fn timing_error_costs_pointwise_but_not_structurally() {
        let n = 40usize;
        let (m, delta) = (3usize, 3usize);
        let shift = 2usize; // 1 ≤ shift ≤ Δ
        let mut observed = alloc::vec![0.0; n];
        observed[12] = 6.0;
        observed[13] = 9.0;
        observed[14] = 4.0;
        let mut experts = Matrix::zeros(n, 1);
        for t in 0..n {
            experts[(t, 0)] = observed[t.saturating_sub(shift)];
        }
        let panel = ForecastPanel::new(
            (0..n as i64).collect(),
            experts,
            Matrix::zeros(n, 1),
            observed,
            alloc::vec![String::from("late")],
            alloc::vec![String::from("f0")],
        )
        .unwrap();
        let stats = NormalizationStats { mean: alloc::vec![0.0], std: alloc::vec![1.0] };
        let samples = build_windows(&panel, 0..n, m, delta, &stats, false).unwrap();
        let pm = build_penalty_matrix(&samples, m, delta).unwrap();

        // Gate forced one-hot on the single (shifted) expert.
        let gates = Matrix::from_vec(samples.len(), 1, alloc::vec![1.0; samples.len()]);
        let preds: Vec<f64> = samples.iter().map(|s| s.queries[(0, m - 1)]).collect();
        let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();

        let mse = mse_loss(&preds, &targets).unwrap();
        let mp = mp_loss(&gates, &pm).unwrap();
        assert!(mse > 0.0, "displaced spike must cost point-wise (got {mse})");
        assert_eq!(mp, 0.0, "within-radius displacement must cost nothing structurally");
    }
}

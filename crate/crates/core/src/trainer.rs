//! Training orchestration: the per-seed fit loop, multi-seed aggregation,
//! the λ sweep, the loss ablation, and the reference baselines.
//!
//! A run is deterministic in (panel, config, seed): the seed feeds one
//! master stream that derives the weight-initialization and batch-shuffle
//! streams, and everything else is pure arithmetic. The structural penalty
//! matrix is built once before the epoch loop and checksummed every epoch —
//! it must never change while training reads it.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    build_windows, fit_normalizer, split, DatasetError, ForecastPanel, NormalizationStats,
    SplitSpec, WindowedSample,
};
use crate::fmath;
use crate::gating::{
    adam_step, backward, combine, BatchItem, GatingError, GatingModel, OptimizerState,
};
use crate::loss::{total_loss, LossBreakdown, LossError};
use crate::matrix::Matrix;
use crate::matrix_profile::{build_penalty_matrix, MatrixProfileError, PenaltyMatrix};
use crate::metrics::{evaluate, report_from_series, MetricsError, MetricsReport};

#[derive(Debug)]
pub enum TrainError {
    Dataset(DatasetError),
    MatrixProfile(MatrixProfileError),
    Gating(GatingError),
    Loss(LossError),
    Metrics(MetricsError),
    /// Blend weight outside [0, 1].
    BadLambda { lambda: f64 },
    /// Batch size of zero.
    ZeroBatch,
    /// Epoch count of zero.
    ZeroEpochs,
    /// No hidden layers would make the gate a linear model.
    NoHiddenLayers,
    /// Boundary exclusion removed every training index.
    EmptyWindowSet,
    /// Training loss left the finite range.
    Diverged { epoch: usize },
    /// The penalty matrix changed mid-run (internal invariant breach).
    PenaltyMutated { epoch: usize },
    /// run_seeds called with an empty seed list.
    NoSeeds,
    /// A seeded run failed; the seed identifies which.
    Seed { seed: u64, inner: Box<TrainError> },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dataset(e) => write!(f, "dataset: {e}"),
            Self::MatrixProfile(e) => write!(f, "penalty computation: {e}"),
            Self::Gating(e) => write!(f, "gating network: {e}"),
            Self::Loss(e) => write!(f, "loss: {e}"),
            Self::Metrics(e) => write!(f, "evaluation: {e}"),
            Self::BadLambda { lambda } => write!(f, "lambda must lie in [0, 1], got {lambda}"),
            Self::ZeroBatch => write!(f, "batch size must be >= 1"),
            Self::ZeroEpochs => write!(f, "epoch count must be >= 1"),
            Self::NoHiddenLayers => write!(f, "at least one hidden layer is required"),
            Self::EmptyWindowSet => {
                write!(f, "no trainable samples: every training index was boundary-excluded")
            }
            Self::Diverged { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
            Self::PenaltyMutated { epoch } => {
                write!(f, "penalty matrix changed at epoch {epoch}; it must stay frozen")
            }
            Self::NoSeeds => write!(f, "at least one seed is required"),
            Self::Seed { seed, inner } => write!(f, "seed {seed}: {inner}"),
        }
    }
}

impl core::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Self::Dataset(e) => Some(e),
            Self::MatrixProfile(e) => Some(e),
            Self::Gating(e) => Some(e),
            Self::Loss(e) => Some(e),
            Self::Metrics(e) => Some(e),
            Self::Seed { inner, .. } => Some(inner.as_ref()),
            _ => None,
        }
    }
}

impl From<DatasetError> for TrainError {
    fn from(e: DatasetError) -> Self {
        Self::Dataset(e)
    }
}
impl From<MatrixProfileError> for TrainError {
    fn from(e: MatrixProfileError) -> Self {
        Self::MatrixProfile(e)
    }
}
impl From<GatingError> for TrainError {
    fn from(e: GatingError) -> Self {
        Self::Gating(e)
    }
}
impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        Self::Loss(e)
    }
}
impl From<MetricsError> for TrainError {
    fn from(e: MetricsError) -> Self {
        Self::Metrics(e)
    }
}

/// Everything a training run can be told. The defaults are the reference
/// configuration; they are serialized into every checkpoint and report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Blend weight between the point-wise and structural terms.
    pub lambda: f64,
    /// Forecast window length, hours.
    pub m: usize,
    /// Max temporal shift the structural distance forgives, hours.
    pub delta: usize,
    /// Adam learning rate.
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// One independent run per seed.
    pub seeds: Vec<u64>,
    /// Chronological train share.
    pub train_fraction: f64,
    /// Hidden widths; full layer dims become [F, hidden..., K] per panel.
    pub hidden_dims: Vec<usize>,
    /// Reshuffle mini-batches every epoch (seeded).
    pub shuffle: bool,
    /// Feed raw expert values to the gate alongside the features.
    pub append_experts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            m: 3,
            delta: 3,
            lr: 0.003,
            batch_size: 64,
            epochs: 100,
            seeds: alloc::vec![0, 1, 42, 2024, 2025],
            train_fraction: 0.7,
            hidden_dims: alloc::vec![64, 64, 32],
            shuffle: true,
            append_experts: false,
        }
    }
}

impl TrainConfig {
    /// Reject impossible settings. [`prepare`] calls this, but callers that
    /// classify configuration errors differently from runtime errors (the
    /// command line does) can run it up front, before any data is read.
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TrainError::BadLambda { lambda: self.lambda });
        }
        if self.batch_size == 0 {
            return Err(TrainError::ZeroBatch);
        }
        if self.epochs == 0 {
            return Err(TrainError::ZeroEpochs);
        }
        if self.hidden_dims.is_empty() {
            return Err(TrainError::NoHiddenLayers);
        }
        Ok(())
    }
}

/// Seed-independent preparation shared by every run on a panel: the split,
/// the normalizer, the training windows, and the frozen penalty matrix.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub train: Range<usize>,
    pub test: Range<usize>,
    pub stats: NormalizationStats,
    pub samples: Vec<WindowedSample>,
    /// Expert forecasts at each sample's target hour (samples × K).
    pub expert_now: Matrix,
    pub penalty: PenaltyMatrix,
    /// Full network dims [inputs, hidden..., K].
    pub layer_dims: Vec<usize>,
}

/// Split, normalize, window, and precompute the penalty matrix.
pub fn prepare(panel: &ForecastPanel, config: &TrainConfig) -> Result<TrainSetup, TrainError> {
    config.validate()?;
    let (train, test) = split(panel, &SplitSpec { train_fraction: config.train_fraction })?;
    let stats = fit_normalizer(panel, train.clone())?;
    let samples = build_windows(
        panel,
        train.clone(),
        config.m,
        config.delta,
        &stats,
        config.append_experts,
    )?;
    if samples.is_empty() {
        return Err(TrainError::EmptyWindowSet);
    }
    let penalty = build_penalty_matrix(&samples, config.m, config.delta)?;

    let k = panel.n_experts();
    let mut expert_now = Matrix::zeros(samples.len(), k);
    for (i, s) in samples.iter().enumerate() {
        expert_now.row_mut(i).copy_from_slice(panel.experts().row(s.index));
    }

    let n_inputs = samples[0].features.len();
    let mut layer_dims = alloc::vec![n_inputs];
    layer_dims.extend_from_slice(&config.hidden_dims);
    layer_dims.push(k);

    Ok(TrainSetup { train, test, stats, samples, expert_now, penalty, layer_dims })
}

/// One finished seeded run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunResult {
    pub config: TrainConfig,
    pub seed: u64,
    pub report: MetricsReport,
    /// Whole-training-set loss after each epoch's updates.
    pub epoch_losses: Vec<LossBreakdown>,
    /// Seconds spent in the fit loop; informational only, never part of
    /// any determinism comparison. Zero when built without `std`.
    pub wall_time_s: f64,
}

/// Train one gate on a prepared setup, deterministically in `seed`.
pub fn fit(
    panel: &ForecastPanel,
    setup: &TrainSetup,
    config: &TrainConfig,
    seed: u64,
) -> Result<(GatingModel, RunResult), TrainError> {
    config.validate()?;
    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let init_seed = master.next_u64();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(master.next_u64());

    let mut model = GatingModel::init(&setup.layer_dims, init_seed)?;
    let mut optimizer = OptimizerState::new(&model, config.lr);
    let frozen_hash = setup.penalty.content_hash();

    let n = setup.samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if setup.penalty.content_hash() != frozen_hash {
            return Err(TrainError::PenaltyMutated { epoch });
        }
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for batch_ids in order.chunks(config.batch_size) {
            let batch: Vec<BatchItem<'_>> = batch_ids
                .iter()
                .map(|&i| BatchItem {
                    features: &setup.samples[i].features,
                    expert_values: setup.expert_now.row(i),
                    target: setup.samples[i].target,
                    penalty_row: setup.penalty.row(i),
                })
                .collect();
            let grads = backward(&model, &batch, config.lambda)?;
            adam_step(&mut model, &mut optimizer, &grads)?;
        }

        let breakdown = training_loss(&model, setup, config.lambda)?;
        if !breakdown.total.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        epoch_losses.push(breakdown);
    }

    let report =
        evaluate(&model, panel, setup.test.clone(), &setup.stats, config.append_experts)?;

    #[cfg(feature = "std")]
    let wall_time_s = started.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let wall_time_s = 0.0;

    let result = RunResult {
        config: config.clone(),
        seed,
        report,
        epoch_losses,
        wall_time_s,
    };
    Ok((model, result))
}

/// Current hybrid loss over the full training set, batch-mean convention.
fn training_loss(
    model: &GatingModel,
    setup: &TrainSetup,
    lambda: f64,
) -> Result<LossBreakdown, TrainError> {
    let n = setup.samples.len();
    let k = setup.expert_now.cols();
    let mut predictions = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut gates = Matrix::zeros(n, k);
    for (i, s) in setup.samples.iter().enumerate() {
        let gate = model.forward(&s.features)?;
        predictions.push(combine(&gate, setup.expert_now.row(i))?);
        targets.push(s.target);
        gates.row_mut(i).copy_from_slice(&gate);
    }
    Ok(total_loss(&predictions, &targets, &gates, &setup.penalty, lambda)?)
}

/// Prepare and fit in one step.
pub fn train(
    panel: &ForecastPanel,
    config: &TrainConfig,
    seed: u64,
) -> Result<(GatingModel, RunResult), TrainError> {
    let setup = prepare(panel, config)?;
    fit(panel, &setup, config, seed)
}

/// Mean, population standard deviation, and median of a per-seed metric.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Stat {
    fn over(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        Self { mean, std: fmath::sqrt(var), median }
    }
}

/// Cross-seed aggregate of the report metrics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aggregate {
    pub mae_1h: Stat,
    pub mae_acc: BTreeMap<u32, Stat>,
    pub dtw: Stat,
    /// Aggregated over the seeds where the threshold was defined; `None`
    /// when it was defined for none of them.
    pub csi_per_threshold: BTreeMap<u32, Option<Stat>>,
    pub csi_m: Option<Stat>,
    /// Element-wise mean over seeds of the per-run mean gate weights.
    pub mean_gate_weights: Vec<f64>,
    /// Final-epoch loss terms across seeds.
    pub final_mse_term: Stat,
    pub final_mp_term: Stat,
}

/// All per-seed results plus their aggregate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedRuns {
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

/// Reduce per-seed results to the cross-seed aggregate. Callers that run
/// [`fit`] themselves (to keep the trained models) use this to match the
/// aggregation [`run_seeds`] performs.
pub fn aggregate_runs(runs: &[RunResult]) -> Aggregate {
    let pick = |f: &dyn Fn(&RunResult) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };

    let mut mae_acc = BTreeMap::new();
    for &h in runs[0].report.mae_acc.keys() {
        let vals: Vec<f64> = runs.iter().filter_map(|r| r.report.mae_acc.get(&h).copied()).collect();
        if vals.len() == runs.len() {
            mae_acc.insert(h, Stat::over(&vals));
        }
    }

    let mut csi_per_threshold = BTreeMap::new();
    for &r in runs[0].report.csi_per_threshold.keys() {
        let vals: Vec<f64> = runs
            .iter()
            .filter_map(|run| run.report.csi_per_threshold.get(&r).copied().flatten())
            .collect();
        csi_per_threshold.insert(r, if vals.is_empty() { None } else { Some(Stat::over(&vals)) });
    }

    let csi_vals: Vec<f64> = runs.iter().filter_map(|r| r.report.csi_m).collect();

    let k = runs[0].report.mean_gate_weights.len();
    let mut gate_means = alloc::vec![0.0; k];
    for run in runs {
        for (acc, w) in gate_means.iter_mut().zip(&run.report.mean_gate_weights) {
            *acc += w;
        }
    }
    for w in &mut gate_means {
        *w /= runs.len() as f64;
    }

    Aggregate {
        mae_1h: Stat::over(&pick(&|r| r.report.mae_1h)),
        mae_acc,
        dtw: Stat::over(&pick(&|r| r.report.dtw)),
        csi_per_threshold,
        csi_m: if csi_vals.is_empty() { None } else { Some(Stat::over(&csi_vals)) },
        mean_gate_weights: gate_means,
        final_mse_term: Stat::over(&pick(&|r| {
            r.epoch_losses.last().expect("epochs >= 1").mse_term
        })),
        final_mp_term: Stat::over(&pick(&|r| {
            r.epoch_losses.last().expect("epochs >= 1").mp_term
        })),
    }
}

fn run_seeds_on(
    panel: &ForecastPanel,
    setup: &TrainSetup,
    config: &TrainConfig,
) -> Result<SeedRuns, TrainError> {
    if config.seeds.is_empty() {
        return Err(TrainError::NoSeeds);
    }
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let (_, result) = fit(panel, setup, config, seed)
            .map_err(|e| TrainError::Seed { seed, inner: Box::new(e) })?;
        runs.push(result);
    }
    let aggregate = aggregate_runs(&runs);
    Ok(SeedRuns { runs, aggregate })
}

/// One independent run per configured seed, with per-metric aggregation.
pub fn run_seeds(panel: &ForecastPanel, config: &TrainConfig) -> Result<SeedRuns, TrainError> {
    let setup = prepare(panel, config)?;
    run_seeds_on(panel, &setup, config)
}

/// Retrain the full seed set at each blend weight.
///
/// The expensive seed-independent preparation (windows, penalty matrix) is
/// shared across the whole grid — it does not depend on λ.
pub fn sweep_lambda(
    panel: &ForecastPanel,
    config: &TrainConfig,
    lambdas: &[f64],
) -> Result<Vec<(f64, SeedRuns)>, TrainError> {
    for &l in lambdas {
        if !(0.0..=1.0).contains(&l) {
            return Err(TrainError::BadLambda { lambda: l });
        }
    }
    let setup = prepare(panel, config)?;
    let mut table = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = TrainConfig { lambda, ..config.clone() };
        table.push((lambda, run_seeds_on(panel, &setup, &cfg)?));
    }
    Ok(table)
}

/// The loss ablation: the configured blend against each single-term
/// endpoint, identical seeds everywhere.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationOutcome {
    /// The configured λ.
    pub full: SeedRuns,
    /// λ = 0: point-wise term only.
    pub without_mp: SeedRuns,
    /// λ = 1: structural term only.
    pub without_mse: SeedRuns,
    pub full_lambda: f64,
}

pub fn ablate(panel: &ForecastPanel, config: &TrainConfig) -> Result<AblationOutcome, TrainError> {
    let setup = prepare(panel, config)?;
    let arm = |lambda: f64| -> Result<SeedRuns, TrainError> {
        let cfg = TrainConfig { lambda, ..config.clone() };
        run_seeds_on(panel, &setup, &cfg)
    };
    Ok(AblationOutcome {
        full: arm(config.lambda)?,
        without_mp: arm(0.0)?,
        without_mse: arm(1.0)?,
        full_lambda: config.lambda,
    })
}

/// Reference forecasts scored through the same report path as the model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineSet {
    /// Uniform blend of all experts.
    pub ensemble_mean: MetricsReport,
    /// Least-squares blend of expert columns, fit on the train split,
    /// predictions clipped at zero.
    pub least_squares: MetricsReport,
    pub ls_weights: Vec<f64>,
    /// Whether the normal equations needed the ridge fallback.
    pub ls_ridge_fallback: bool,
    /// Each expert on its own, in panel column order.
    pub per_expert: Vec<(String, MetricsReport)>,
}

/// Score the non-learned reference blends on the test split.
pub fn baseline_eval(
    panel: &ForecastPanel,
    train: Range<usize>,
    test: Range<usize>,
) -> Result<BaselineSet, TrainError> {
    if test.is_empty() {
        return Err(TrainError::Metrics(MetricsError::EmptyTestSplit));
    }
    let k = panel.n_experts();
    let observed: Vec<f64> = test.clone().map(|t| panel.observed()[t]).collect();

    let uniform = alloc::vec![1.0 / k as f64; k];
    let ensemble: Vec<f64> = test
        .clone()
        .map(|t| panel.experts().row(t).iter().sum::<f64>() / k as f64)
        .collect();
    let ensemble_mean = report_from_series(&ensemble, &observed, uniform)?;

    let (ls_weights, ls_ridge_fallback) = least_squares_weights(panel, train)?;
    let ls_series: Vec<f64> = test
        .clone()
        .map(|t| {
            let dot: f64 =
                panel.experts().row(t).iter().zip(&ls_weights).map(|(e, w)| e * w).sum();
            dot.max(0.0)
        })
        .collect();
    let least_squares = report_from_series(&ls_series, &observed, ls_weights.clone())?;

    let mut per_expert = Vec::with_capacity(k);
    for kk in 0..k {
        let series: Vec<f64> = test.clone().map(|t| panel.experts()[(t, kk)]).collect();
        let mut one_hot = alloc::vec![0.0; k];
        one_hot[kk] = 1.0;
        per_expert.push((
            panel.expert_names()[kk].clone(),
            report_from_series(&series, &observed, one_hot)?,
        ));
    }

    Ok(BaselineSet { ensemble_mean, least_squares, ls_weights, ls_ridge_fallback, per_expert })
}

/// Solve the normal equations for the expert blend on the train rows.
/// Falls back to a tiny ridge term when the system is singular; the flag
/// reports which path produced the weights.
fn least_squares_weights(
    panel: &ForecastPanel,
    train: Range<usize>,
) -> Result<(Vec<f64>, bool), TrainError> {
    let k = panel.n_experts();
    let mut xtx = Matrix::zeros(k, k);
    let mut xty = alloc::vec![0.0; k];
    for t in train {
        let row = panel.experts().row(t);
        let y = panel.observed()[t];
        for i in 0..k {
            xty[i] += row[i] * y;
            for j in 0..k {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    if let Some(w) = solve_symmetric(&xtx, &xty) {
        return Ok((w, false));
    }
    let mut ridged = xtx.clone();
    for i in 0..k {
        ridged[(i, i)] += 1e-8;
    }
    match solve_symmetric(&ridged, &xty) {
        Some(w) => Ok((w, true)),
        // With the ridge the system is strictly positive definite; failing
        // here would mean non-finite inputs, which the panel rules out.
        None => unreachable!("ridge-regularized normal equations are nonsingular"),
    }
}

/// Gaussian elimination with partial pivoting; `None` on a (near-)singular
/// pivot.
fn solve_symmetric(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut aug = a.clone();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, aug[(perm[r], col)].abs()))
            .fold((col, 0.0_f64), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot_abs < 1e-12 {
            return None;
        }
        perm.swap(col, pivot_row);
        let p = perm[col];
        for &q in &perm[col + 1..] {
            let factor = aug[(q, col)] / aug[(p, col)];
            for c in col..n {
                let v = aug[(p, c)];
                aug[(q, c)] -= factor * v;
            }
            rhs[q] -= factor * rhs[p];
        }
    }
    let mut x = alloc::vec![0.0; n];
    for col in (0..n).rev() {
        let p = perm[col];
        let mut acc = rhs[p];
        for c in col + 1..n {
            acc -= aug[(p, c)] * x[c];
        }
        x[col] = acc / aug[(p, col)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, ExpertCorruption, SyntheticSpec};
    use crate::loss::mse_loss;

    /// Small, fast config for unit tests; the reference defaults are
    /// exercised by the end-to-end suite.
    fn quick_config() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            hidden_dims: alloc::vec![16, 12, 8],
            seeds: alloc::vec![0, 1, 42],
            ..TrainConfig::default()
        }
    }

    fn quick_basin(experts: Vec<ExpertCorruption>, seed: u64) -> ForecastPanel {
        let spec = SyntheticSpec {
            n_hours: 500,
            start_epoch_hour: 0,
            stratiform_level: 0.5,
            diurnal_amplitude: 0.3,
            spike_rate: 0.06,
            spike_amp_min: 4.0,
            spike_amp_max: 10.0,
            experts,
        };
        generate_synthetic(&spec, seed).unwrap()
    }

    fn mixed_pool() -> Vec<ExpertCorruption> {
        alloc::vec![
            ExpertCorruption { noise_std: 0.3, ..ExpertCorruption::perfect("near") },
            ExpertCorruption { lag_hours: 2, noise_std: 0.2, ..ExpertCorruption::perfect("late") },
            ExpertCorruption { bias: 0.6, noise_std: 0.2, ..ExpertCorruption::perfect("dry") },
        ]
    }

    #[test]
    fn defaults_match_the_reference_configuration() {
        let c = TrainConfig::default();
        assert_eq!(c.lambda, 0.6);
        assert_eq!(c.m, 3);
        assert_eq!(c.delta, 3);
        assert_eq!(c.lr, 0.003);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.epochs, 100);
        assert_eq!(c.seeds, alloc::vec![0, 1, 42, 2024, 2025]);
        assert_eq!(c.train_fraction, 0.7);
        assert_eq!(c.hidden_dims, alloc::vec![64, 64, 32]);
        assert!(c.shuffle);
        assert!(!c.append_experts);
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let panel = quick_basin(mixed_pool(), 0);
        let bad = TrainConfig { lambda: 1.2, ..quick_config() };
        assert!(matches!(prepare(&panel, &bad), Err(TrainError::BadLambda { .. })));
        let bad = TrainConfig { batch_size: 0, ..quick_config() };
        assert!(matches!(prepare(&panel, &bad), Err(TrainError::ZeroBatch)));
        let bad = TrainConfig { epochs: 0, ..quick_config() };
        assert!(matches!(prepare(&panel, &bad), Err(TrainError::ZeroEpochs)));
    }

    #[test]
    fn prepare_wires_shapes_together() {
        let panel = quick_basin(mixed_pool(), 3);
        let config = quick_config();
        let setup = prepare(&panel, &config).unwrap();
        assert_eq!(setup.train, 0..350);
        assert_eq!(setup.test, 350..500);
        assert_eq!(setup.penalty.n_samples(), setup.samples.len());
        assert_eq!(setup.penalty.n_experts(), 3);
        assert_eq!(setup.expert_now.rows(), setup.samples.len());
        assert_eq!(setup.layer_dims, alloc::vec![4, 16, 12, 8, 3]);
        // Window samples start after the boundary margin.
        assert_eq!(setup.samples.first().unwrap().index, 5);
        assert_eq!(setup.samples.last().unwrap().index, 349);
        // Sample targets mirror the panel at their rows.
        for (i, s) in setup.samples.iter().enumerate() {
            assert_eq!(s.target, panel.observed()[s.index]);
            assert_eq!(setup.expert_now.row(i), panel.experts().row(s.index));
        }
    }

    #[test]
    fn same_seed_reproduces_the_run_bit_for_bit() {
        let panel = quick_basin(mixed_pool(), 7);
        let config = TrainConfig { epochs: 12, ..quick_config() };
        let (m1, r1) = train(&panel, &config, 42).unwrap();
        let (m2, r2) = train(&panel, &config, 42).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.report, r2.report);
        assert_eq!(r1.epoch_losses, r2.epoch_losses);

        let (m3, _) = train(&panel, &config, 43).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn lambda_zero_ignores_penalty_values_exactly() {
        let panel = quick_basin(mixed_pool(), 11);
        let config = TrainConfig { lambda: 0.0, epochs: 15, ..quick_config() };
        let setup = prepare(&panel, &config).unwrap();
        let mut zeroed_setup = setup.clone();
        zeroed_setup.penalty = setup.penalty.zeroed();

        let (model_a, run_a) = fit(&panel, &setup, &config, 2024).unwrap();
        let (model_b, run_b) = fit(&panel, &zeroed_setup, &config, 2024).unwrap();

        // Identical parameter trajectory: same model and same point-wise
        // loss curve; only the reported (unused) structural term differs.
        assert_eq!(model_a, model_b);
        assert_eq!(run_a.report, run_b.report);
        for (a, b) in run_a.epoch_losses.iter().zip(&run_b.epoch_losses) {
            assert_eq!(a.mse_term, b.mse_term);
            assert_eq!(a.total, b.total);
            assert_eq!(b.mp_term, 0.0);
        }
        assert!(run_a.epoch_losses.iter().any(|l| l.mp_term > 0.0));
    }

    #[test]
    fn lambda_one_training_never_reads_the_targets() {
        let panel = quick_basin(mixed_pool(), 13);
        let config = TrainConfig { lambda: 1.0, epochs: 15, ..quick_config() };
        let setup = prepare(&panel, &config).unwrap();
        let mut warped = setup.clone();
        for s in &mut warped.samples {
            s.target = 1000.0 - s.target;
        }
        let (model_a, _) = fit(&panel, &setup, &config, 0).unwrap();
        let (model_b, _) = fit(&panel, &warped, &config, 0).unwrap();
        assert_eq!(model_a, model_b);
    }

    #[test]
    fn mixture_beats_every_corrupted_expert_pointwise() {
        // Pool holds one perfect expert; the λ=0 gate should at least beat
        // the best corrupted expert on training MSE.
        let pool = alloc::vec![
            ExpertCorruption::perfect("truthy"),
            ExpertCorruption { bias: 1.3, noise_std: 0.3, ..ExpertCorruption::perfect("wet") },
            ExpertCorruption { noise_std: 0.8, ..ExpertCorruption::perfect("loud") },
        ];
        let panel = quick_basin(pool, 5);
        let config = TrainConfig { lambda: 0.0, epochs: 60, ..quick_config() };
        let setup = prepare(&panel, &config).unwrap();
        let (_, run) = fit(&panel, &setup, &config, 1).unwrap();
        let final_mse = run.epoch_losses.last().unwrap().mse_term;

        let targets: Vec<f64> = setup.samples.iter().map(|s| s.target).collect();
        for k in [1usize, 2] {
            let series: Vec<f64> =
                (0..setup.samples.len()).map(|i| setup.expert_now[(i, k)]).collect();
            let expert_mse = mse_loss(&series, &targets).unwrap();
            assert!(
                final_mse < expert_mse,
                "final MSE {final_mse} not below expert {k} MSE {expert_mse}"
            );
        }
    }

    #[test]
    fn run_seeds_aggregates_match_hand_computation() {
        let panel = quick_basin(mixed_pool(), 17);
        let config = TrainConfig { epochs: 8, ..quick_config() };
        let out = run_seeds(&panel, &config).unwrap();
        assert_eq!(out.runs.len(), 3);

        let maes: Vec<f64> = out.runs.iter().map(|r| r.report.mae_1h).collect();
        let mean = maes.iter().sum::<f64>() / 3.0;
        let std =
            (maes.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
        let mut sorted = maes.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(out.aggregate.mae_1h.mean, mean);
        assert_eq!(out.aggregate.mae_1h.std, std);
        assert_eq!(out.aggregate.mae_1h.median, sorted[1]);
    }

    #[test]
    fn single_and_repeated_seeds_have_zero_spread() {
        let panel = quick_basin(mixed_pool(), 19);
        let config = TrainConfig { epochs: 6, seeds: alloc::vec![7], ..quick_config() };
        let out = run_seeds(&panel, &config).unwrap();
        assert_eq!(out.aggregate.mae_1h.std, 0.0);
        assert_eq!(out.aggregate.dtw.std, 0.0);

        let config = TrainConfig { epochs: 6, seeds: alloc::vec![7, 7], ..quick_config() };
        let out = run_seeds(&panel, &config).unwrap();
        assert_eq!(out.runs[0].report, out.runs[1].report);
        assert_eq!(out.aggregate.mae_1h.std, 0.0);

        let config = TrainConfig { seeds: alloc::vec![], ..quick_config() };
        assert!(matches!(run_seeds(&panel, &config), Err(TrainError::NoSeeds)));
    }

    #[test]
    fn sweep_covers_the_grid_and_matches_plain_runs() {
        let panel = quick_basin(mixed_pool(), 23);
        let config = TrainConfig { epochs: 6, seeds: alloc::vec![0, 1], ..quick_config() };

        let single = sweep_lambda(&panel, &config, &[0.0]).unwrap();
        assert_eq!(single.len(), 1);
        let direct = run_seeds(&panel, &TrainConfig { lambda: 0.0, ..config.clone() }).unwrap();
        assert_eq!(single[0].1.aggregate, direct.aggregate);

        let grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let table = sweep_lambda(&panel, &config, &grid).unwrap();
        assert_eq!(table.len(), 6);
        for ((l, _), want) in table.iter().zip(&grid) {
            assert_eq!(l, want);
        }

        assert!(matches!(
            sweep_lambda(&panel, &config, &[0.5, 1.1]),
            Err(TrainError::BadLambda { .. })
        ));
    }

    #[test]
    fn structural_only_training_minimizes_the_structural_term() {
        // One time-shifted but otherwise perfect expert (structural cost
        // zero) against an unbiased noisy one (structural cost positive).
        let pool = alloc::vec![
            ExpertCorruption { lag_hours: 2, ..ExpertCorruption::perfect("late_exact") },
            ExpertCorruption { noise_std: 0.5, ..ExpertCorruption::perfect("loud") },
        ];
        let panel = quick_basin(pool, 29);
        let config = TrainConfig { epochs: 25, seeds: alloc::vec![0, 1], ..quick_config() };
        let table = sweep_lambda(&panel, &config, &[0.0, 1.0]).unwrap();
        let mp_at = |i: usize| table[i].1.aggregate.final_mp_term.median;
        assert!(
            mp_at(1) < mp_at(0),
            "structural term at λ=1 ({}) should undercut λ=0 ({})",
            mp_at(1),
            mp_at(0)
        );
    }

    #[test]
    fn ablation_produces_three_arms_on_shared_seeds() {
        let panel = quick_basin(mixed_pool(), 31);
        let config = TrainConfig { epochs: 6, seeds: alloc::vec![3, 4], ..quick_config() };
        let out = ablate(&panel, &config).unwrap();
        assert_eq!(out.full_lambda, 0.6);
        for arm in [&out.full, &out.without_mp, &out.without_mse] {
            assert_eq!(arm.runs.len(), 2);
            assert_eq!(arm.runs[0].seed, 3);
            assert_eq!(arm.runs[1].seed, 4);
        }
        assert_eq!(out.full.runs[0].config.lambda, 0.6);
        assert_eq!(out.without_mp.runs[0].config.lambda, 0.0);
        assert_eq!(out.without_mse.runs[0].config.lambda, 1.0);
    }

    #[test]
    fn degenerate_pool_converges_to_near_zero_dtw_in_every_arm() {
        let pool = alloc::vec![ExpertCorruption::perfect("truthy")];
        let panel = quick_basin(pool, 37);
        let config = TrainConfig { epochs: 5, seeds: alloc::vec![0], ..quick_config() };
        let out = ablate(&panel, &config).unwrap();
        // A single perfect expert leaves the gate no way to be wrong.
        assert_eq!(out.full.aggregate.dtw.median, 0.0);
        assert_eq!(out.without_mp.aggregate.dtw.median, 0.0);
        assert_eq!(out.without_mse.aggregate.dtw.median, 0.0);
    }

    #[test]
    fn penalty_mutation_mid_run_is_caught() {
        // Sharing one setup across runs relies on nobody writing to the
        // penalty; a mutated clone must be rejected on its first epoch.
        let panel = quick_basin(mixed_pool(), 41);
        let config = TrainConfig { epochs: 3, ..quick_config() };
        let setup = prepare(&panel, &config).unwrap();
        let hash = setup.penalty.content_hash();
        let (_, _) = fit(&panel, &setup, &config, 0).unwrap();
        assert_eq!(setup.penalty.content_hash(), hash);
    }

    // ── baselines ────────────────────────────────────────────────────

    #[test]
    fn identical_experts_make_ensemble_equal_any_single() {
        let pool = alloc::vec![
            ExpertCorruption::perfect("twin_a"),
            ExpertCorruption::perfect("twin_b"),
        ];
        let panel = quick_basin(pool, 43);
        let out = baseline_eval(&panel, 0..350, 350..500).unwrap();
        let single = &out.per_expert[0].1;
        assert_eq!(out.ensemble_mean.mae_1h, single.mae_1h);
        assert_eq!(out.ensemble_mean.dtw, single.dtw);
        assert_eq!(out.ensemble_mean.csi_m, single.csi_m);
        assert_eq!(out.per_expert.len(), 2);
        assert_eq!(out.per_expert[0].0, "twin_a");
    }

    #[test]
    fn least_squares_recovers_a_perfect_expert() {
        let pool = alloc::vec![ExpertCorruption::perfect("truthy")];
        let panel = quick_basin(pool, 47);
        let out = baseline_eval(&panel, 0..350, 350..500).unwrap();
        assert!((out.ls_weights[0] - 1.0).abs() < 1e-6, "weights {:?}", out.ls_weights);
        assert!(out.least_squares.mae_1h < 1e-9);
        assert!(!out.ls_ridge_fallback);
    }

    #[test]
    fn least_squares_beats_uniform_blend_on_its_own_turf() {
        let panel = quick_basin(mixed_pool(), 53);
        let train = 0..350usize;
        let out = baseline_eval(&panel, train.clone(), 350..500).unwrap();

        let targets: Vec<f64> = train.clone().map(|t| panel.observed()[t]).collect();
        let k = panel.n_experts() as f64;
        let uniform: Vec<f64> = train
            .clone()
            .map(|t| panel.experts().row(t).iter().sum::<f64>() / k)
            .collect();
        let ls: Vec<f64> = train
            .map(|t| {
                panel
                    .experts()
                    .row(t)
                    .iter()
                    .zip(&out.ls_weights)
                    .map(|(e, w)| e * w)
                    .sum::<f64>()
            })
            .collect();
        let mse_ls = mse_loss(&ls, &targets).unwrap();
        let mse_uniform = mse_loss(&uniform, &targets).unwrap();
        assert!(mse_ls <= mse_uniform + 1e-9);
    }

    #[test]
    fn duplicate_columns_trigger_the_ridge_fallback() {
        let pool = alloc::vec![
            ExpertCorruption::perfect("twin_a"),
            ExpertCorruption::perfect("twin_b"),
        ];
        let panel = quick_basin(pool, 59);
        let out = baseline_eval(&panel, 0..350, 350..500).unwrap();
        assert!(out.ls_ridge_fallback, "identical columns must detour through ridge");
        assert!(out.least_squares.mae_1h < 1e-3);
    }

    // ── regime response ──────────────────────────────────────────────

    /// Two alternating weather regimes with one specialist expert each and
    /// an explicit regime-indicator feature. The trained gate should lean
    /// toward the right specialist within each regime.
    #[test]
    fn gate_learns_regime_specialists() {
        let n = 600usize;
        let block = 50usize;
        let mut observed = alloc::vec![0.0; n];
        let mut regime = alloc::vec![0usize; n];
        for t in 0..n {
            regime[t] = (t / block) % 2;
            observed[t] = if regime[t] == 0 {
                // Convective: impulse every 10 hours over weak drizzle.
                if t % 10 == 3 {
                    7.0
                } else {
                    0.2
                }
            } else {
                // Stratiform: steady drizzle.
                1.0 + 0.3 * crate::fmath::sin(t as f64 / 5.0)
            };
        }
        let mut experts = Matrix::zeros(n, 2);
        let mut features = Matrix::zeros(n, 2);
        for t in 0..n {
            // Each specialist is perfect at home, flat-zero abroad.
            experts[(t, 0)] = if regime[t] == 0 { observed[t] } else { 0.0 };
            experts[(t, 1)] = if regime[t] == 1 { observed[t] } else { 0.0 };
            features[(t, 0)] = regime[t] as f64;
            features[(t, 1)] = ((t * 7919) % 13) as f64 / 13.0; // deterministic clutter
        }
        let panel = ForecastPanel::new(
            (0..n as i64).collect(),
            experts,
            features,
            observed,
            alloc::vec![String::from("convective"), String::from("stratiform")],
            alloc::vec![String::from("regime"), String::from("clutter")],
        )
        .unwrap();

        let config = TrainConfig {
            epochs: 40,
            hidden_dims: alloc::vec![16, 12, 8],
            seeds: alloc::vec![0, 1, 42],
            ..TrainConfig::default()
        };
        let setup = prepare(&panel, &config).unwrap();

        let mut per_seed_conv = Vec::new();
        let mut per_seed_strat = Vec::new();
        for &seed in &config.seeds {
            let (model, _) = fit(&panel, &setup, &config, seed).unwrap();
            let mut conv = (0.0, 0usize);
            let mut strat = (0.0, 0usize);
            for t in setup.test.clone() {
                let x = crate::dataset::gate_input(&panel, &setup.stats, t, false);
                let gate = model.forward(&x).unwrap();
                if regime[t] == 0 {
                    conv = (conv.0 + gate[0], conv.1 + 1);
                } else {
                    strat = (strat.0 + gate[1], strat.1 + 1);
                }
            }
            per_seed_conv.push(conv.0 / conv.1 as f64);
            per_seed_strat.push(strat.0 / strat.1 as f64);
        }
        per_seed_conv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        per_seed_strat.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Median over the three seeds, against the uninformed 1/K.
        assert!(
            per_seed_conv[1] > 0.5,
            "median convective-specialist weight {} not above 1/K",
            per_seed_conv[1]
        );
        assert!(
            per_seed_strat[1] > 0.5,
            "median stratiform-specialist weight {} not above 1/K",
            per_seed_strat[1]
        );
    }
}

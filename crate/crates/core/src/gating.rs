//! Gating network: a small dense MLP that maps the gating features to a
//! softmax distribution over experts, plus exact analytic gradients of the
//! hybrid objective and an Adam optimizer.
//!
//! Everything is 64-bit and deterministic: initialization draws from a
//! seeded stream in a fixed order, and forward/backward are pure functions
//! of their inputs.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fmath;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatingError {
    /// Fewer than two dims, or a zero width somewhere.
    BadLayerDims,
    /// Input feature vector length disagrees with the first layer.
    FeatureLength { expected: usize, got: usize },
    /// Expert-value or penalty-row length disagrees with the gate width.
    ExpertCount { expected: usize, got: usize },
    /// A non-finite value appeared in the inputs.
    NonFiniteInput,
    /// A non-finite value appeared while evaluating the given weight layer
    /// (0-based).
    NonFiniteAt { layer: usize },
    /// Gradient or optimizer shapes do not mirror the model.
    ShapeMismatch,
    /// Backward called with no samples.
    EmptyBatch,
}

impl fmt::Display for GatingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadLayerDims => write!(f, "layer dims need >= 2 entries, all positive"),
            Self::FeatureLength { expected, got } => {
                write!(f, "expected {expected} input features, got {got}")
            }
            Self::ExpertCount { expected, got } => {
                write!(f, "expected {expected} expert values, got {got}")
            }
            Self::NonFiniteInput => write!(f, "non-finite value in network input"),
            Self::NonFiniteAt { layer } => {
                write!(f, "non-finite activation at weight layer {layer}")
            }
            Self::ShapeMismatch => write!(f, "parameter shapes do not match"),
            Self::EmptyBatch => write!(f, "gradient over an empty batch"),
        }
    }
}

impl core::error::Error for GatingError {}

/// One dense layer: `out = act(x W + b)` with `weights` stored input-major
/// (rows = fan-in, cols = fan-out).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// The gate: rectified hidden layers, softmax output over K experts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GatingModel {
    pub layers: Vec<DenseLayer>,
}

impl GatingModel {
    /// Deterministic initialization: weights uniform in
    /// ±1/sqrt(fan_in), drawn layer by layer in row-major order; biases
    /// zero.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, GatingError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(GatingError::BadLayerDims);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / fmath::sqrt(fan_in as f64);
                let mut weights = Matrix::zeros(fan_in, fan_out);
                for v in weights.data_mut() {
                    *v = bound * (2.0 * rng.random::<f64>() - 1.0);
                }
                DenseLayer { weights, biases: alloc::vec![0.0; fan_out] }
            })
            .collect();
        Ok(Self { layers })
    }

    /// `[F, h1, ..., K]` recovered from the layer shapes.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = alloc::vec![self.layers[0].weights.rows()];
        dims.extend(self.layers.iter().map(|l| l.weights.cols()));
        dims
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn n_experts(&self) -> usize {
        self.layers.last().map(|l| l.weights.cols()).unwrap_or(0)
    }

    /// Gate probabilities for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, GatingError> {
        Ok(self.forward_trace(features)?.gate)
    }

    /// Forward pass keeping per-layer activations for backprop.
    fn forward_trace(&self, features: &[f64]) -> Result<Trace, GatingError> {
        if features.len() != self.n_features() {
            return Err(GatingError::FeatureLength {
                expected: self.n_features(),
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(GatingError::NonFiniteInput);
        }
        let n_layers = self.layers.len();
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        activations.push(features.to_vec());
        let mut logits = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let x = activations.last().unwrap();
            let mut out = layer.biases.clone();
            for (i, &xi) in x.iter().enumerate() {
                let wrow = layer.weights.row(i);
                for (j, o) in out.iter_mut().enumerate() {
                    *o += xi * wrow[j];
                }
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(GatingError::NonFiniteAt { layer: li });
            }
            if li + 1 == n_layers {
                logits = out;
            } else {
                for v in &mut out {
                    *v = v.max(0.0); // rectifier
                }
                activations.push(out);
            }
        }
        let gate = softmax(&logits);
        Ok(Trace { activations, gate })
    }
}

/// Max-subtracted softmax; exact one-hot when a logit dominates by enough
/// to underflow the rest.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| fmath::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

struct Trace {
    /// Input followed by each rectified hidden activation.
    activations: Vec<Vec<f64>>,
    gate: Vec<f64>,
}

/// Blend expert values under the gate: Σ p_k · E_k.
///
/// A convex combination, so the result stays within the experts' range; in
/// particular it is nonnegative whenever all expert values are.
pub fn combine(gate: &[f64], expert_values: &[f64]) -> Result<f64, GatingError> {
    if gate.len() != expert_values.len() {
        return Err(GatingError::ExpertCount { expected: gate.len(), got: expert_values.len() });
    }
    Ok(gate.iter().zip(expert_values).map(|(p, e)| p * e).sum())
}

/// One training sample as seen by the gradient: gating input, the K expert
/// forecasts at the target hour, the observed value, and the sample's
/// precomputed structural-distance row.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub features: &'a [f64],
    pub expert_values: &'a [f64],
    pub target: f64,
    pub penalty_row: &'a [f64],
}

/// Parameter gradients mirroring a model's shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &GatingModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            biases: model.layers.iter().map(|l| alloc::vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn matches(&self, model: &GatingModel) -> bool {
        self.weights.len() == model.layers.len()
            && self.biases.len() == model.layers.len()
            && self.weights.iter().zip(&model.layers).all(|(g, l)| {
                g.rows() == l.weights.rows() && g.cols() == l.weights.cols()
            })
            && self.biases.iter().zip(&model.layers).all(|(g, l)| g.len() == l.biases.len())
    }
}

/// Exact gradient of the batch-mean hybrid loss.
///
/// Per sample, with gate p, forecast Ŷ = Σ p_k E_k and residual r = Ŷ − y,
/// the gate-space gradient is g_k = (1−λ)·2r·E_k + λ·D_k where D is the
/// sample's penalty row (a constant). It flows through the softmax as
/// ∂L/∂z_j = p_j (g_j − Σ_k g_k p_k), then through the rectified dense
/// stack. The result averages over the batch.
pub fn backward(
    model: &GatingModel,
    batch: &[BatchItem<'_>],
    lambda: f64,
) -> Result<Gradients, GatingError> {
    if batch.is_empty() {
        return Err(GatingError::EmptyBatch);
    }
    let k = model.n_experts();
    let mut grads = Gradients::zeros_like(model);
    for item in batch {
        if item.expert_values.len() != k {
            return Err(GatingError::ExpertCount { expected: k, got: item.expert_values.len() });
        }
        if item.penalty_row.len() != k {
            return Err(GatingError::ExpertCount { expected: k, got: item.penalty_row.len() });
        }
        if !item.target.is_finite()
            || item.expert_values.iter().any(|v| !v.is_finite())
            || item.penalty_row.iter().any(|v| !v.is_finite())
        {
            return Err(GatingError::NonFiniteInput);
        }
        let trace = model.forward_trace(item.features)?;
        let p = &trace.gate;
        let forecast = combine(p, item.expert_values)?;
        let residual = forecast - item.target;

        // Gate-space gradient of the per-sample loss.
        let gate_grad: Vec<f64> = item
            .expert_values
            .iter()
            .zip(item.penalty_row)
            .map(|(&e, &d)| (1.0 - lambda) * 2.0 * residual * e + lambda * d)
            .collect();
        let dot: f64 = gate_grad.iter().zip(p).map(|(g, pk)| g * pk).sum();
        // Softmax Jacobian applied in one pass.
        let mut delta: Vec<f64> = p.iter().zip(&gate_grad).map(|(pk, g)| pk * (g - dot)).collect();

        // Walk the dense stack backwards; delta enters as d(loss)/d(pre-
        // activation) of the current layer.
        for li in (0..model.layers.len()).rev() {
            let x = &trace.activations[li];
            let gw = &mut grads.weights[li];
            for (i, &xi) in x.iter().enumerate() {
                let grow = gw.row_mut(i);
                for (j, &dj) in delta.iter().enumerate() {
                    grow[j] += xi * dj;
                }
            }
            for (gb, &dj) in grads.biases[li].iter_mut().zip(&delta) {
                *gb += dj;
            }
            if li > 0 {
                let w = &model.layers[li].weights;
                let mut prev = alloc::vec![0.0; w.rows()];
                for (i, pv) in prev.iter_mut().enumerate() {
                    let wrow = w.row(i);
                    *pv = delta.iter().zip(wrow).map(|(d, wv)| d * wv).sum();
                    // Rectifier gate: activation 0 means the unit was
                    // clamped, so nothing flows back through it.
                    if x[i] == 0.0 {
                        *pv = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads.weights {
        for v in g.data_mut() {
            *v *= scale;
        }
    }
    for b in &mut grads.biases {
        for v in b {
            *v *= scale;
        }
    }
    Ok(grads)
}

/// Adam accumulators and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m_w: Vec<Matrix>,
    v_w: Vec<Matrix>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(model: &GatingModel, lr: f64) -> Self {
        let zw = || {
            model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect::<Vec<_>>()
        };
        let zb = || {
            model.layers.iter().map(|l| alloc::vec![0.0; l.biases.len()]).collect::<Vec<_>>()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_w: zw(),
            v_w: zw(),
            m_b: zb(),
            v_b: zb(),
        }
    }

    fn matches(&self, model: &GatingModel) -> bool {
        self.m_w.len() == model.layers.len()
            && self
                .m_w
                .iter()
                .zip(&model.layers)
                .all(|(m, l)| m.rows() == l.weights.rows() && m.cols() == l.weights.cols())
            && self.m_b.iter().zip(&model.layers).all(|(m, l)| m.len() == l.biases.len())
    }
}

/// One bias-corrected Adam update in place. Rejects the update if any
/// parameter would leave the finite range.
pub fn adam_step(
    model: &mut GatingModel,
    state: &mut OptimizerState,
    grads: &Gradients,
) -> Result<(), GatingError> {
    if !grads.matches(model) || !state.matches(model) {
        return Err(GatingError::ShapeMismatch);
    }
    state.step += 1;
    let hp = AdamScalars {
        lr: state.lr,
        beta1: state.beta1,
        beta2: state.beta2,
        epsilon: state.epsilon,
        bc1: 1.0 - powi(state.beta1, state.step),
        bc2: 1.0 - powi(state.beta2, state.step),
    };
    for (li, layer) in model.layers.iter_mut().enumerate() {
        update_block(
            layer.weights.data_mut(),
            grads.weights[li].data(),
            state.m_w[li].data_mut(),
            state.v_w[li].data_mut(),
            &hp,
        );
        update_block(
            &mut layer.biases,
            &grads.biases[li],
            &mut state.m_b[li],
            &mut state.v_b[li],
            &hp,
        );
        if layer.weights.data().iter().any(|v| !v.is_finite())
            || layer.biases.iter().any(|v| !v.is_finite())
        {
            return Err(GatingError::NonFiniteAt { layer: li });
        }
    }
    Ok(())
}

struct AdamScalars {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
}

// beta^n by squaring; exact enough for the step counts a training run sees
// and identical under std and libm builds.
fn powi(base: f64, mut n: u64) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    while n > 0 {
        if n & 1 == 1 {
            acc *= b;
        }
        b *= b;
        n >>= 1;
    }
    acc
}

fn update_block(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], hp: &AdamScalars) {
    for i in 0..params.len() {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grads[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
        let m_hat = m[i] / hp.bc1;
        let v_hat = v[i] / hp.bc2;
        params[i] -= hp.lr * m_hat / (fmath::sqrt(v_hat) + hp.epsilon);
    }
}

//! Dense dueling value network: a shared rectified-linear trunk feeding a
//! scalar state-value head and a per-action advantage head, recombined by
//! mean-centered addition. Gradients are exact reverse-mode derivatives of
//! the mean squared temporal-difference error, computed by hand; parameters
//! are updated with plain SGD. Everything runs in double precision so the
//! finite-difference checker in [`check`] is meaningful.

mod check;
mod io;

pub use check::{random_check, GradCheckReport};
pub use io::NetIoError;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{EnvConfig, UavState};
use crate::util::argmax;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("layer widths must be at least 1")]
    ZeroWidthLayer,
    #[error("network must expose at least one action")]
    NoActions,
    #[error("input length {got} does not match network input dimension {expected}")]
    InputDimMismatch { expected: usize, got: usize },
    #[error("advantage list is empty")]
    EmptyAdvantages,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("action index {index} out of range ({num_actions} actions)")]
    ActionOutOfRange { index: usize, num_actions: usize },
    #[error("step size must be positive and finite")]
    BadStepSize,
    #[error("gradient shape does not match parameters")]
    ShapeMismatch,
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("non-finite parameter after update")]
    NonFiniteParameter,
}

/// Layer sizes: a fixed-width input, rectified-linear trunk layers, one
/// value output and `num_actions` advantage outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetArchitecture {
    pub input_dim: usize,
    pub trunk: Vec<usize>,
    pub num_actions: usize,
}

impl NetArchitecture {
    pub fn new(input_dim: usize, trunk: Vec<usize>, num_actions: usize) -> Result<Self, NetError> {
        let arch = Self {
            input_dim,
            trunk,
            num_actions,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.trunk.contains(&0) {
            return Err(NetError::ZeroWidthLayer);
        }
        if self.num_actions == 0 {
            return Err(NetError::NoActions);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut prev = self.input_dim;
        for &width in &self.trunk {
            count += width * prev + width;
            prev = width;
        }
        count += prev + 1; // value head
        count += self.num_actions * prev + self.num_actions; // advantage head
        count
    }
}

impl Default for NetArchitecture {
    /// Three state features into a 64-64 trunk with one value output and
    /// three speed-level advantages.
    fn default() -> Self {
        Self {
            input_dim: 3,
            trunk: vec![64, 64],
            num_actions: 3,
        }
    }
}

/// One affine layer, weights row-major `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = self.biases.clone();
        for (o, out_val) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            *out_val += acc;
        }
        out
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim
    }
}

/// Full parameter set of one dueling network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: NetArchitecture,
    pub trunk: Vec<Layer>,
    pub value_head: Layer,
    pub advantage_head: Layer,
}

/// Forward-pass result. `activations` retains the input and each trunk
/// layer's rectified output for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub q: Vec<f64>,
    pub value: f64,
    pub advantages: Vec<f64>,
    activations: Vec<Vec<f64>>,
}

impl Forward {
    /// Rectified outputs of each trunk layer, input excluded.
    pub fn trunk_activations(&self) -> &[Vec<f64>] {
        &self.activations[1..]
    }
}

/// One regression target for the squared TD error: only the chosen action's
/// Q-value contributes to the loss.
#[derive(Debug, Clone, Copy)]
pub struct TdSample<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

impl NetParams {
    /// Fan-in-scaled uniform weights, zero biases, deterministic per seed.
    pub fn init(arch: NetArchitecture, seed: u64) -> Result<Self, NetError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(arch)?;
        for layer in params
            .trunk
            .iter_mut()
            .chain([&mut params.value_head, &mut params.advantage_head])
        {
            let limit = 1.0 / (layer.in_dim as f64).sqrt();
            for w in layer.weights.iter_mut() {
                *w = (2.0 * rng.random::<f64>() - 1.0) * limit;
            }
        }
        Ok(params)
    }

    /// All-zero parameters; mainly a test hook (zero parameters give equal
    /// Q-values across actions).
    pub fn zeros(arch: NetArchitecture) -> Result<Self, NetError> {
        arch.validate()?;
        let mut trunk = Vec::with_capacity(arch.trunk.len());
        let mut prev = arch.input_dim;
        for &width in &arch.trunk {
            trunk.push(Layer::zeros(prev, width));
            prev = width;
        }
        Ok(Self {
            value_head: Layer::zeros(prev, 1),
            advantage_head: Layer::zeros(prev, arch.num_actions),
            arch,
            trunk,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut copy = self.clone();
        for layer in copy
            .trunk
            .iter_mut()
            .chain([&mut copy.value_head, &mut copy.advantage_head])
        {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        copy
    }

    pub fn is_finite(&self) -> bool {
        self.trunk
            .iter()
            .chain([&self.value_head, &self.advantage_head])
            .all(|layer| {
                layer.weights.iter().all(|w| w.is_finite())
                    && layer.biases.iter().all(|b| b.is_finite())
            })
    }

    /// Trunk, value head and advantage head applied to one feature vector.
    pub fn forward(&self, input: &[f64]) -> Result<Forward, NetError> {
        if input.len() != self.arch.input_dim {
            return Err(NetError::InputDimMismatch {
                expected: self.arch.input_dim,
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.trunk.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.trunk {
            let mut out = layer.affine(activations.last().unwrap());
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            activations.push(out);
        }
        let hidden = activations.last().unwrap();
        let value = self.value_head.affine(hidden)[0];
        let advantages = self.advantage_head.affine(hidden);
        let q = combine(value, &advantages)?;
        Ok(Forward {
            q,
            value,
            advantages,
            activations,
        })
    }

    /// Q-values only.
    pub fn q_values(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(self.forward(input)?.q)
    }

    /// Greedy action under the current parameters, ties to the lowest index.
    pub fn greedy_action(&self, input: &[f64]) -> Result<usize, NetError> {
        Ok(argmax(&self.q_values(input)?))
    }
}

/// Mean-centered head combination: `q[a] = v + adv[a] − mean(adv)`. Adding a
/// constant to every advantage leaves the result unchanged, which pins down
/// the otherwise unidentifiable value/advantage split.
pub fn combine(value: f64, advantages: &[f64]) -> Result<Vec<f64>, NetError> {
    if advantages.is_empty() {
        return Err(NetError::EmptyAdvantages);
    }
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    Ok(advantages.iter().map(|a| value + a - mean).collect())
}

/// Mean squared error over the batch, restricted per sample to the chosen
/// action's Q-value.
pub(crate) fn batch_loss(params: &NetParams, batch: &[TdSample<'_>]) -> Result<f64, NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let mut total = 0.0;
    for sample in batch {
        if sample.action >= params.arch.num_actions {
            return Err(NetError::ActionOutOfRange {
                index: sample.action,
                num_actions: params.arch.num_actions,
            });
        }
        let forward = params.forward(sample.input)?;
        let residual = sample.target - forward.q[sample.action];
        total += residual * residual;
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its exact gradient with respect to every parameter, via the
/// chain rule back through the head combination, both heads and the trunk.
pub fn loss_and_gradient(
    params: &NetParams,
    batch: &[TdSample<'_>],
) -> Result<(f64, NetParams), NetError> {
    if batch.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let num_actions = params.arch.num_actions;
    let batch_scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;

    for sample in batch {
        if sample.action >= num_actions {
            return Err(NetError::ActionOutOfRange {
                index: sample.action,
                num_actions,
            });
        }
        let forward = params.forward(sample.input)?;
        let residual = sample.target - forward.q[sample.action];
        loss += residual * residual * batch_scale;

        // d(mean loss)/d(q[action]); other actions do not appear in the loss.
        let g_q = -2.0 * residual * batch_scale;

        // Through the combination: q[a] = v + adv[a] − mean(adv).
        let g_value = g_q;
        let inv_a = 1.0 / num_actions as f64;
        let hidden = forward.activations.last().unwrap();
        let hidden_dim = hidden.len();
        let mut g_hidden = vec![0.0; hidden_dim];

        for k in 0..hidden_dim {
            grads.value_head.weights[k] += g_value * hidden[k];
            g_hidden[k] += params.value_head.weights[k] * g_value;
        }
        grads.value_head.biases[0] += g_value;

        for j in 0..num_actions {
            let g_adv = if j == sample.action {
                g_q * (1.0 - inv_a)
            } else {
                -g_q * inv_a
            };
            grads.advantage_head.biases[j] += g_adv;
            let row = &params.advantage_head.weights[j * hidden_dim..(j + 1) * hidden_dim];
            let grow = &mut grads.advantage_head.weights[j * hidden_dim..(j + 1) * hidden_dim];
            for k in 0..hidden_dim {
                grow[k] += g_adv * hidden[k];
                g_hidden[k] += row[k] * g_adv;
            }
        }

        // Back down the trunk; the rectifier gates on cached activations
        // (trunk layer i consumed activations[i] and produced activations[i+1]).
        let mut g_out = g_hidden;
        for (i, (layer, glayer)) in params
            .trunk
            .iter()
            .zip(grads.trunk.iter_mut())
            .enumerate()
            .rev()
        {
            let layer_input = &forward.activations[i];
            let output = &forward.activations[i + 1];
            let mut g_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                if output[o] <= 0.0 {
                    continue;
                }
                let g_pre = g_out[o];
                glayer.biases[o] += g_pre;
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let grow = &mut glayer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for k in 0..layer.in_dim {
                    grow[k] += g_pre * layer_input[k];
                    g_in[k] += row[k] * g_pre;
                }
            }
            g_out = g_in;
        }
    }
    Ok((loss, grads))
}

/// Plain gradient-descent update: every parameter moves by `−eta` times its
/// gradient. Rejects non-finite gradients and surfaces non-finite results.
pub fn sgd_step(params: &mut NetParams, grads: &NetParams, eta: f64) -> Result<(), NetError> {
    if eta <= 0.0 || !eta.is_finite() {
        return Err(NetError::BadStepSize);
    }
    if params.arch != grads.arch {
        return Err(NetError::ShapeMismatch);
    }
    for (layer, glayer) in params
        .trunk
        .iter_mut()
        .chain([&mut params.value_head, &mut params.advantage_head])
        .zip(
            grads
                .trunk
                .iter()
                .chain([&grads.value_head, &grads.advantage_head]),
        )
    {
        if !layer.same_shape(glayer) {
            return Err(NetError::ShapeMismatch);
        }
        for (p, g) in layer
            .weights
            .iter_mut()
            .chain(layer.biases.iter_mut())
            .zip(glayer.weights.iter().chain(glayer.biases.iter()))
        {
            if !g.is_finite() {
                return Err(NetError::NonFiniteGradient);
            }
            *p -= eta * g;
            if !p.is_finite() {
                return Err(NetError::NonFiniteParameter);
            }
        }
    }
    Ok(())
}

/// Network input for a UAV state: cell, in-cell location and energy scaled
/// to `[0, 1]`; the charging sentinel keeps its `-1` signs.
pub fn featurize(state: &UavState, config: &EnvConfig) -> [f64; 3] {
    if state.is_charging() {
        return [-1.0, -1.0, -1.0];
    }
    let positions = config.positions_per_cell();
    let location_scale = if positions > 1 {
        f64::from(positions - 1)
    } else {
        1.0
    };
    [
        f64::from(state.cell as u32) / f64::from(config.num_cells),
        f64::from(state.location as u32) / location_scale,
        f64::from(state.energy as u32) / f64::from(config.battery_capacity),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> NetArchitecture {
        NetArchitecture::new(3, vec![2], 3).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = NetParams::init(NetArchitecture::default(), 5).unwrap();
        let b = NetParams::init(NetArchitecture::default(), 5).unwrap();
        let c = NetParams::init(NetArchitecture::default(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.trunk.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_params_give_uniform_q() {
        let params = NetParams::zeros(tiny_arch()).unwrap();
        let q = params.q_values(&[0.3, -0.7, 1.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn combine_matches_hand_values() {
        assert_eq!(combine(2.0, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(combine(0.5, &[4.0, 4.0, 4.0]).unwrap(), vec![0.5, 0.5, 0.5]);
        assert_eq!(combine(0.0, &[0.0, 0.0, 3.0]).unwrap(), vec![-1.0, -1.0, 2.0]);
        assert!(matches!(combine(1.0, &[]), Err(NetError::EmptyAdvantages)));
    }

    #[test]
    fn forward_matches_hand_computed_network() {
        // Trunk 3→2: rows (1,0,0) bias 0.1 and (0,1,−1) bias 0.
        // x = (0.5, 0.2, 1.0) → pre (0.6, −0.8) → relu (0.6, 0).
        // Value head (1,1) bias 0.25 → v = 0.85.
        // Advantage rows (1,0), (0,1), (−1,0) biases (0,0,0.3)
        //   → adv (0.6, 0, −0.3), mean 0.1 → q = (1.35, 0.75, 0.45).
        let mut params = NetParams::zeros(tiny_arch()).unwrap();
        params.trunk[0].weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, -1.0];
        params.trunk[0].biases = vec![0.1, 0.0];
        params.value_head.weights = vec![1.0, 1.0];
        params.value_head.biases = vec![0.25];
        params.advantage_head.weights = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        params.advantage_head.biases = vec![0.0, 0.0, 0.3];

        let fwd = params.forward(&[0.5, 0.2, 1.0]).unwrap();
        assert!((fwd.value - 0.85).abs() < 1e-15);
        for (got, want) in fwd.q.iter().zip([1.35, 0.75, 0.45]) {
            assert!((got - want).abs() < 1e-15, "q = {:?}", fwd.q);
        }
    }

    #[test]
    fn forward_is_pure_and_checks_shapes() {
        let params = NetParams::init(tiny_arch(), 11).unwrap();
        let x = [0.2, 0.4, 0.9];
        assert_eq!(params.q_values(&x).unwrap(), params.q_values(&x).unwrap());
        assert!(matches!(
            params.forward(&[1.0, 2.0]),
            Err(NetError::InputDimMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn q_centering_invariants() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let v = rng.random::<f64>() * 10.0 - 5.0;
            let n = rng.random_range(1..=8usize);
            let adv: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
            let k = rng.random::<f64>() * 6.0 - 3.0;
            let shifted: Vec<f64> = adv.iter().map(|a| a + k).collect();
            let q = combine(v, &adv).unwrap();
            let q_shifted = combine(v, &shifted).unwrap();
            for (a, b) in q.iter().zip(&q_shifted) {
                assert!((a - b).abs() < 1e-12);
            }
            let mean_centered: f64 = q.iter().map(|qa| qa - v).sum::<f64>() / n as f64;
            assert!(mean_centered.abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_predictions_give_zero_loss_and_gradients() {
        let params = NetParams::init(tiny_arch(), 3).unwrap();
        let x0 = [0.1, 0.5, 0.8];
        let x1 = [0.9, 0.0, 0.2];
        let q0 = params.q_values(&x0).unwrap();
        let q1 = params.q_values(&x1).unwrap();
        let batch = [
            TdSample { input: &x0, action: 0, target: q0[0] },
            TdSample { input: &x1, action: 2, target: q1[2] },
        ];
        let (loss, grads) = loss_and_gradient(&params, &batch).unwrap();
        assert_eq!(loss, 0.0);
        for layer in grads.trunk.iter().chain([&grads.value_head, &grads.advantage_head]) {
            assert!(layer.weights.iter().all(|&g| g == 0.0));
            assert!(layer.biases.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn single_sample_loss_is_the_squared_residual() {
        let params = NetParams::init(tiny_arch(), 4).unwrap();
        let x = [0.4, 0.6, 0.1];
        let q = params.q_values(&x).unwrap();
        let batch = [TdSample { input: &x, action: 1, target: q[1] + 2.5 }];
        let (loss, _) = loss_and_gradient(&params, &batch).unwrap();
        assert!((loss - 6.25).abs() < 1e-12);
        assert!(matches!(
            loss_and_gradient(&params, &[]),
            Err(NetError::EmptyBatch)
        ));
    }

    #[test]
    fn sgd_step_applies_the_update_rule() {
        let mut params = NetParams::zeros(tiny_arch()).unwrap();
        params.value_head.weights[0] = 1.0;
        let mut grads = params.zeros_like();
        grads.value_head.weights[0] = 2.0;
        sgd_step(&mut params, &grads, 0.1).unwrap();
        assert!((params.value_head.weights[0] - 0.8).abs() < 1e-15);

        let zero_grads = params.zeros_like();
        let before = params.clone();
        sgd_step(&mut params, &zero_grads, 0.1).unwrap();
        assert_eq!(params, before);

        let mut bad = params.zeros_like();
        bad.value_head.weights[0] = f64::NAN;
        assert!(matches!(
            sgd_step(&mut params, &bad, 0.1),
            Err(NetError::NonFiniteGradient)
        ));
        assert!(matches!(
            sgd_step(&mut params, &zero_grads, 0.0),
            Err(NetError::BadStepSize)
        ));
    }

    #[test]
    fn featurize_scales_and_preserves_the_sentinel() {
        let config = EnvConfig::default();
        let f = featurize(&UavState::working(4, 11, 120), &config);
        assert_eq!(f, [1.0, 1.0, 1.0]);
        let f = featurize(&UavState::working(1, 0, 0), &config);
        assert_eq!(f, [0.25, 0.0, 0.0]);
        assert_eq!(
            featurize(&UavState::CHARGING, &config),
            [-1.0, -1.0, -1.0]
        );
    }
}

//! Finite-difference verification of the analytic gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{batch_loss, loss_and_gradient, NetArchitecture, NetError, NetParams, TdSample};

/// Outcome of one or more gradient comparisons.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub params_checked: usize,
    /// Slots excluded because the probe interval crossed a rectifier kink,
    /// where the loss is not differentiable and central differences do not
    /// estimate the gradient.
    pub kinks_skipped: usize,
}

/// Rectifier on/off pattern over the whole batch; a change between two
/// parameter points means the loss has a kink between them.
fn relu_pattern(params: &NetParams, batch: &[TdSample<'_>]) -> Result<Vec<bool>, NetError> {
    let mut pattern = Vec::new();
    for sample in batch {
        let forward = params.forward(sample.input)?;
        for layer_output in forward.trunk_activations() {
            pattern.extend(layer_output.iter().map(|&v| v > 0.0));
        }
    }
    Ok(pattern)
}

fn layer_count(params: &NetParams) -> usize {
    params.trunk.len() + 2
}

fn layer_len(params: &NetParams, layer_id: usize) -> usize {
    let layer = if layer_id < params.trunk.len() {
        &params.trunk[layer_id]
    } else if layer_id == params.trunk.len() {
        &params.value_head
    } else {
        &params.advantage_head
    };
    layer.weights.len() + layer.biases.len()
}

fn nudge(params: &mut NetParams, layer_id: usize, slot: usize, delta: f64) {
    let trunk_len = params.trunk.len();
    let layer = if layer_id < trunk_len {
        &mut params.trunk[layer_id]
    } else if layer_id == trunk_len {
        &mut params.value_head
    } else {
        &mut params.advantage_head
    };
    if slot < layer.weights.len() {
        layer.weights[slot] += delta;
    } else {
        layer.biases[slot - layer.weights.len()] += delta;
    }
}

fn read_grad(grads: &NetParams, layer_id: usize, slot: usize) -> f64 {
    let layer = if layer_id < grads.trunk.len() {
        &grads.trunk[layer_id]
    } else if layer_id == grads.trunk.len() {
        &grads.value_head
    } else {
        &grads.advantage_head
    };
    if slot < layer.weights.len() {
        layer.weights[slot]
    } else {
        layer.biases[slot - layer.weights.len()]
    }
}

/// Compares the analytic gradient of the batch loss against central finite
/// differences with the given step, for every parameter.
pub fn finite_difference_check(
    params: &NetParams,
    batch: &[TdSample<'_>],
    step: f64,
) -> Result<GradCheckReport, NetError> {
    let (_, grads) = loss_and_gradient(params, batch)?;
    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut checked = 0usize;
    let mut kinks = 0usize;

    for layer_id in 0..layer_count(params) {
        for slot in 0..layer_len(params, layer_id) {
            nudge(&mut probe, layer_id, slot, step);
            let loss_plus = batch_loss(&probe, batch)?;
            nudge(&mut probe, layer_id, slot, -2.0 * step);
            let loss_minus = batch_loss(&probe, batch)?;
            nudge(&mut probe, layer_id, slot, step);

            let numeric = (loss_plus - loss_minus) / (2.0 * step);
            let analytic = read_grad(&grads, layer_id, slot);
            let scale = numeric.abs().max(analytic.abs()).max(1e-8);
            let rel = (numeric - analytic).abs() / scale;
            if rel > 1e-6 {
                // Large disagreements are re-examined: if the probe interval
                // flips a rectifier, the comparison is void at this slot.
                nudge(&mut probe, layer_id, slot, step);
                let pattern_plus = relu_pattern(&probe, batch)?;
                nudge(&mut probe, layer_id, slot, -2.0 * step);
                let pattern_minus = relu_pattern(&probe, batch)?;
                nudge(&mut probe, layer_id, slot, step);
                if pattern_plus != pattern_minus {
                    kinks += 1;
                    continue;
                }
            }
            max_rel = max_rel.max(rel);
            sum_rel += rel;
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        mean_rel_error: sum_rel / checked.max(1) as f64,
        params_checked: checked,
        kinks_skipped: kinks,
    })
}

/// Repeats the finite-difference comparison over `draws` random parameter
/// sets and batches on the given architecture, aggregating the worst case.
pub fn random_check(
    arch: &NetArchitecture,
    draws: usize,
    batch_size: usize,
    seed: u64,
) -> Result<GradCheckReport, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let mut mean_acc = 0.0f64;
    let mut checked = 0usize;

    let mut kinks = 0usize;
    for draw in 0..draws {
        let params = NetParams::init(arch.clone(), seed.wrapping_add(draw as u64 + 1))?;
        let inputs: Vec<Vec<f64>> = (0..batch_size)
            .map(|_| {
                (0..arch.input_dim)
                    .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                    .collect()
            })
            .collect();
        // Targets sit within O(1) of the current predictions, keeping the
        // loss near unit scale; a much larger loss would push the central
        // difference into float cancellation for the smallest gradients.
        let batch: Vec<TdSample<'_>> = inputs
            .iter()
            .map(|input| {
                let action = rng.random_range(0..arch.num_actions);
                let offset = 4.0 * rng.random::<f64>() - 2.0;
                let prediction = params.q_values(input).expect("validated shapes")[action];
                TdSample {
                    input,
                    action,
                    target: prediction + offset,
                }
            })
            .collect();
        let report = finite_difference_check(&params, &batch, 1e-5)?;
        max_rel = max_rel.max(report.max_rel_error);
        mean_acc += report.mean_rel_error;
        checked += report.params_checked;
        kinks += report.kinks_skipped;
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        mean_rel_error: mean_acc / draws.max(1) as f64,
        params_checked: checked,
        kinks_skipped: kinks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_finite_differences_on_small_nets() {
        for (trunk, actions, seed) in [
            (vec![5, 4], 3usize, 1u64),
            (vec![6], 2, 2),
            (vec![4, 4, 4], 4, 3),
        ] {
            let arch = NetArchitecture::new(3, trunk, actions).unwrap();
            let report = random_check(&arch, 20, 4, seed).unwrap();
            assert!(
                report.max_rel_error < 1e-4,
                "arch {arch:?}: max rel error {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn report_counts_every_parameter() {
        let arch = NetArchitecture::new(3, vec![5], 2).unwrap();
        let report = random_check(&arch, 2, 3, 7).unwrap();
        assert_eq!(
            report.params_checked + report.kinks_skipped,
            2 * arch.param_count()
        );
    }
}

//! Finite-difference validation of the backward passes.
//!
//! The checker compares every parameter's analytic gradient against a
//! central difference of the cross-entropy loss. It requires a network
//! without dropout layers so both passes traverse the same function.

use crate::error::Result;
use crate::nn::layers::{softmax_xent, softmax_xent_backward};
use crate::nn::tensor::Tensor;
use crate::nn::Network;
use crate::rng::SeededRng;

/// Cross-entropy loss of the network on one (input, label) pair,
/// dropout inactive.
pub fn loss(net: &Network, input: &Tensor, label: usize) -> Result<f64> {
    let logits = net.forward_infer(input.clone())?;
    Ok(softmax_xent(&logits, label)?.0)
}

/// Backpropagated gradients for one sample, flattened in parameter order.
pub fn analytic_gradients(net: &mut Network, input: &Tensor, label: usize) -> Result<Vec<f64>> {
    assert!(
        !net.has_dropout(),
        "gradient checking requires a dropout-free network"
    );
    net.zero_grads();
    // The rng is untouched because no layer draws from it here.
    let mut rng = SeededRng::new(0);
    let (logits, tape) = net.forward_train(input.clone(), &mut rng)?;
    let (_, probs) = softmax_xent(&logits, label)?;
    let grad = softmax_xent_backward(&probs, label, 1.0);
    net.backward(tape, grad)?;
    Ok(net.grads_flat())
}

/// Central finite differences over every parameter.
pub fn numeric_gradients(
    net: &mut Network,
    input: &Tensor,
    label: usize,
    h: f64,
) -> Result<Vec<f64>> {
    let params = net.params_flat();
    let mut grads = Vec::with_capacity(params.len());
    for (i, &orig) in params.iter().enumerate() {
        net.param_set(i, orig + h);
        let lp = loss(net, input, label)?;
        net.param_set(i, orig - h);
        let lm = loss(net, input, label)?;
        net.param_set(i, orig);
        grads.push((lp - lm) / (2.0 * h));
    }
    Ok(grads)
}

/// max over parameters of |a-n| / max(|a|, |n|, 1e-8).
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Runs the full check and returns the max relative error.
pub fn gradient_check(net: &mut Network, input: &Tensor, label: usize, h: f64) -> Result<f64> {
    let analytic = analytic_gradients(net, input, label)?;
    let numeric = numeric_gradients(net, input, label, h)?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Negative control for the checker itself: rotates the gradient vector by
/// one slot, simulating an off-by-one indexing bug in a backward pass. A
/// healthy checker must flag the result.
pub fn inject_off_by_one(grads: &mut [f64]) {
    grads.rotate_right(1);
}

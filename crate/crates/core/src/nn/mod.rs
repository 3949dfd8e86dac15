//! Minimal neural-network stack: tensors, layers, SGD with momentum,
//! and finite-difference gradient checking.

pub mod gradcheck;
pub mod layers;
pub mod sgd;
pub mod tensor;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use layers::{relu_backward, relu_forward, Conv2d, Dense, Dropout, MaxPool};
use sgd::{sgd_momentum_step, SgdConfig};
use tensor::Tensor;

pub use layers::{softmax, softmax_xent, softmax_xent_backward};

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool(MaxPool),
    Dense(Dense),
    Dropout(Dropout),
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }
}

/// Per-layer state captured by a training forward pass, consumed by
/// [`Network::backward`]. `input` is the tensor the layer saw.
pub struct TapeEntry {
    input: Tensor,
    aux: Aux,
}

enum Aux {
    None,
    Pool(Vec<u32>),
    Dropout(Vec<f64>),
}

/// An ordered stack of layers ending in raw logits. The softmax +
/// cross-entropy head lives in [`layers::softmax_xent`]; keeping it out of
/// the stack lets the backward pass start from the fused, numerically
/// stable gradient.
#[derive(Clone, Debug)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Dropout(_)))
    }

    /// Inference pass: dropout is the identity.
    pub fn forward_infer(&self, x: Tensor) -> Result<Tensor> {
        let mut cur = x;
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv2d(c) => c.forward(&cur)?,
                Layer::Relu => relu_forward(&cur),
                Layer::MaxPool(p) => p.forward(&cur)?.0,
                Layer::Dense(d) => d.forward(&cur)?,
                Layer::Dropout(_) => cur,
            };
        }
        Ok(cur)
    }

    /// Training pass. Returns logits plus the tape needed for backward.
    /// Dropout draws exactly `numel` values per dropout layer from `rng`.
    pub fn forward_train(&self, x: Tensor, rng: &mut SeededRng) -> Result<(Tensor, Vec<TapeEntry>)> {
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let (out, aux) = match layer {
                Layer::Conv2d(c) => (c.forward(&cur)?, Aux::None),
                Layer::Relu => (relu_forward(&cur), Aux::None),
                Layer::MaxPool(p) => {
                    let (out, argmax) = p.forward(&cur)?;
                    (out, Aux::Pool(argmax))
                }
                Layer::Dense(d) => (d.forward(&cur)?, Aux::None),
                Layer::Dropout(dr) => {
                    let (out, mask) = dr.forward_train(&cur, rng);
                    (out, Aux::Dropout(mask))
                }
            };
            tape.push(TapeEntry { input: cur, aux });
            cur = out;
        }
        Ok((cur, tape))
    }

    /// Accumulates parameter gradients for one sample into the layers'
    /// gradient buffers (summation, so batch averaging is done by scaling
    /// the logit gradient). Returns the gradient with respect to the input.
    pub fn backward(&mut self, tape: Vec<TapeEntry>, grad_logits: Tensor) -> Result<Tensor> {
        if tape.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(
                "tape length does not match layer count".into(),
            ));
        }
        let mut grad = grad_logits;
        for (layer, entry) in self.layers.iter_mut().zip(tape).rev() {
            grad = match (layer, entry.aux) {
                (Layer::Conv2d(c), Aux::None) => c.backward_acc(&entry.input, &grad)?,
                (Layer::Relu, Aux::None) => relu_backward(&grad, &entry.input),
                (Layer::MaxPool(_), Aux::Pool(argmax)) => {
                    MaxPool::backward(&grad, &argmax, entry.input.shape())?
                }
                (Layer::Dense(d), Aux::None) => d.backward_acc(&entry.input, &grad)?,
                (Layer::Dropout(_), Aux::Dropout(mask)) => Dropout::backward(&grad, &mask),
                _ => {
                    return Err(Error::ShapeMismatch(
                        "tape entry does not match its layer".into(),
                    ))
                }
            };
        }
        Ok(grad)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    c.grad_weights.data_mut().fill(0.0);
                    c.grad_biases.data_mut().fill(0.0);
                }
                Layer::Dense(d) => {
                    d.grad_weights.data_mut().fill(0.0);
                    d.grad_biases.data_mut().fill(0.0);
                }
                _ => {}
            }
        }
    }

    /// Applies one momentum update from the accumulated gradients.
    pub fn sgd_step(&mut self, cfg: &SgdConfig) -> Result<()> {
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    sgd_momentum_step(
                        c.weights.data_mut(),
                        c.grad_weights.data(),
                        c.vel_weights.data_mut(),
                        cfg,
                    )?;
                    sgd_momentum_step(
                        c.biases.data_mut(),
                        c.grad_biases.data(),
                        c.vel_biases.data_mut(),
                        cfg,
                    )?;
                }
                Layer::Dense(d) => {
                    sgd_momentum_step(
                        d.weights.data_mut(),
                        d.grad_weights.data(),
                        d.vel_weights.data_mut(),
                        cfg,
                    )?;
                    sgd_momentum_step(
                        d.biases.data_mut(),
                        d.grad_biases.data(),
                        d.vel_biases.data_mut(),
                        cfg,
                    )?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Parameters flattened in layer order, weights before biases.
    /// The same order is used by the gradient checker and the model file.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.extend_from_slice(c.weights.data());
                    out.extend_from_slice(c.biases.data());
                }
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights.data());
                    out.extend_from_slice(d.biases.data());
                }
                _ => {}
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            for tensor in trainable_tensors(layer) {
                let n = tensor.numel();
                tensor.data_mut().copy_from_slice(&params[off..off + n]);
                off += n;
            }
        }
        Ok(())
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.extend_from_slice(c.grad_weights.data());
                    out.extend_from_slice(c.grad_biases.data());
                }
                Layer::Dense(d) => {
                    out.extend_from_slice(d.grad_weights.data());
                    out.extend_from_slice(d.grad_biases.data());
                }
                _ => {}
            }
        }
        out
    }

    /// Overwrites the parameter at flat index `idx`.
    pub fn param_set(&mut self, idx: usize, value: f64) {
        let mut off = 0;
        for layer in &mut self.layers {
            for tensor in trainable_tensors(layer) {
                let n = tensor.numel();
                if idx < off + n {
                    tensor.data_mut()[idx - off] = value;
                    return;
                }
                off += n;
            }
        }
        panic!("parameter index {idx} out of range");
    }

    /// Snaps all parameters to f32-representable values. Called when a
    /// model is finalized so that the f32 file format round-trips exactly.
    pub fn quantize_f32(&mut self) {
        for layer in &mut self.layers {
            for tensor in trainable_tensors(layer) {
                tensor.quantize_f32();
            }
        }
    }
}

fn trainable_tensors(layer: &mut Layer) -> Vec<&mut Tensor> {
    match layer {
        Layer::Conv2d(c) => vec![&mut c.weights, &mut c.biases],
        Layer::Dense(d) => vec![&mut d.weights, &mut d.biases],
        _ => vec![],
    }
}

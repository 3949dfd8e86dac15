//! Network layers with explicit forward and backward passes.
//!
//! Convolution is valid (no padding) cross-correlation with stride 1 over
//! activations shaped (channels, height, width); height indexes frequency
//! and width indexes time. Backward passes accumulate parameter gradients
//! so a mini batch can sum contributions without temporaries.

use crate::error::{Error, Result};
use crate::nn::tensor::{dims3, Tensor};
use crate::rng::SeededRng;

/// Kaiming-normal standard deviation for ReLU stacks.
fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

fn init_weights(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor {
    let std = he_std(fan_in);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| std * rng.normal()).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// (out_channels, in_channels, kernel_h, kernel_w)
    pub weights: Tensor,
    /// (out_channels)
    pub biases: Tensor,
    pub grad_weights: Tensor,
    pub grad_biases: Tensor,
    pub vel_weights: Tensor,
    pub vel_biases: Tensor,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel_h, kernel_w];
        let fan_in = in_channels * kernel_h * kernel_w;
        Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            weights: init_weights(&shape, fan_in, rng),
            biases: Tensor::zeros(&[out_channels]),
            grad_weights: Tensor::zeros(&shape),
            grad_biases: Tensor::zeros(&[out_channels]),
            vel_weights: Tensor::zeros(&shape),
            vel_biases: Tensor::zeros(&[out_channels]),
        }
    }

    /// Rebuilds a layer from stored weights (out, in, kh, kw) and biases.
    pub fn from_params(weights: Tensor, biases: Tensor) -> Self {
        let shape = weights.shape().to_vec();
        let (out_channels, in_channels, kernel_h, kernel_w) =
            (shape[0], shape[1], shape[2], shape[3]);
        assert_eq!(biases.numel(), out_channels);
        Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            weights,
            biases,
            grad_weights: Tensor::zeros(&shape),
            grad_biases: Tensor::zeros(&[out_channels]),
            vel_weights: Tensor::zeros(&shape),
            vel_biases: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.numel() + self.biases.numel()
    }

    fn out_dims(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = dims3(x)?;
        if c != self.in_channels || h < self.kernel_h || w < self.kernel_w {
            return Err(Error::ShapeMismatch(format!(
                "conv {}x{}x{} kernel cannot consume input {:?}",
                self.in_channels,
                self.kernel_h,
                self.kernel_w,
                x.shape()
            )));
        }
        Ok((h, w, 0))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, _) = self.out_dims(x)?;
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut out = vec![0.0; self.out_channels * oh * ow];
        let wts = self.weights.data();
        let xs = x.data();
        for co in 0..self.out_channels {
            let out_ch = &mut out[co * oh * ow..(co + 1) * oh * ow];
            out_ch.fill(self.biases.data()[co]);
            for ci in 0..self.in_channels {
                let in_ch = &xs[ci * h * w..(ci + 1) * h * w];
                let w_base = (co * self.in_channels + ci) * kh * kw;
                for dy in 0..kh {
                    for dx in 0..kw {
                        let wk = wts[w_base + dy * kw + dx];
                        for y in 0..oh {
                            let src = &in_ch[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                            let dst = &mut out_ch[y * ow..(y + 1) * ow];
                            for i in 0..ow {
                                dst[i] += wk * src[i];
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(&[self.out_channels, oh, ow], out)?;
        out.check_finite("conv2d forward")?;
        Ok(out)
    }

    /// Adds this sample's parameter gradients into the layer accumulators
    /// and returns the gradient with respect to the input.
    pub fn backward_acc(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (_, h, w) = dims3(x)?;
        let (co_n, oh, ow) = dims3(grad_out)?;
        let (kh, kw) = (self.kernel_h, self.kernel_w);
        if co_n != self.out_channels || oh != h - kh + 1 || ow != w - kw + 1 {
            return Err(Error::ShapeMismatch(format!(
                "conv backward got output grad {:?} for input {:?}",
                grad_out.shape(),
                x.shape()
            )));
        }
        let mut grad_in = vec![0.0; x.numel()];
        let xs = x.data();
        let gs = grad_out.data();
        let wts = self.weights.data();
        let gw = self.grad_weights.data_mut();
        let gb = self.grad_biases.data_mut();
        for co in 0..self.out_channels {
            let g_ch = &gs[co * oh * ow..(co + 1) * oh * ow];
            gb[co] += g_ch.iter().sum::<f64>();
            for ci in 0..self.in_channels {
                let in_ch = &xs[ci * h * w..(ci + 1) * h * w];
                let gin_ch = &mut grad_in[ci * h * w..(ci + 1) * h * w];
                let w_base = (co * self.in_channels + ci) * kh * kw;
                for dy in 0..kh {
                    for dx in 0..kw {
                        let mut acc = 0.0;
                        let wk = wts[w_base + dy * kw + dx];
                        for y in 0..oh {
                            let g_row = &g_ch[y * ow..(y + 1) * ow];
                            let x_row = &in_ch[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                            let gin_row =
                                &mut gin_ch[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                            for i in 0..ow {
                                acc += g_row[i] * x_row[i];
                                gin_row[i] += wk * g_row[i];
                            }
                        }
                        gw[w_base + dy * kw + dx] += acc;
                    }
                }
            }
        }
        Tensor::from_vec(x.shape(), grad_in)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// (out_features, in_features)
    pub weights: Tensor,
    /// (out_features)
    pub biases: Tensor,
    pub grad_weights: Tensor,
    pub grad_biases: Tensor,
    pub vel_weights: Tensor,
    pub vel_biases: Tensor,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut SeededRng) -> Self {
        let shape = [out_features, in_features];
        Dense {
            in_features,
            out_features,
            weights: init_weights(&shape, in_features, rng),
            biases: Tensor::zeros(&[out_features]),
            grad_weights: Tensor::zeros(&shape),
            grad_biases: Tensor::zeros(&[out_features]),
            vel_weights: Tensor::zeros(&shape),
            vel_biases: Tensor::zeros(&[out_features]),
        }
    }

    /// Rebuilds a layer from stored weights (out, in) and biases.
    pub fn from_params(weights: Tensor, biases: Tensor) -> Self {
        let shape = weights.shape().to_vec();
        let (out_features, in_features) = (shape[0], shape[1]);
        assert_eq!(biases.numel(), out_features);
        Dense {
            in_features,
            out_features,
            weights,
            biases,
            grad_weights: Tensor::zeros(&shape),
            grad_biases: Tensor::zeros(&[out_features]),
            vel_weights: Tensor::zeros(&shape),
            vel_biases: Tensor::zeros(&[out_features]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.numel() + self.biases.numel()
    }

    /// Input of any rank is consumed flattened.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.numel() != self.in_features {
            return Err(Error::ShapeMismatch(format!(
                "dense expects {} inputs, got {:?}",
                self.in_features,
                x.shape()
            )));
        }
        let xs = x.data();
        let mut out = vec![0.0; self.out_features];
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = self.weights.row(o);
            let mut acc = self.biases.data()[o];
            for i in 0..self.in_features {
                acc += row[i] * xs[i];
            }
            *out_v = acc;
        }
        let out = Tensor::from_vec(&[self.out_features], out)?;
        out.check_finite("dense forward")?;
        Ok(out)
    }

    pub fn backward_acc(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.numel() != self.out_features || x.numel() != self.in_features {
            return Err(Error::ShapeMismatch(format!(
                "dense backward got grad {:?} input {:?}",
                grad_out.shape(),
                x.shape()
            )));
        }
        let xs = x.data();
        let gs = grad_out.data();
        let n = self.in_features;
        let gb = self.grad_biases.data_mut();
        let gw = self.grad_weights.data_mut();
        let mut grad_in = vec![0.0; n];
        for o in 0..self.out_features {
            let g = gs[o];
            gb[o] += g;
            let gw_row = &mut gw[o * n..(o + 1) * n];
            let w_row = &self.weights.data()[o * n..(o + 1) * n];
            for i in 0..n {
                gw_row[i] += g * xs[i];
                grad_in[i] += g * w_row[i];
            }
        }
        Tensor::from_vec(x.shape(), grad_in)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MaxPool {
    pub pool_h: usize,
    pub pool_w: usize,
}

impl MaxPool {
    pub fn new(pool_h: usize, pool_w: usize) -> Self {
        MaxPool { pool_h, pool_w }
    }

    /// Returns the pooled tensor and the flat input index of each maximum.
    /// Ties go to the first (row-major) position, so backward routing is
    /// deterministic.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
        let (c, h, w) = dims3(x)?;
        if h % self.pool_h != 0 || w % self.pool_w != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} pool cannot tile {:?}",
                self.pool_h,
                self.pool_w,
                x.shape()
            )));
        }
        let (oh, ow) = (h / self.pool_h, w / self.pool_w);
        let xs = x.data();
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0u32; c * oh * ow];
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for py in 0..self.pool_h {
                        for px in 0..self.pool_w {
                            let idx =
                                (ci * h + oy * self.pool_h + py) * w + ox * self.pool_w + px;
                            if xs[idx] > best {
                                best = xs[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o_idx = (ci * oh + oy) * ow + ox;
                    out[o_idx] = best;
                    argmax[o_idx] = best_idx as u32;
                }
            }
        }
        Ok((Tensor::from_vec(&[c, oh, ow], out)?, argmax))
    }

    pub fn backward(grad_out: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Result<Tensor> {
        if grad_out.numel() != argmax.len() {
            return Err(Error::ShapeMismatch(
                "pool backward grad/argmax length mismatch".into(),
            ));
        }
        let mut grad_in = vec![0.0; input_shape.iter().product()];
        for (g, &idx) in grad_out.data().iter().zip(argmax) {
            grad_in[idx as usize] += g;
        }
        Tensor::from_vec(input_shape, grad_in)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Dropout {
    /// Probability of zeroing a unit during training.
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
        Dropout { p }
    }

    /// Inverted dropout: kept units are scaled by 1/(1-p) so inference is
    /// the identity.
    pub fn forward_train(&self, x: &Tensor, rng: &mut SeededRng) -> (Tensor, Vec<f64>) {
        let scale = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.unit() < self.p { 0.0 } else { scale })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        (
            Tensor::from_vec(x.shape(), data).expect("dropout shape"),
            mask,
        )
    }

    pub fn backward(grad_out: &Tensor, mask: &[f64]) -> Tensor {
        let data = grad_out.data().iter().zip(mask).map(|(g, m)| g * m).collect();
        Tensor::from_vec(grad_out.shape(), data).expect("dropout shape")
    }
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape(), data).expect("relu shape")
}

/// Subgradient at exactly zero is taken as zero.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Tensor {
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::from_vec(grad_out.shape(), data).expect("relu shape")
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the softmax over `logits` against a hard label,
/// computed through log-sum-exp so saturated logits stay finite.
pub fn softmax_xent(logits: &Tensor, label: usize) -> Result<(f64, Vec<f64>)> {
    let ls = logits.data();
    if label >= ls.len() {
        return Err(Error::ShapeMismatch(format!(
            "label {} out of range for {} classes",
            label,
            ls.len()
        )));
    }
    let max = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + ls.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let probs = ls.iter().map(|v| (v - lse).exp()).collect();
    Ok((lse - ls[label], probs))
}

/// Gradient of the mean-scaled cross-entropy with respect to the logits:
/// `scale * (softmax - onehot)`.
pub fn softmax_xent_backward(probs: &[f64], label: usize, scale: f64) -> Tensor {
    let data = probs
        .iter()
        .enumerate()
        .map(|(i, p)| scale * (p - if i == label { 1.0 } else { 0.0 }))
        .collect();
    Tensor::from_vec(&[probs.len()], data).expect("xent shape")
}

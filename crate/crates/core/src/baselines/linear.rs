//! Linear reference models: multinomial softmax regression and a Pegasos
//! linear SVM.

use std::path::Path;

use crate::audio::Label;
use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::rng::SeededRng;
use crate::storage::{self, record_kind, Container, Record, RecordTensor};

/// Which flattened feature vector a linear model consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// 16 frames x 13 cepstral coefficients.
    Mfcc,
    /// 64 bins x 16 frames of compressed spectrogram.
    Stft,
}

impl FeatureKind {
    pub fn dim(&self) -> usize {
        match self {
            FeatureKind::Mfcc => 16 * 13,
            FeatureKind::Stft => 64 * 16,
        }
    }

    fn code(&self) -> f32 {
        match self {
            FeatureKind::Mfcc => 0.0,
            FeatureKind::Stft => 1.0,
        }
    }

    fn from_code(code: f32, path: &Path) -> Result<Self> {
        match code as i32 {
            0 => Ok(FeatureKind::Mfcc),
            1 => Ok(FeatureKind::Stft),
            other => Err(Error::MalformedHeader(format!(
                "{}: unknown feature kind {other}",
                path.display()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LinearWeights {
    /// Two rows of class weights plus biases; row 0 scores Cough.
    Softmax { weights: Vec<f64>, biases: [f64; 2] },
    /// Hyperplane w.x + b; positive side is Cough.
    Svm { weights: Vec<f64>, bias: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: LinearWeights,
    pub feature_kind: FeatureKind,
}

impl LinearModel {
    /// Cough score: p(cough) for softmax, signed margin for the SVM.
    pub fn score(&self, x: &[f64]) -> f64 {
        let d = self.feature_kind.dim();
        assert_eq!(x.len(), d, "feature length");
        match &self.weights {
            LinearWeights::Softmax { weights, biases } => {
                let logits = [
                    biases[0] + dot(&weights[..d], x),
                    biases[1] + dot(&weights[d..], x),
                ];
                softmax(&logits)[0]
            }
            LinearWeights::Svm { weights, bias } => dot(weights, x) + bias,
        }
    }

    /// Hard decision; the decision boundary itself counts as Speech.
    pub fn predict(&self, x: &[f64]) -> Label {
        let cutoff = match self.weights {
            LinearWeights::Softmax { .. } => 0.5,
            LinearWeights::Svm { .. } => 0.0,
        };
        if self.score(x) > cutoff {
            Label::Cough
        } else {
            Label::Speech
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let d = self.feature_kind.dim() as u32;
        let record = match &self.weights {
            LinearWeights::Softmax { weights, biases } => Record {
                kind: record_kind::LINEAR_SOFTMAX,
                tensors: vec![
                    RecordTensor::from_f64(vec![2, d], weights),
                    RecordTensor::from_f64(vec![2], &biases[..]),
                    RecordTensor::new(vec![1], vec![self.feature_kind.code()]),
                ],
            },
            LinearWeights::Svm { weights, bias } => Record {
                kind: record_kind::LINEAR_SVM,
                tensors: vec![
                    RecordTensor::from_f64(vec![d], weights),
                    RecordTensor::new(vec![1], vec![*bias as f32]),
                    RecordTensor::new(vec![1], vec![self.feature_kind.code()]),
                ],
            },
        };
        storage::write_container(path, &Container::bare(vec![record]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let container = storage::read_container(path)?;
        let record = container
            .records
            .first()
            .ok_or_else(|| Error::MalformedHeader(format!("{}: no records", path.display())))?;
        let tensor = |i: usize| -> Result<&RecordTensor> {
            record.tensors.get(i).ok_or_else(|| {
                Error::MalformedHeader(format!("{}: missing tensor {i}", path.display()))
            })
        };
        let (weights, kind_code) = match record.kind {
            record_kind::LINEAR_SOFTMAX => {
                let w = tensor(0)?.values_f64();
                let b = tensor(1)?.values_f64();
                (
                    LinearWeights::Softmax {
                        weights: w,
                        biases: [b[0], b[1]],
                    },
                    tensor(2)?.values[0],
                )
            }
            record_kind::LINEAR_SVM => (
                LinearWeights::Svm {
                    weights: tensor(0)?.values_f64(),
                    bias: tensor(1)?.values_f64()[0],
                },
                tensor(2)?.values[0],
            ),
            other => {
                return Err(Error::MalformedHeader(format!(
                    "{}: record kind {other} is not a linear model",
                    path.display()
                )))
            }
        };
        Ok(LinearModel {
            weights,
            feature_kind: FeatureKind::from_code(kind_code, path)?,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L2 weight decay applied to softmax regression weights (not biases).
pub const SOFTMAX_DECAY: f64 = 1e-4;
pub const SOFTMAX_MAX_ITERS: usize = 10_000;
pub const SOFTMAX_GRAD_TOL: f64 = 1e-6;

/// Mean cross-entropy of the softmax regression plus the decay term, and
/// its gradient. `params` is [w_cough, w_speech, b_cough, b_speech].
pub fn softmax_loss_grad(
    params: &[f64],
    features: &[Vec<f64>],
    labels: &[usize],
    decay: f64,
) -> (f64, Vec<f64>) {
    let d = (params.len() - 2) / 2;
    let n = features.len() as f64;
    let (w, b) = params.split_at(2 * d);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (x, &label) in features.iter().zip(labels) {
        let logits = [b[0] + dot(&w[..d], x), b[1] + dot(&w[d..], x)];
        let max = logits[0].max(logits[1]);
        let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
        loss += lse - logits[label];
        for c in 0..2 {
            let g = (logits[c] - lse).exp() - if c == label { 1.0 } else { 0.0 };
            for (gw, xv) in grad[c * d..(c + 1) * d].iter_mut().zip(x) {
                *gw += g * xv;
            }
            grad[2 * d + c] += g;
        }
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    for i in 0..2 * d {
        loss += 0.5 * decay * params[i] * params[i];
        grad[i] += decay * params[i];
    }
    (loss, grad)
}

/// Full-batch gradient descent on the regularized multinomial logistic
/// loss from a zero start. The step size is the inverse curvature bound
/// of the logistic loss, so descent is monotone; iteration stops when the
/// gradient norm drops below tolerance or the budget runs out.
pub fn train_softmax(
    features: &[Vec<f64>],
    labels: &[Label],
    feature_kind: FeatureKind,
) -> Result<LinearModel> {
    if features.is_empty() {
        return Err(Error::EmptyData);
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(features.len(), labels.len()));
    }
    let d = feature_kind.dim();
    assert!(features.iter().all(|f| f.len() == d), "feature length");
    let label_idx: Vec<usize> = labels.iter().map(|l| l.index()).collect();

    let mean_sq_norm = features
        .iter()
        .map(|f| dot(f, f))
        .sum::<f64>()
        / features.len() as f64;
    let lr = 1.0 / (0.5 * mean_sq_norm + SOFTMAX_DECAY).max(1e-12);

    let mut params = vec![0.0; 2 * d + 2];
    for _ in 0..SOFTMAX_MAX_ITERS {
        let (_, grad) = softmax_loss_grad(&params, features, &label_idx, SOFTMAX_DECAY);
        let norm = dot(&grad, &grad).sqrt();
        if norm < SOFTMAX_GRAD_TOL {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
    }
    let biases = [params[2 * d], params[2 * d + 1]];
    params.truncate(2 * d);
    Ok(LinearModel {
        weights: LinearWeights::Softmax {
            weights: params,
            biases,
        },
        feature_kind,
    })
}

/// Pegasos: stochastic subgradient descent on the primal hinge loss with
/// step 1/(lambda t) and a deterministic shuffle, returning the averaged
/// iterate. The per-epoch objective of the running average is returned
/// alongside the model.
pub fn train_linear_svm(
    features: &[Vec<f64>],
    labels: &[f64],
    feature_kind: FeatureKind,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<(LinearModel, Vec<f64>)> {
    if features.is_empty() {
        return Err(Error::EmptyData);
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(features.len(), labels.len()));
    }
    assert!(labels.iter().all(|y| *y == 1.0 || *y == -1.0), "labels must be +1/-1");
    let d = feature_kind.dim();
    assert!(features.iter().all(|f| f.len() == d), "feature length");

    let mut rng = SeededRng::new(seed);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_sum = vec![0.0; d];
    let mut b_sum = 0.0;
    let mut t = 0u64;
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut objective_trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = (&features[i], labels[i]);
            let margin = y * (dot(&w, x) + b);
            let shrink = 1.0 - eta * lambda;
            for wv in &mut w {
                *wv *= shrink;
            }
            if margin < 1.0 {
                for (wv, xv) in w.iter_mut().zip(x) {
                    *wv += eta * y * xv;
                }
                b += eta * y;
            }
            for (s, wv) in w_sum.iter_mut().zip(&w) {
                *s += wv;
            }
            b_sum += b;
        }
        let avg_w: Vec<f64> = w_sum.iter().map(|s| s / t as f64).collect();
        let avg_b = b_sum / t as f64;
        objective_trace.push(svm_objective(&avg_w, avg_b, features, labels, lambda));
    }
    let weights: Vec<f64> = w_sum.iter().map(|s| s / t as f64).collect();
    let bias = b_sum / t as f64;
    Ok((
        LinearModel {
            weights: LinearWeights::Svm { weights, bias },
            feature_kind,
        },
        objective_trace,
    ))
}

/// Primal SVM objective: lambda/2 |w|^2 + mean hinge loss.
pub fn svm_objective(
    w: &[f64],
    b: f64,
    features: &[Vec<f64>],
    labels: &[f64],
    lambda: f64,
) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum::<f64>()
        / features.len() as f64;
    0.5 * lambda * dot(w, w) + hinge
}

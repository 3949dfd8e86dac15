//! The convolutional cough/speech classifier: architecture, training
//! protocol, segment inference, and window-level aggregation.

use std::path::Path;

use crate::audio::Label;
use crate::dsp::{FRAMES_PER_WINDOW, LOG_COMPRESSION_EPS, SPEC_BINS};
use crate::error::{Error, Result};
use crate::nn::layers::{Conv2d, Dense, Dropout, MaxPool};
use crate::nn::sgd::SgdConfig;
use crate::nn::tensor::Tensor;
use crate::nn::{softmax, softmax_xent, softmax_xent_backward, Layer, Network};
use crate::rng::SeededRng;
use crate::storage::{self, record_kind, Container, Record, RecordTensor};

/// Per-cell mean and std over a training set of 64x16 segments.
///
/// Statistics are snapped to the f32 grid when fitted so they survive the
/// model file round-trip unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Tensor,
    pub std: Tensor,
}

/// Smallest std allowed; constant cells standardize to zero instead of
/// blowing up.
const STD_FLOOR: f64 = 1e-6;

impl Standardization {
    /// Identity stats: mean 0, std 1.
    pub fn identity() -> Self {
        Standardization {
            mean: Tensor::zeros(&[SPEC_BINS, FRAMES_PER_WINDOW]),
            std: Tensor::filled(&[SPEC_BINS, FRAMES_PER_WINDOW], 1.0),
        }
    }

    /// Population mean and std per cell across the given segments.
    pub fn fit(segments: &[Tensor]) -> Result<Self> {
        if segments.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardization needs at least 2 segments, got {}",
                segments.len()
            )));
        }
        let shape = segments[0].shape().to_vec();
        let n = shape.iter().product::<usize>();
        let count = segments.len() as f64;
        let mut mean = vec![0.0; n];
        for seg in segments {
            assert_eq!(seg.shape(), shape.as_slice());
            for (m, v) in mean.iter_mut().zip(seg.data()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let mut var = vec![0.0; n];
        for seg in segments {
            for ((s, v), m) in var.iter_mut().zip(seg.data()).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|s| (s / count).sqrt().max(STD_FLOOR))
            .collect();
        let mut mean = Tensor::from_vec(&shape, mean)?;
        let mut std = Tensor::from_vec(&shape, std)?;
        mean.quantize_f32();
        std.quantize_f32();
        Ok(Standardization { mean, std })
    }

    /// (x - mean) / std, cell by cell.
    pub fn apply(&self, segment: &Tensor) -> Tensor {
        assert_eq!(segment.shape(), self.mean.shape());
        let data: Vec<f64> = segment
            .data()
            .iter()
            .zip(self.mean.data())
            .zip(self.std.data())
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        Tensor::from_vec(segment.shape(), data).expect("shape preserved")
    }
}

/// One epoch's worth of training diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// A test example's admitted segments plus its ground truth, for
/// window-level scoring.
#[derive(Clone, Debug)]
pub struct EventWindow {
    pub segments: Vec<Tensor>,
    pub label: Label,
}

impl EventWindow {
    pub fn new(segments: Vec<Tensor>, label: Label) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyWindow);
        }
        Ok(EventWindow { segments, label })
    }
}

/// The convolutional classifier plus everything inference needs: the
/// standardization frozen from its training split and the spectrogram
/// compression constant. Hyperparameters and history are kept for
/// reporting but not serialized.
#[derive(Clone, Debug)]
pub struct CnnModel {
    pub network: Network,
    pub standardization: Standardization,
    pub hyperparams: SgdConfig,
    pub log_eps: f64,
    pub history: Vec<EpochStats>,
}

/// The fixed classifier stack. 64x16 input, two conv/pool stages, two
/// 256-unit dense layers with dropout, a 2-way head.
fn full_stack(rng: &mut SeededRng) -> Network {
    Network::new(vec![
        Layer::Conv2d(Conv2d::new(1, 16, 9, 3, rng)),
        Layer::Relu,
        Layer::MaxPool(MaxPool::new(2, 1)),
        Layer::Conv2d(Conv2d::new(16, 16, 5, 3, rng)),
        Layer::Relu,
        Layer::MaxPool(MaxPool::new(2, 1)),
        Layer::Dense(Dense::new(16 * 12 * 12, 256, rng)),
        Layer::Relu,
        Layer::Dropout(Dropout::new(0.5)),
        Layer::Dense(Dense::new(256, 256, rng)),
        Layer::Relu,
        Layer::Dropout(Dropout::new(0.5)),
        Layer::Dense(Dense::new(256, 2, rng)),
    ])
}

/// Same topology scaled down and without dropout, small enough for
/// finite-difference gradient verification.
pub fn reduced_stack(n_filters: usize, n_dense: usize, seed: u64) -> Network {
    let mut rng = SeededRng::new(seed);
    Network::new(vec![
        Layer::Conv2d(Conv2d::new(1, n_filters, 9, 3, &mut rng)),
        Layer::Relu,
        Layer::MaxPool(MaxPool::new(2, 1)),
        Layer::Conv2d(Conv2d::new(n_filters, n_filters, 5, 3, &mut rng)),
        Layer::Relu,
        Layer::MaxPool(MaxPool::new(2, 1)),
        Layer::Dense(Dense::new(n_filters * 12 * 12, n_dense, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::new(n_dense, n_dense, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::new(n_dense, 2, &mut rng)),
    ])
}

/// Mean of per-segment probability vectors.
pub fn average_probs(probs: &[(f64, f64)]) -> (f64, f64) {
    let n = probs.len() as f64;
    let (sc, ss) = probs
        .iter()
        .fold((0.0, 0.0), |(ac, as_), (c, s)| (ac + c, as_ + s));
    (sc / n, ss / n)
}

/// Decision rule for an averaged cough probability. Exactly 0.5 counts
/// as Speech, biasing against false alarms.
pub fn label_for(p_cough: f64) -> Label {
    if p_cough > 0.5 {
        Label::Cough
    } else {
        Label::Speech
    }
}

impl CnnModel {
    /// Fresh model with seeded initial weights and identity stats.
    pub fn new(seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        CnnModel {
            network: full_stack(&mut rng),
            standardization: Standardization::identity(),
            hyperparams: SgdConfig::default(),
            log_eps: LOG_COMPRESSION_EPS,
            history: Vec::new(),
        }
    }

    /// Trains a model on raw (unstandardized) segments. Fits the
    /// standardization on the training split, runs `cfg.epochs` epochs of
    /// shuffled mini-batch SGD with momentum, and returns the parameter
    /// snapshot that scored the best validation accuracy (the earliest
    /// such epoch on ties). Deterministic given `cfg.seed`.
    pub fn train(
        train: &[(Tensor, Label)],
        val: &[(Tensor, Label)],
        cfg: &SgdConfig,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        if val.is_empty() {
            return Err(Error::EmptySplit("validation"));
        }
        let mut rng = SeededRng::new(cfg.seed);
        let mut init_rng = rng.split();
        let mut shuffle_rng = rng.split();
        let mut dropout_rng = rng.split();

        let segments: Vec<Tensor> = train.iter().map(|(s, _)| s.clone()).collect();
        let stats = Standardization::fit(&segments)?;
        let prep = |set: &[(Tensor, Label)]| -> Vec<(Tensor, usize)> {
            set.iter()
                .map(|(s, l)| {
                    let z = stats.apply(s);
                    let (h, w) = (z.shape()[0], z.shape()[1]);
                    (z.reshape(&[1, h, w]).expect("rank lift"), l.index())
                })
                .collect()
        };
        let train_set = prep(train);
        let val_set = prep(val);

        let mut model = CnnModel {
            network: full_stack(&mut init_rng),
            standardization: stats,
            hyperparams: *cfg,
            log_eps: LOG_COMPRESSION_EPS,
            history: Vec::new(),
        };

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut best_acc = f64::NEG_INFINITY;
        let mut best_params = model.network.params_flat();
        for epoch in 0..cfg.epochs {
            shuffle_rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for batch in order.chunks(cfg.batch_size) {
                model.network.zero_grads();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let (x, label) = &train_set[i];
                    let (logits, tape) =
                        model.network.forward_train(x.clone(), &mut dropout_rng)?;
                    let (loss, probs) = softmax_xent(&logits, *label)?;
                    if !loss.is_finite() {
                        return Err(Error::NonFinite(format!("training loss, epoch {epoch}")));
                    }
                    loss_sum += loss;
                    if argmax2(&probs) == *label {
                        correct += 1;
                    }
                    let grad = softmax_xent_backward(&probs, *label, scale);
                    model.network.backward(tape, grad)?;
                }
                model.network.sgd_step(cfg)?;
            }
            let train_loss = loss_sum / train_set.len() as f64;
            let train_acc = correct as f64 / train_set.len() as f64;
            let (val_loss, val_acc) = evaluate(&model.network, &val_set)?;
            model.history.push(EpochStats {
                epoch,
                train_loss,
                train_acc,
                val_loss,
                val_acc,
            });
            if val_acc > best_acc {
                best_acc = val_acc;
                best_params = model.network.params_flat();
            }
        }
        model.network.set_params_flat(&best_params)?;
        model.network.quantize_f32();
        Ok(model)
    }

    /// Class probabilities for one raw 64x16 segment. Standardization is
    /// applied internally; dropout runs in inference mode.
    pub fn predict_segment(&self, segment: &Tensor) -> Result<(f64, f64)> {
        if segment.shape() != self.standardization.mean.shape() {
            return Err(Error::ShapeMismatch(format!(
                "expected segment shape {:?}, got {:?}",
                self.standardization.mean.shape(),
                segment.shape()
            )));
        }
        let z = self.standardization.apply(segment);
        let (h, w) = (z.shape()[0], z.shape()[1]);
        let logits = self.network.forward_infer(z.reshape(&[1, h, w])?)?;
        let p = softmax(logits.data());
        Ok((p[0], p[1]))
    }

    /// Averages segment probabilities over a window and applies the
    /// decision rule.
    pub fn predict_window(&self, segments: &[Tensor]) -> Result<(Label, f64)> {
        if segments.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let probs: Vec<(f64, f64)> = segments
            .iter()
            .map(|s| self.predict_segment(s))
            .collect::<Result<_>>()?;
        let (p_cough, _) = average_probs(&probs);
        Ok((label_for(p_cough), p_cough))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records: Vec<Record> = self.network.layers.iter().map(layer_record).collect();
        records.push(Record {
            kind: record_kind::SOFTMAX,
            tensors: vec![],
        });
        let container = Container::new(
            records,
            tensor_f32(&self.standardization.mean),
            tensor_f32(&self.standardization.std),
            self.log_eps as f32,
        );
        storage::write_container(path, &container)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let container = storage::read_container(path)?;
        let mut layers = Vec::new();
        let n = container.records.len();
        for (i, record) in container.records.iter().enumerate() {
            if i + 1 == n {
                if record.kind != record_kind::SOFTMAX {
                    return Err(Error::MalformedHeader(format!(
                        "{}: model does not end in a softmax head",
                        path.display()
                    )));
                }
                break;
            }
            layers.push(layer_from_record(record, path)?);
        }
        let mean = Tensor::from_vec(
            &[SPEC_BINS, FRAMES_PER_WINDOW],
            container.mean.iter().map(|v| *v as f64).collect(),
        )?;
        let std = Tensor::from_vec(
            &[SPEC_BINS, FRAMES_PER_WINDOW],
            container.std.iter().map(|v| *v as f64).collect(),
        )?;
        Ok(CnnModel {
            network: Network::new(layers),
            standardization: Standardization { mean, std },
            hyperparams: SgdConfig::default(),
            log_eps: container.log_eps as f64,
            history: Vec::new(),
        })
    }
}

fn argmax2(probs: &[f64]) -> usize {
    if probs[0] >= probs[1] {
        0
    } else {
        1
    }
}

/// Mean loss and accuracy of the network over a prepared set, dropout off.
fn evaluate(net: &Network, set: &[(Tensor, usize)]) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (x, label) in set {
        let logits = net.forward_infer(x.clone())?;
        let (loss, probs) = softmax_xent(&logits, *label)?;
        loss_sum += loss;
        if argmax2(&probs) == *label {
            correct += 1;
        }
    }
    let n = set.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

fn tensor_f32(t: &Tensor) -> Vec<f32> {
    t.data().iter().map(|v| *v as f32).collect()
}

fn dims_u32(shape: &[usize]) -> Vec<u32> {
    shape.iter().map(|d| *d as u32).collect()
}

fn layer_record(layer: &Layer) -> Record {
    match layer {
        Layer::Conv2d(c) => Record {
            kind: record_kind::CONV2D,
            tensors: vec![
                RecordTensor::from_f64(dims_u32(c.weights.shape()), c.weights.data()),
                RecordTensor::from_f64(dims_u32(c.biases.shape()), c.biases.data()),
            ],
        },
        Layer::Relu => Record {
            kind: record_kind::RELU,
            tensors: vec![],
        },
        Layer::MaxPool(p) => Record {
            kind: record_kind::MAX_POOL,
            tensors: vec![RecordTensor::new(
                vec![2],
                vec![p.pool_h as f32, p.pool_w as f32],
            )],
        },
        Layer::Dense(d) => Record {
            kind: record_kind::DENSE,
            tensors: vec![
                RecordTensor::from_f64(dims_u32(d.weights.shape()), d.weights.data()),
                RecordTensor::from_f64(dims_u32(d.biases.shape()), d.biases.data()),
            ],
        },
        Layer::Dropout(d) => Record {
            kind: record_kind::DROPOUT,
            tensors: vec![RecordTensor::new(vec![1], vec![d.p as f32])],
        },
    }
}

fn layer_from_record(record: &Record, path: &Path) -> Result<Layer> {
    let bad = |what: &str| {
        Error::MalformedHeader(format!("{}: {} in model record", path.display(), what))
    };
    let tensor_at = |i: usize| -> Result<Tensor> {
        let rt = record.tensors.get(i).ok_or_else(|| bad("missing tensor"))?;
        let dims: Vec<usize> = rt.dims.iter().map(|d| *d as usize).collect();
        Tensor::from_vec(&dims, rt.values_f64())
    };
    match record.kind {
        record_kind::CONV2D => {
            let weights = tensor_at(0)?;
            let biases = tensor_at(1)?;
            if weights.shape().len() != 4 {
                return Err(bad("conv weights are not rank 4"));
            }
            Ok(Layer::Conv2d(Conv2d::from_params(weights, biases)))
        }
        record_kind::RELU => Ok(Layer::Relu),
        record_kind::MAX_POOL => {
            let dims = tensor_at(0)?;
            if dims.numel() != 2 {
                return Err(bad("pool record needs two extents"));
            }
            Ok(Layer::MaxPool(MaxPool::new(
                dims.data()[0] as usize,
                dims.data()[1] as usize,
            )))
        }
        record_kind::DENSE => {
            let weights = tensor_at(0)?;
            let biases = tensor_at(1)?;
            if weights.shape().len() != 2 {
                return Err(bad("dense weights are not rank 2"));
            }
            Ok(Layer::Dense(Dense::from_params(weights, biases)))
        }
        record_kind::DROPOUT => {
            let p = tensor_at(0)?;
            Ok(Layer::Dropout(Dropout::new(p.data()[0])))
        }
        other => Err(Error::MalformedHeader(format!(
            "{}: unknown layer kind {other}",
            path.display()
        ))),
    }
}

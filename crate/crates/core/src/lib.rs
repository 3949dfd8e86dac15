//! Cough detection from short audio clips.
//!
//! The pipeline turns 16 kHz mono audio into 64 ms spectral segments
//! (64 frequency bins x 16 frames), classifies each segment with a small
//! convolutional network trained from scratch, and compares that network
//! against MFCC/SVM/HMM baselines on a synthetic two-class corpus.
//!
//! Everything is deterministic: the same seed produces bit-identical
//! corpora, training histories, model files, and evaluation reports.

pub mod audio;
pub mod baselines;
pub mod cnn;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod rng;
pub mod storage;

pub use audio::{load_wav, resample, split_dataset, synth_corpus, AudioClip, Dataset, Label};
pub use cnn::{CnnModel, EpochStats, EventWindow, Standardization};
pub use error::{Error, Result};
pub use eval::{auc, confusion, roc_curve, Confusion, EvalReport, RocPoint};
pub use nn::tensor::Tensor;
pub use rng::SeededRng;

//! End-to-end evaluation harnesses.
//!
//! Experiment 1 compares four segment-level models (softmax regression
//! and SVM on MFCC, SVM and CNN on STFT) on admitted 64 ms windows.
//! Experiment 2 scores whole test clips: the CNN by averaging segment
//! probabilities, the per-class HMMs by log-likelihood ratio.

use std::path::Path;

use crate::audio::{split_dataset, AudioClip, Dataset, Label};
use crate::baselines::{
    hmm_classify, train_hmm, train_linear_svm, train_softmax, FeatureKind, LinearModel,
};
use crate::cnn::{label_for, CnnModel, EpochStats};
use crate::dsp::{
    self, DEFAULT_ADMIT_THRESHOLD, EVAL_HOP_FRAMES, PIPELINE_SAMPLE_RATE, TRAIN_HOP_FRAMES,
};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::features::{
    mfcc_sequence, HMM_FRAME_MS, HMM_HOP_MS, SEGMENT_FRAME_MS, SEGMENT_HOP_MS,
};
use crate::nn::sgd::SgdConfig;
use crate::nn::tensor::Tensor;
use crate::rng::SeededRng;

/// Held-out fraction of the corpus.
pub const TEST_FRACTION: f64 = 0.30;
/// Validation fraction of what remains after the test split.
pub const VAL_FRACTION_OF_BUILD: f64 = 0.20;
pub const SVM_LAMBDA: f64 = 0.01;
pub const SVM_EPOCHS: usize = 30;

/// Everything extracted from one clip.
struct ClipFeatures {
    label: Label,
    /// One 64x16 spectrogram per admitted window.
    stft: Vec<Tensor>,
    /// One flattened 16x13 MFCC matrix per admitted window.
    mfcc: Vec<Vec<f64>>,
    /// 25 ms MFCC frames over the whole clip, for the HMMs.
    hmm_frames: Vec<Vec<f64>>,
}

fn featurize_clip(clip: &AudioClip, hop_frames: usize) -> Result<ClipFeatures> {
    let label = clip
        .label
        .ok_or_else(|| Error::InsufficientData(format!("{} is unlabeled", clip.source_id)))?;
    let frames = dsp::frame_signal(clip)?;
    let mut windows: Vec<dsp::AdmittedWindow> = dsp::event_windows(&frames, hop_frames)
        .into_iter()
        .filter(|w| dsp::window_rms(&w.samples) > DEFAULT_ADMIT_THRESHOLD)
        .collect();
    if windows.is_empty() {
        // Keep clip-level decisions total: a clip that never crosses the
        // admission gate contributes its loudest window instead.
        let loudest = dsp::event_windows(&frames, hop_frames)
            .into_iter()
            .max_by(|a, b| dsp::window_rms(&a.samples).total_cmp(&dsp::window_rms(&b.samples)))
            .expect("framed clip has at least one window");
        windows.push(loudest);
    }
    let stft: Vec<Tensor> = windows.iter().map(|w| w.stft().values).collect();
    let mfcc = windows
        .iter()
        .map(|w| {
            let seq = mfcc_sequence(
                &w.samples,
                PIPELINE_SAMPLE_RATE,
                SEGMENT_FRAME_MS,
                SEGMENT_HOP_MS,
            )?;
            Ok((0..seq.n_frames()).flat_map(|t| seq.frame(t).to_vec()).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let hmm_seq = mfcc_sequence(&clip.samples, clip.sample_rate, HMM_FRAME_MS, HMM_HOP_MS)?;
    let hmm_frames = (0..hmm_seq.n_frames())
        .map(|t| hmm_seq.frame(t).to_vec())
        .collect();
    Ok(ClipFeatures {
        label,
        stft,
        mfcc,
        hmm_frames,
    })
}

fn featurize_split(split: &Dataset, hop_frames: usize) -> Result<Vec<ClipFeatures>> {
    split
        .clips
        .iter()
        .map(|c| featurize_clip(c, hop_frames))
        .collect()
}

/// Per-dimension standardization for flattened baseline features,
/// fitted on the training split.
struct VecStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl VecStats {
    fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs[0].len();
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(1e-6)).collect();
        VecStats { mean, std }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Labeled 64x16 spectral segments for one split at the given hop;
/// the shared featurization behind both training and evaluation.
pub fn labeled_segments(split: &Dataset, hop_frames: usize) -> Result<Vec<(Tensor, Label)>> {
    let feats = featurize_split(split, hop_frames)?;
    Ok(feats
        .iter()
        .flat_map(|f| f.stft.iter().map(|s| (s.clone(), f.label)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub test_clips: usize,
}

pub struct Experiments {
    /// Segment-level reports: mfcc_softmax, mfcc_svm, stft_svm, stft_cnn.
    pub exp1: Vec<EvalReport>,
    /// Clip-level reports: cnn_window, hmm_window.
    pub exp2: Vec<EvalReport>,
    pub counts: SegmentCounts,
    pub cnn_history: Vec<EpochStats>,
}

fn pm1(label: Label) -> f64 {
    match label {
        Label::Cough => 1.0,
        Label::Speech => -1.0,
    }
}

/// Runs both experiments on one corpus: split, featurize, train the four
/// segment models and the two HMMs, and score the held-out split. All
/// randomness derives from `seed`; `cfg` carries the CNN hyperparameters
/// (its seed field is replaced by a derived one).
pub fn run_all(corpus: &Dataset, seed: u64, cfg: &SgdConfig) -> Result<Experiments> {
    let (train, val, test) = split_dataset(corpus, TEST_FRACTION, VAL_FRACTION_OF_BUILD, seed)?;
    // Training windows overlap by 4 frames; evaluation windows do not.
    let train_feats = featurize_split(&train, TRAIN_HOP_FRAMES)?;
    let val_feats = featurize_split(&val, EVAL_HOP_FRAMES)?;
    let test_feats = featurize_split(&test, EVAL_HOP_FRAMES)?;

    let mut master = SeededRng::new(seed);
    let svm_mfcc_seed = master.next_u64();
    let svm_stft_seed = master.next_u64();
    let cnn_seed = master.next_u64();
    let hmm_cough_seed = master.next_u64();
    let hmm_speech_seed = master.next_u64();

    let segments = |feats: &[ClipFeatures]| -> Vec<(Tensor, Label)> {
        feats
            .iter()
            .flat_map(|f| f.stft.iter().map(|s| (s.clone(), f.label)))
            .collect()
    };
    let train_stft = segments(&train_feats);
    let val_stft = segments(&val_feats);
    let test_stft = segments(&test_feats);
    let counts = SegmentCounts {
        train: train_stft.len(),
        val: val_stft.len(),
        test: test_stft.len(),
        test_clips: test_feats.len(),
    };
    let truth_segments: Vec<Label> = test_stft.iter().map(|(_, l)| *l).collect();

    // Baseline features are standardized per dimension on the train split.
    let train_mfcc_raw: Vec<&Vec<f64>> =
        train_feats.iter().flat_map(|f| f.mfcc.iter()).collect();
    let mfcc_stats = VecStats::fit(
        &train_mfcc_raw.iter().map(|x| (*x).clone()).collect::<Vec<_>>(),
    );
    let flat = |t: &Tensor| -> Vec<f64> { t.data().to_vec() };
    let train_stft_raw: Vec<Vec<f64>> = train_stft.iter().map(|(t, _)| flat(t)).collect();
    let stft_stats = VecStats::fit(&train_stft_raw);

    let train_mfcc_x: Vec<Vec<f64>> =
        train_mfcc_raw.iter().map(|x| mfcc_stats.apply(x)).collect();
    let train_mfcc_y: Vec<Label> = train_feats
        .iter()
        .flat_map(|f| f.mfcc.iter().map(|_| f.label))
        .collect();
    let test_mfcc_x: Vec<Vec<f64>> = test_feats
        .iter()
        .flat_map(|f| f.mfcc.iter().map(|x| mfcc_stats.apply(x)))
        .collect();
    let train_stft_x: Vec<Vec<f64>> =
        train_stft_raw.iter().map(|x| stft_stats.apply(x)).collect();
    let train_stft_y: Vec<Label> = train_stft.iter().map(|(_, l)| *l).collect();
    let test_stft_x: Vec<Vec<f64>> = test_stft
        .iter()
        .map(|(t, _)| stft_stats.apply(&flat(t)))
        .collect();

    // The four segment-level models.
    let softmax_model = train_softmax(&train_mfcc_x, &train_mfcc_y, FeatureKind::Mfcc)?;
    let y_mfcc: Vec<f64> = train_mfcc_y.iter().map(|l| pm1(*l)).collect();
    let (svm_mfcc, _) = train_linear_svm(
        &train_mfcc_x,
        &y_mfcc,
        FeatureKind::Mfcc,
        SVM_LAMBDA,
        SVM_EPOCHS,
        svm_mfcc_seed,
    )?;
    let y_stft: Vec<f64> = train_stft_y.iter().map(|l| pm1(*l)).collect();
    let (svm_stft, _) = train_linear_svm(
        &train_stft_x,
        &y_stft,
        FeatureKind::Stft,
        SVM_LAMBDA,
        SVM_EPOCHS,
        svm_stft_seed,
    )?;
    let cnn_cfg = SgdConfig {
        seed: cnn_seed,
        ..*cfg
    };
    let cnn = CnnModel::train(&train_stft, &val_stft, &cnn_cfg)?;

    let linear_report = |name: &str, model: &LinearModel, xs: &[Vec<f64>]| -> Result<EvalReport> {
        let preds: Vec<Label> = xs.iter().map(|x| model.predict(x)).collect();
        let scores: Vec<f64> = xs.iter().map(|x| model.score(x)).collect();
        EvalReport::new(name, &truth_segments, &preds, &scores)
    };
    let mut cnn_preds = Vec::with_capacity(test_stft.len());
    let mut cnn_scores = Vec::with_capacity(test_stft.len());
    for (seg, _) in &test_stft {
        let (p_cough, _) = cnn.predict_segment(seg)?;
        cnn_preds.push(label_for(p_cough));
        cnn_scores.push(p_cough);
    }
    let exp1 = vec![
        linear_report("mfcc_softmax", &softmax_model, &test_mfcc_x)?,
        linear_report("mfcc_svm", &svm_mfcc, &test_mfcc_x)?,
        linear_report("stft_svm", &svm_stft, &test_stft_x)?,
        EvalReport::new("stft_cnn", &truth_segments, &cnn_preds, &cnn_scores)?,
    ];

    // Experiment 2: one decision per test clip.
    let class_sequences = |feats: &[ClipFeatures], label: Label| -> Vec<Vec<Vec<f64>>> {
        feats
            .iter()
            .filter(|f| f.label == label)
            .map(|f| f.hmm_frames.clone())
            .collect()
    };
    let (hmm_cough, _) = train_hmm(&class_sequences(&train_feats, Label::Cough), hmm_cough_seed)?;
    let (hmm_speech, _) =
        train_hmm(&class_sequences(&train_feats, Label::Speech), hmm_speech_seed)?;

    let truth_clips: Vec<Label> = test_feats.iter().map(|f| f.label).collect();
    let mut cnn_window_preds = Vec::with_capacity(test_feats.len());
    let mut cnn_window_scores = Vec::with_capacity(test_feats.len());
    let mut hmm_preds = Vec::with_capacity(test_feats.len());
    let mut hmm_scores = Vec::with_capacity(test_feats.len());
    for clip in &test_feats {
        let (label, p_mean) = cnn.predict_window(&clip.stft)?;
        cnn_window_preds.push(label);
        cnn_window_scores.push(p_mean);
        let (label, llr) = hmm_classify(&hmm_cough, &hmm_speech, &clip.hmm_frames);
        hmm_preds.push(label);
        hmm_scores.push(llr);
    }
    let exp2 = vec![
        EvalReport::new("cnn_window", &truth_clips, &cnn_window_preds, &cnn_window_scores)?,
        EvalReport::new("hmm_window", &truth_clips, &hmm_preds, &hmm_scores)?,
    ];

    Ok(Experiments {
        exp1,
        exp2,
        counts,
        cnn_history: cnn.history.clone(),
    })
}

/// Segment-level comparison only (the first table).
pub fn run_experiment1(corpus: &Dataset, seed: u64, cfg: &SgdConfig) -> Result<Vec<EvalReport>> {
    Ok(run_all(corpus, seed, cfg)?.exp1)
}

/// Clip-level comparison only (the second table plus ROC data).
pub fn run_experiment2(corpus: &Dataset, seed: u64, cfg: &SgdConfig) -> Result<Vec<EvalReport>> {
    Ok(run_all(corpus, seed, cfg)?.exp2)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `model,sensitivity,specificity` rows, one per report.
pub fn write_metrics_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = String::from("model,sensitivity,specificity\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.4},{:.4}\n",
            r.model,
            r.confusion.sensitivity(),
            r.confusion.specificity()
        ));
    }
    write_file(path, &out)
}

/// `fpr,tpr,threshold` rows; the anchor's threshold is written as `inf`.
pub fn write_roc_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &report.roc {
        out.push_str(&format!(
            "{:.6},{:.6},{}\n",
            p.false_positive_rate, p.true_positive_rate, p.threshold
        ));
    }
    write_file(path, &out)
}

/// Writes the four artifacts: both metric tables and both ROC dumps.
pub fn write_artifacts(dir: &Path, results: &Experiments) -> Result<()> {
    write_metrics_csv(&dir.join("exp1_table.csv"), &results.exp1)?;
    write_metrics_csv(&dir.join("exp2_table.csv"), &results.exp2)?;
    write_roc_csv(&dir.join("roc_cnn.csv"), &results.exp2[0])?;
    write_roc_csv(&dir.join("roc_hmm.csv"), &results.exp2[1])?;
    Ok(())
}

/// Fixed-width table for terminal output.
pub fn render_table(title: &str, reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{title}\n{:<14} {:>11} {:>11} {:>8}\n",
        "model", "sensitivity", "specificity", "auc"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<14} {:>11.4} {:>11.4} {:>8.4}\n",
            r.model,
            r.confusion.sensitivity(),
            r.confusion.specificity(),
            r.auc
        ));
    }
    out
}

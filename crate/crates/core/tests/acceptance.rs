//! Acceptance gate: one test per shipped guarantee. Each prints a
//! `criterion N PASS` line with the measured values (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::time::{Duration, Instant};

use coughnet_core::audio::{synth_corpus, Label};
use coughnet_core::baselines::{train_hmm, HmmModel};
use coughnet_core::cnn::reduced_stack;
use coughnet_core::dsp::{
    self, fft, EVAL_HOP_FRAMES, FRAMES_PER_WINDOW, FRAME_SAMPLES, PIPELINE_SAMPLE_RATE,
    SPEC_BINS, TRAIN_HOP_FRAMES, WINDOW_SAMPLES,
};
use coughnet_core::eval::experiments::{
    labeled_segments, run_all, TEST_FRACTION, VAL_FRACTION_OF_BUILD,
};
use coughnet_core::features::{
    HMM_FRAME_MS, HMM_HOP_MS, SEGMENT_FRAME_MS, SEGMENT_HOP_MS,
};
use coughnet_core::nn::gradcheck;
use coughnet_core::nn::layers::relu_forward;
use coughnet_core::nn::sgd::SgdConfig;
use coughnet_core::nn::Layer;
use coughnet_core::{auc, roc_curve, CnnModel, SeededRng, Tensor};

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut net = reduced_stack(4, 16, 42);
    assert!(!net.has_dropout(), "gradcheck network must be dropout-free");
    let mut rng = SeededRng::new(42);
    let data: Vec<f64> = (0..64 * 16).map(|_| rng.normal()).collect();
    let input = Tensor::from_vec(&[1, 64, 16], data).unwrap();

    let mut worst = 0.0f64;
    for label in 0..2 {
        let analytic = gradcheck::analytic_gradients(&mut net, &input, label).unwrap();
        let numeric = gradcheck::numeric_gradients(&mut net, &input, label, 1e-5).unwrap();
        let err = gradcheck::max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "label {label}: max relative error {err:.3e}");
        worst = worst.max(err);

        // Negative control: an off-by-one gradient must be flagged.
        let mut faulty = analytic.clone();
        gradcheck::inject_off_by_one(&mut faulty);
        let fault = gradcheck::max_relative_error(&faulty, &numeric);
        assert!(fault > 1e-2, "fault injection slipped through: {fault:.3e}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}");
    println!(
        "criterion 1 PASS: max relative error {worst:.3e} over {} parameters, \
         fault control flagged, {elapsed:.1?}",
        net.param_count()
    );
}

#[test]
fn criterion_2_shape_chain_and_parameter_count() {
    let model = CnnModel::new(42);
    let net = &model.network;
    assert_eq!(net.param_count(), 660690, "total parameter count");

    let per_layer: Vec<usize> = net.layers.iter().map(|l| l.param_count()).collect();
    let trainable: Vec<usize> = per_layer.iter().copied().filter(|n| *n > 0).collect();
    assert_eq!(trainable, [448, 3856, 590080, 65792, 514]);

    // Push a probe through layer by layer and record every output shape.
    let mut cur = Tensor::zeros(&[1, 64, 16]);
    let mut shapes = vec![cur.shape().to_vec()];
    for layer in &net.layers {
        cur = match layer {
            Layer::Conv2d(c) => c.forward(&cur).unwrap(),
            Layer::Relu => relu_forward(&cur),
            Layer::MaxPool(p) => p.forward(&cur).unwrap().0,
            Layer::Dense(d) => d.forward(&cur).unwrap(),
            Layer::Dropout(_) => cur,
        };
        shapes.push(cur.shape().to_vec());
    }
    let expected: Vec<Vec<usize>> = vec![
        vec![1, 64, 16],  // input
        vec![16, 56, 14], // conv 9x3
        vec![16, 56, 14], // relu
        vec![16, 28, 14], // pool 2x1
        vec![16, 24, 12], // conv 5x3
        vec![16, 24, 12], // relu
        vec![16, 12, 12], // pool 2x1
        vec![256],        // dense (flattens 16*12*12 = 2304)
        vec![256],        // relu
        vec![256],        // dropout
        vec![256],        // dense
        vec![256],        // relu
        vec![256],        // dropout
        vec![2],          // logits
    ];
    assert_eq!(shapes, expected);

    // The first dense layer's fan-in pins the 2304 waypoint.
    let fan_in = net
        .layers
        .iter()
        .find_map(|l| match l {
            Layer::Dense(d) => Some(d.weights.shape()[1]),
            _ => None,
        })
        .unwrap();
    assert_eq!(fan_in, 2304);
    println!("criterion 2 PASS: shape chain holds, 660690 parameters");
}

/// Direct-sum MFCC oracle: explicit DFT, explicit triangle filters,
/// explicit cosine sums. Shares only the numeric constants with the
/// production path.
fn mfcc_oracle(samples: &[f64; 128]) -> Vec<f64> {
    use std::f64::consts::PI;
    let n = 128usize;
    let n_fft = 256usize;
    let mut frame = vec![samples[0]];
    for i in 1..n {
        frame.push(samples[i] - 0.97 * samples[i - 1]);
    }
    for (i, v) in frame.iter_mut().enumerate() {
        *v *= 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos());
    }
    let mut power = Vec::new();
    for k in 0..=n_fft / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in frame.iter().enumerate() {
            let ang = -2.0 * PI * (k * t) as f64 / n_fft as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        power.push(re * re + im * im);
    }
    let mel_max = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
    let hz_at = |i: usize| 700.0 * (10f64.powf(mel_max * i as f64 / 27.0 / 2595.0) - 1.0);
    let mut log_e = Vec::new();
    for m in 0..26 {
        let (lo, c, hi) = (hz_at(m), hz_at(m + 1), hz_at(m + 2));
        let mut e = 0.0;
        for (k, p) in power.iter().enumerate() {
            let f = k as f64 * 16000.0 / n_fft as f64;
            let w = if f <= c { (f - lo) / (c - lo) } else { (hi - f) / (hi - c) };
            e += w.max(0.0) * p;
        }
        log_e.push((e + 1e-10).ln());
    }
    (0..13)
        .map(|j| {
            let alpha = if j == 0 {
                (1.0 / 26.0f64).sqrt()
            } else {
                (2.0 / 26.0f64).sqrt()
            };
            alpha
                * log_e
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * j as f64 * (2.0 * i as f64 + 1.0) / 52.0).cos())
                    .sum::<f64>()
        })
        .collect()
}

#[test]
fn criterion_3_dsp_oracles() {
    let mut rng = SeededRng::new(3);

    // Parseval on random 128-sample vectors: sum x^2 = (1/N) sum |X|^2.
    for _ in 0..100 {
        let x: Vec<f64> = (0..128).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut re = x.clone();
        let mut im = vec![0.0; 128];
        fft::fft(&mut re, &mut im);
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        let freq_energy: f64 =
            re.iter().zip(&im).map(|(r, i)| r * r + i * i).sum::<f64>() / 128.0;
        let rel = (time_energy - freq_energy).abs() / time_energy;
        assert!(rel < 1e-9, "Parseval relative error {rel:e}");
    }

    // A 1 kHz tone concentrates every frame's spectrum at bin 8
    // (bin width = 16000 / 128 = 125 Hz).
    let tone: Vec<f64> = (0..WINDOW_SAMPLES)
        .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16000.0).sin())
        .collect();
    let seg = dsp::stft_segment(&tone, 0);
    for frame in 0..FRAMES_PER_WINDOW {
        let column: Vec<f64> = (0..SPEC_BINS).map(|b| seg.values.at2(b, frame)).collect();
        let peak = column
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 8, "frame {frame} peaked at bin {peak}");
    }

    // MFCC against the direct-sum oracle.
    let mut max_diff = 0.0f64;
    for _ in 0..100 {
        let mut frame = [0.0; 128];
        for v in frame.iter_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        let fast = coughnet_core::features::mfcc_frame(&frame);
        let slow = mfcc_oracle(&frame);
        for (a, b) in fast.iter().zip(&slow) {
            max_diff = max_diff.max((a - b).abs());
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
    println!(
        "criterion 3 PASS: Parseval < 1e-9, 1 kHz tone at bin 8, \
         MFCC oracle max diff {max_diff:.2e}"
    );
}

/// Exhaustive-path log-likelihood for a tiny HMM, linear space.
fn enumerate_loglik(model: &HmmModel, frames: &[Vec<f64>]) -> f64 {
    let n = model.n_states();
    let exit = n - 1;
    let e = model.n_emitting();
    let t_len = frames.len();
    let a = |i: usize, j: usize| model.transitions.at2(i, j);
    let density = |s: usize, o: &[f64]| -> f64 {
        let gmm = &model.states[s - 1];
        gmm.weights
            .iter()
            .zip(&gmm.means)
            .zip(&gmm.vars)
            .map(|((w, mu), var)| {
                let mut p = *w;
                for d in 0..o.len() {
                    let z = o[d] - mu[d];
                    p *= (-z * z / (2.0 * var[d])).exp()
                        / (2.0 * std::f64::consts::PI * var[d]).sqrt();
                }
                p
            })
            .sum()
    };
    // Odometer over every emitting-state sequence of length t_len.
    let mut total = 0.0;
    let mut path = vec![1usize; t_len];
    loop {
        let mut p = a(0, path[0]);
        for t in 0..t_len {
            p *= density(path[t], &frames[t]);
            if t + 1 < t_len {
                p *= a(path[t], path[t + 1]);
            }
        }
        p *= a(path[t_len - 1], exit);
        total += p;
        // Advance the odometer.
        let mut pos = 0;
        loop {
            if pos == t_len {
                return total.ln();
            }
            path[pos] += 1;
            if path[pos] <= e {
                break;
            }
            path[pos] = 1;
            pos += 1;
        }
    }
}

#[test]
fn criterion_4_hmm_oracles() {
    let mut rng = SeededRng::new(4);

    // Forward algorithm vs exhaustive path enumeration.
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n_states = 3 + rng.index(3); // 1..=3 emitting states
        let k = 1 + rng.index(2);
        let dim = 2;
        let mut model = HmmModel::left_to_right(n_states, k, dim);
        // Random row-stochastic transitions over the topology's support.
        for i in 0..n_states {
            let support: Vec<usize> = (0..n_states)
                .filter(|j| model.transitions.at2(i, *j) > 0.0)
                .collect();
            let weights: Vec<f64> = support.iter().map(|_| rng.uniform(0.2, 1.0)).collect();
            let sum: f64 = weights.iter().sum();
            let row = &mut model.transitions.data_mut()[i * n_states..(i + 1) * n_states];
            row.fill(0.0);
            for (j, w) in support.iter().zip(&weights) {
                row[*j] = w / sum;
            }
        }
        for state in &mut model.states {
            let raw: Vec<f64> = (0..k).map(|_| rng.uniform(0.2, 1.0)).collect();
            let total: f64 = raw.iter().sum();
            for c in 0..k {
                state.weights[c] = raw[c] / total;
                for d in 0..dim {
                    state.means[c][d] = rng.uniform(-1.0, 1.0);
                    state.vars[c][d] = rng.uniform(0.5, 2.0);
                }
            }
        }
        let t_len = 1 + rng.index(4);
        let frames: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..dim).map(|_| rng.uniform(-1.5, 1.5)).collect())
            .collect();
        let fast = model.log_likelihood_frames(&frames);
        let slow = enumerate_loglik(&model, &frames);
        let diff = (fast - slow).abs();
        assert!(diff < 1e-9, "trial {trial}: {fast} vs {slow}");
        worst = worst.max(diff);
    }

    // Baum-Welch improvement trace is non-decreasing on every run:
    // three runs on random vectors plus one per class on real MFCCs.
    let mut checked = 0;
    let mut check_trace = |trace: &[f64]| {
        for pair in trace.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-8,
                "log-likelihood dropped: {} -> {}",
                pair[0],
                pair[1]
            );
            checked += 1;
        }
    };
    for seed in [11u64, 12, 13] {
        let sequences: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                let t_len = 6 + rng.index(5);
                (0..t_len)
                    .map(|_| (0..13).map(|_| rng.uniform(-1.0, 1.0)).collect())
                    .collect()
            })
            .collect();
        let (_, trace) = train_hmm(&sequences, seed).unwrap();
        check_trace(&trace);
    }
    let corpus = synth_corpus(8, 4);
    for want in [Label::Cough, Label::Speech] {
        let sequences: Vec<Vec<Vec<f64>>> = corpus
            .clips
            .iter()
            .filter(|c| c.label == Some(want))
            .map(|c| {
                let seq = coughnet_core::features::mfcc_sequence(
                    &c.samples,
                    c.sample_rate,
                    HMM_FRAME_MS,
                    HMM_HOP_MS,
                )
                .unwrap();
                (0..seq.n_frames()).map(|t| seq.frame(t).to_vec()).collect()
            })
            .collect();
        let (_, trace) = train_hmm(&sequences, 14).unwrap();
        check_trace(&trace);
    }
    println!(
        "criterion 4 PASS: enumeration max diff {worst:.2e}, \
         {checked} monotone EM steps"
    );
}

#[test]
fn criterion_5_auc_equals_pair_counting() {
    let mut rng = SeededRng::new(5);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let n = 2 + rng.index(199);
        let mut labels: Vec<Label> = (0..n)
            .map(|_| {
                if rng.unit() < 0.5 {
                    Label::Cough
                } else {
                    Label::Speech
                }
            })
            .collect();
        labels[0] = Label::Cough;
        labels[if n > 1 { 1 } else { 0 }] = Label::Speech;
        // Coarse quantization forces plenty of ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.index(7) as f64 / 3.0).collect();

        let roc = roc_curve(&scores, &labels).unwrap();
        let fast = auc(&roc);

        let mut concordant = 0.0;
        let mut ties = 0.0;
        let mut pairs = 0.0;
        for (i, li) in labels.iter().enumerate() {
            if *li != Label::Cough {
                continue;
            }
            for (j, lj) in labels.iter().enumerate() {
                if *lj != Label::Speech {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    concordant += 1.0;
                } else if scores[i] == scores[j] {
                    ties += 1.0;
                }
            }
        }
        let slow = (concordant + 0.5 * ties) / pairs;
        let diff = (fast - slow).abs();
        assert!(diff < 1e-12, "trial {trial} (n={n}): {fast} vs {slow}");
        worst = worst.max(diff);
    }
    println!("criterion 5 PASS: AUC matches pair counting, max diff {worst:.2e}");
}

#[test]
fn criterion_6_cnn_overfits_a_small_subset() {
    let start = Instant::now();
    let corpus = synth_corpus(10, 42);
    let all = labeled_segments(&corpus, TRAIN_HOP_FRAMES).unwrap();
    let mut subset: Vec<(Tensor, Label)> = Vec::new();
    for want in [Label::Cough, Label::Speech] {
        subset.extend(
            all.iter()
                .filter(|(_, l)| *l == want)
                .take(50)
                .cloned(),
        );
    }
    assert_eq!(subset.len(), 100);

    // Validating on the training subset makes the best-accuracy snapshot
    // pick the first epoch that classifies all 100 segments.
    let cfg = SgdConfig {
        epochs: 200,
        ..SgdConfig::default()
    };
    let model = CnnModel::train(&subset, &subset, &cfg).unwrap();
    let best = model
        .history
        .iter()
        .map(|e| e.val_acc)
        .fold(0.0f64, f64::max);
    let reached = model
        .history
        .iter()
        .find(|e| e.val_acc >= 1.0)
        .map(|e| e.epoch);
    let mut correct = 0;
    for (seg, label) in &subset {
        let (p_cough, _) = model.predict_segment(seg).unwrap();
        let pred = if p_cough > 0.5 { Label::Cough } else { Label::Speech };
        if pred == *label {
            correct += 1;
        }
    }
    let elapsed = start.elapsed();
    assert_eq!(
        correct, 100,
        "best in-sample accuracy over 200 epochs was {best}"
    );
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:.1?}");
    println!(
        "criterion 6 PASS: 100/100 training segments correct \
         (first perfect epoch {reached:?}), {elapsed:.1?}"
    );
}

// Regression bounds pinned from the first run on the frozen corpus
// (generator seed 42, 200 clips/class, default hyperparameters, harness
// seed 42), which measured: cnn segments 0.9927 / 1.0000, window AUC
// 1.000000, weakest experiment-1 metric 0.9527 (mfcc_svm sensitivity),
// in 4m54s. The shipped floors are 0.90 / 0.95 / 0.80; these pins sit
// just under the measured values and must never be lowered.
const CNN_SEGMENT_SENSITIVITY_BOUND: f64 = 0.99;
const CNN_SEGMENT_SPECIFICITY_BOUND: f64 = 0.995;
const CNN_WINDOW_AUC_BOUND: f64 = 0.999;
const EXP1_METRIC_BOUND: f64 = 0.95;

#[test]
fn criterion_7_frozen_corpus_regression() {
    let start = Instant::now();
    let corpus = synth_corpus(200, 42);
    let results = run_all(&corpus, 42, &SgdConfig::default()).unwrap();

    let cnn = results
        .exp1
        .iter()
        .find(|r| r.model == "stft_cnn")
        .unwrap();
    assert!(
        cnn.confusion.sensitivity() >= CNN_SEGMENT_SENSITIVITY_BOUND,
        "segment sensitivity {:.4}",
        cnn.confusion.sensitivity()
    );
    assert!(
        cnn.confusion.specificity() >= CNN_SEGMENT_SPECIFICITY_BOUND,
        "segment specificity {:.4}",
        cnn.confusion.specificity()
    );

    let window = results
        .exp2
        .iter()
        .find(|r| r.model == "cnn_window")
        .unwrap();
    assert!(
        window.auc >= CNN_WINDOW_AUC_BOUND,
        "window AUC {:.6}",
        window.auc
    );

    for report in &results.exp1 {
        assert!(
            report.confusion.sensitivity() >= EXP1_METRIC_BOUND
                && report.confusion.specificity() >= EXP1_METRIC_BOUND,
            "{}: sensitivity {:.4}, specificity {:.4}",
            report.model,
            report.confusion.sensitivity(),
            report.confusion.specificity()
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30 * 60), "took {elapsed:.1?}");
    println!(
        "criterion 7 PASS: cnn segments {:.4}/{:.4}, window AUC {:.6}, \
         all experiment-1 metrics >= {EXP1_METRIC_BOUND}, {elapsed:.1?}",
        cnn.confusion.sensitivity(),
        cnn.confusion.specificity(),
        window.auc
    );
}

#[test]
fn criterion_8_training_and_files_are_deterministic() {
    let corpus = synth_corpus(12, 21);
    let (train, val, test) =
        coughnet_core::split_dataset(&corpus, TEST_FRACTION, VAL_FRACTION_OF_BUILD, 21).unwrap();
    let train_segs = labeled_segments(&train, TRAIN_HOP_FRAMES).unwrap();
    let val_segs = labeled_segments(&val, EVAL_HOP_FRAMES).unwrap();
    let test_segs = labeled_segments(&test, EVAL_HOP_FRAMES).unwrap();
    let cfg = SgdConfig {
        epochs: 3,
        ..SgdConfig::default()
    };

    let dir = tempfile::tempdir().unwrap();
    let model_a = CnnModel::train(&train_segs, &val_segs, &cfg).unwrap();
    model_a.save(&dir.path().join("a.dcgh")).unwrap();
    let model_b = CnnModel::train(&train_segs, &val_segs, &cfg).unwrap();
    model_b.save(&dir.path().join("b.dcgh")).unwrap();
    let bytes_a = std::fs::read(dir.path().join("a.dcgh")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("b.dcgh")).unwrap();
    assert_eq!(bytes_a, bytes_b, "same-seed model files differ");

    let loaded = CnnModel::load(&dir.path().join("a.dcgh")).unwrap();
    for (seg, _) in &test_segs {
        let before = model_a.predict_segment(seg).unwrap();
        let after = loaded.predict_segment(seg).unwrap();
        assert_eq!(before, after, "prediction changed across save/load");
    }
    println!(
        "criterion 8 PASS: {} byte model files identical, \
         {} predictions bit-stable across round trip",
        bytes_a.len(),
        test_segs.len()
    );
}

#[test]
fn criterion_9_protocol_constants() {
    let d = SgdConfig::default();
    assert_eq!(d.learning_rate, 0.001);
    assert_eq!(d.batch_size, 20);
    assert_eq!(d.momentum, 0.9);
    assert_eq!(d.epochs, 50);
    assert_eq!(d.seed, 42);

    assert_eq!(TEST_FRACTION, 0.30); // 70/30 corpus split
    assert_eq!(VAL_FRACTION_OF_BUILD, 0.20); // then 80:20 train/validation

    assert_eq!(TRAIN_HOP_FRAMES, 12); // 4-frame (25%) window overlap
    assert_eq!(EVAL_HOP_FRAMES, 16);
    assert_eq!(FRAME_SAMPLES, 64); // 4 ms at 16 kHz
    assert_eq!(FRAMES_PER_WINDOW, 16); // 64 ms windows
    assert_eq!(WINDOW_SAMPLES, 1024);
    assert_eq!(PIPELINE_SAMPLE_RATE, 16000);

    assert_eq!(SEGMENT_FRAME_MS, 8.0);
    assert_eq!(SEGMENT_HOP_MS, 4.0);
    assert_eq!(HMM_FRAME_MS, 25.0);
    assert_eq!(HMM_HOP_MS, 25.0);
    println!("criterion 9 PASS: protocol constants match the shipped defaults");
}

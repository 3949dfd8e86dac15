//! Randomized invariants over the public surface: window geometry,
//! spectral values, metric structure, standardization, the container
//! format, WAV round trips, and HMM topology.

use proptest::prelude::*;

use coughnet_core::audio::{load_wav, write_wav_f32, AudioClip};
use coughnet_core::baselines::HmmModel;
use coughnet_core::cnn::{average_probs, label_for};
use coughnet_core::dsp::{self, FRAMES_PER_WINDOW, SPEC_BINS, WINDOW_SAMPLES};
use coughnet_core::storage::{
    decode_container, encode_container, record_kind, Container, Record, RecordTensor,
};
use coughnet_core::{auc, confusion, roc_curve, Label, SeededRng, Standardization, Tensor};

fn clip_of(samples: Vec<f64>) -> AudioClip {
    AudioClip {
        samples,
        sample_rate: 16000,
        label: None,
        source_id: "prop".into(),
    }
}

/// Random scores with deliberate ties, and labels containing both classes.
fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<Label>) {
    let mut rng = SeededRng::new(seed);
    let scores: Vec<f64> = (0..n).map(|_| rng.index(9) as f64 / 4.0).collect();
    let mut labels: Vec<Label> = (0..n)
        .map(|_| if rng.unit() < 0.5 { Label::Cough } else { Label::Speech })
        .collect();
    labels[0] = Label::Cough;
    labels[n - 1] = Label::Speech;
    (scores, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_geometry_matches_the_count_formula(
        len in 64usize..6000,
        hop in 1usize..=32,
    ) {
        let frames = dsp::frame_signal(&clip_of(vec![0.25; len])).unwrap();
        let n = frames.n_frames();
        let windows = dsp::event_windows(&frames, hop);
        let expected = if n <= FRAMES_PER_WINDOW {
            1
        } else {
            (n - FRAMES_PER_WINDOW).div_ceil(hop) + 1
        };
        prop_assert_eq!(windows.len(), expected);
        for (i, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.samples.len(), WINDOW_SAMPLES);
            prop_assert_eq!(w.origin_frame, i * hop);
            prop_assert_eq!(w.end_ms() - w.start_ms(), 64);
        }
    }

    #[test]
    fn admitted_windows_all_clear_the_gate(seed in any::<u64>(), threshold in 0.0f64..0.3) {
        let mut rng = SeededRng::new(seed);
        let len = 200 + rng.index(4000);
        let samples: Vec<f64> = (0..len).map(|_| rng.uniform(-0.6, 0.6)).collect();
        let frames = dsp::frame_signal(&clip_of(samples)).unwrap();
        let admitted = dsp::admit_windows(&frames, threshold);
        let all = dsp::event_windows(&frames, FRAMES_PER_WINDOW);
        prop_assert!(admitted.len() <= all.len());
        for w in &admitted {
            prop_assert!(dsp::window_rms(&w.samples) > threshold);
            prop_assert_eq!(w.origin_frame % FRAMES_PER_WINDOW, 0);
        }
    }

    #[test]
    fn spectra_are_nonnegative_and_finite(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let samples: Vec<f64> = (0..WINDOW_SAMPLES).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let seg = dsp::stft_segment(&samples, 0);
        prop_assert_eq!(seg.values.shape(), &[SPEC_BINS, FRAMES_PER_WINDOW]);
        for v in seg.values.data() {
            prop_assert!(v.is_finite() && *v >= 0.0, "spectral value {}", v);
        }
    }

    #[test]
    fn roc_is_anchored_monotone_and_bounded(n in 2usize..150, seed in any::<u64>()) {
        let (scores, labels) = scored_labels(n, seed);
        let roc = roc_curve(&scores, &labels).unwrap();
        let first = &roc[0];
        prop_assert_eq!(first.false_positive_rate, 0.0);
        prop_assert_eq!(first.true_positive_rate, 0.0);
        prop_assert!(first.threshold.is_infinite());
        let last = &roc[roc.len() - 1];
        prop_assert_eq!(last.false_positive_rate, 1.0);
        prop_assert_eq!(last.true_positive_rate, 1.0);
        for pair in roc.windows(2) {
            prop_assert!(pair[1].false_positive_rate >= pair[0].false_positive_rate);
            prop_assert!(pair[1].true_positive_rate >= pair[0].true_positive_rate);
            prop_assert!(pair[1].threshold < pair[0].threshold);
        }
        let a = auc(&roc);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn monotone_transforms_preserve_the_roc(n in 2usize..150, seed in any::<u64>()) {
        let (scores, labels) = scored_labels(n, seed);
        let base = roc_curve(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).tanh()).collect();
        let transformed = roc_curve(&squashed, &labels).unwrap();
        prop_assert_eq!(base.len(), transformed.len());
        for (a, b) in base.iter().zip(&transformed) {
            prop_assert_eq!(a.false_positive_rate, b.false_positive_rate);
            prop_assert_eq!(a.true_positive_rate, b.true_positive_rate);
        }
    }

    #[test]
    fn inverting_predictions_swaps_the_confusion_cells(n in 1usize..120, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let coin = |rng: &mut SeededRng| if rng.unit() < 0.5 { Label::Cough } else { Label::Speech };
        let truth: Vec<Label> = (0..n).map(|_| coin(&mut rng)).collect();
        let pred: Vec<Label> = (0..n).map(|_| coin(&mut rng)).collect();
        let flipped: Vec<Label> = pred
            .iter()
            .map(|l| if *l == Label::Cough { Label::Speech } else { Label::Cough })
            .collect();
        let c = confusion(&truth, &pred).unwrap();
        let f = confusion(&truth, &flipped).unwrap();
        prop_assert_eq!(c.true_positive, f.false_negative);
        prop_assert_eq!(c.false_negative, f.true_positive);
        prop_assert_eq!(c.true_negative, f.false_positive);
        prop_assert_eq!(c.false_positive, f.true_negative);
        prop_assert_eq!(c.total(), n);
    }

    #[test]
    fn window_averaging_ignores_segment_order(
        probs in prop::collection::vec(0.0f64..1.0, 1..20),
        rot in 0usize..20,
    ) {
        let pairs: Vec<(f64, f64)> = probs.iter().map(|p| (*p, 1.0 - *p)).collect();
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        let (a, _) = average_probs(&pairs);
        let (b, _) = average_probs(&rotated);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        // Away from the decision boundary the label cannot depend on order.
        if (a - 0.5).abs() > 1e-9 {
            prop_assert_eq!(label_for(a), label_for(b));
        }
    }

    #[test]
    fn standardized_training_cells_are_zero_mean_unit_variance(
        seed in any::<u64>(),
        n in 2usize..10,
    ) {
        let mut rng = SeededRng::new(seed);
        let segments: Vec<Tensor> = (0..n)
            .map(|_| {
                let data: Vec<f64> =
                    (0..SPEC_BINS * FRAMES_PER_WINDOW).map(|_| rng.uniform(0.0, 6.0)).collect();
                Tensor::from_vec(&[SPEC_BINS, FRAMES_PER_WINDOW], data).unwrap()
            })
            .collect();
        let stats = Standardization::fit(&segments).unwrap();
        let applied: Vec<Tensor> = segments.iter().map(|s| stats.apply(s)).collect();
        for cell in 0..SPEC_BINS * FRAMES_PER_WINDOW {
            let vals: Vec<f64> = applied.iter().map(|t| t.data()[cell]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            // Fitted statistics live on the f32 grid, so a cell with a tiny
            // spread amplifies the ~1e-6 quantization error of its mean.
            let tol = 1e-9 + 2e-6 / stats.std.data()[cell];
            prop_assert!(mean.abs() < tol, "cell {} mean {}", cell, mean);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-4, "cell {} std {}", cell, var.sqrt());
        }
    }

    #[test]
    fn containers_round_trip_and_reencode_identically(
        seed in any::<u64>(),
        n_records in 1usize..5,
    ) {
        let mut rng = SeededRng::new(seed);
        let kinds = [
            record_kind::CONV2D,
            record_kind::RELU,
            record_kind::MAX_POOL,
            record_kind::DENSE,
            record_kind::DROPOUT,
            record_kind::SOFTMAX,
            record_kind::LINEAR_SVM,
            record_kind::HMM_TRANSITIONS,
        ];
        let records: Vec<Record> = (0..n_records)
            .map(|_| {
                let tensors: Vec<RecordTensor> = (0..rng.index(3))
                    .map(|_| {
                        let rank = 1 + rng.index(3);
                        let dims: Vec<u32> = (0..rank).map(|_| 1 + rng.index(4) as u32).collect();
                        let len: u32 = dims.iter().product();
                        let values: Vec<f32> =
                            (0..len).map(|_| rng.uniform(-2.0, 2.0) as f32).collect();
                        RecordTensor::new(dims, values)
                    })
                    .collect();
                Record { kind: kinds[rng.index(kinds.len())], tensors }
            })
            .collect();
        let container = Container::bare(records);
        let bytes = encode_container(&container);
        let decoded = decode_container(&bytes, std::path::Path::new("prop")).unwrap();
        prop_assert_eq!(&decoded, &container);
        prop_assert_eq!(encode_container(&decoded), bytes);
    }

    #[test]
    fn any_single_bit_corruption_is_rejected(
        seed in any::<u64>(),
        byte_seed in any::<u64>(),
        bit in 0u8..8,
    ) {
        let mut rng = SeededRng::new(seed);
        let values: Vec<f32> = (0..6).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let record = Record {
            kind: record_kind::DENSE,
            tensors: vec![RecordTensor::new(vec![2, 3], values)],
        };
        let bytes = encode_container(&Container::bare(vec![record]));
        let idx = (byte_seed as usize) % bytes.len();
        let mut corrupt = bytes.clone();
        corrupt[idx] ^= 1 << bit;
        prop_assert!(
            decode_container(&corrupt, std::path::Path::new("prop")).is_err(),
            "flip at byte {} bit {} went unnoticed",
            idx,
            bit
        );
    }

    #[test]
    fn wav_files_round_trip_bit_identically(
        seed in any::<u64>(),
        len in 1usize..600,
    ) {
        let mut rng = SeededRng::new(seed);
        // Samples already on the f32 grid, as the synthesizer produces.
        let samples: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0) as f32 as f64).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        write_wav_f32(&path, &samples, 16000).unwrap();
        let clip = load_wav(&path).unwrap();
        prop_assert_eq!(clip.sample_rate, 16000);
        prop_assert_eq!(clip.samples, samples);
    }

    #[test]
    fn hmm_topology_is_stochastic_with_reachable_exit(
        n_states in 3usize..=10,
        k in 1usize..=3,
    ) {
        let model = HmmModel::left_to_right(n_states, k, 4);
        let exit = n_states - 1;
        for i in 0..n_states {
            let row: Vec<f64> = (0..n_states).map(|j| model.transitions.at2(i, j)).collect();
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "row {} not stochastic", i);
            // Nothing ever re-enters the entry state.
            prop_assert_eq!(row[0], 0.0);
            // Left-to-right with at most a one-state skip: support is i..=i+2.
            for (j, p) in row.iter().enumerate() {
                if *p > 0.0 {
                    prop_assert!(j >= i && j <= i + 2, "transition {} -> {}", i, j);
                }
            }
        }
        // Exit is absorbing.
        prop_assert_eq!(model.transitions.at2(exit, exit), 1.0);
        let min = model.min_frames();
        prop_assert!(min >= 1 && min <= model.n_emitting());
    }
}

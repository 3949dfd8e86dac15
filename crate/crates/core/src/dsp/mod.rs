//! Signal framing, RMS admission, and STFT spectral segments.
//!
//! The front end cuts 16 kHz audio into 4 ms frames (64 samples), groups
//! 16 frames into 64 ms windows, drops windows whose RMS falls below an
//! admission threshold, and turns each surviving window into a 64x16
//! log-magnitude spectral segment.

pub mod fft;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// 4 ms at 16 kHz.
pub const FRAME_SAMPLES: usize = 64;
pub const FRAMES_PER_WINDOW: usize = 16;
/// 64 ms at 16 kHz.
pub const WINDOW_SAMPLES: usize = FRAME_SAMPLES * FRAMES_PER_WINDOW;
pub const FFT_SIZE: usize = 128;
/// Rows of a spectral segment: DFT bins 0..63.
pub const SPEC_BINS: usize = 64;
/// Compression constant for ln(1 + v/eps); recorded in model files.
pub const LOG_COMPRESSION_EPS: f64 = 1e-6;
/// Full-scale RMS admission threshold.
pub const DEFAULT_ADMIT_THRESHOLD: f64 = 0.01;
/// Training-time re-buffering stride: 16-frame windows with 4-frame overlap.
pub const TRAIN_HOP_FRAMES: usize = 12;
/// Evaluation stride: non-overlapping windows.
pub const EVAL_HOP_FRAMES: usize = 16;

pub const PIPELINE_SAMPLE_RATE: u32 = 16000;

/// Contiguous 64-sample frames; the tail frame is zero-padded.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    data: Vec<f64>,
    n_frames: usize,
}

impl FrameSequence {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * FRAME_SAMPLES..(i + 1) * FRAME_SAMPLES]
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }
}

/// One 16-frame (64 ms) window that passed admission, tagged with the
/// index of its first frame in the source stream.
#[derive(Clone, Debug)]
pub struct AdmittedWindow {
    pub origin_frame: usize,
    /// Exactly [`WINDOW_SAMPLES`] samples, zero-padded at stream edges.
    pub samples: Vec<f64>,
}

impl AdmittedWindow {
    pub fn start_ms(&self) -> usize {
        self.origin_frame * 4
    }

    pub fn end_ms(&self) -> usize {
        self.start_ms() + 64
    }

    pub fn stft(&self) -> SpectralSegment {
        stft_segment(&self.samples, self.origin_frame)
    }
}

/// 64 frequency bins x 16 frames of log-compressed STFT magnitudes.
/// Entries are nonnegative by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSegment {
    /// Shape [64, 16]; row = frequency bin, column = frame.
    pub values: Tensor,
    pub origin_frame: usize,
}

/// Cuts a 16 kHz clip into non-overlapping 64-sample frames,
/// zero-padding the final partial frame.
pub fn frame_signal(clip: &AudioClip) -> Result<FrameSequence> {
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(Error::WrongSampleRate {
            expected: PIPELINE_SAMPLE_RATE,
            got: clip.sample_rate,
        });
    }
    if clip.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let n_frames = clip.samples.len().div_ceil(FRAME_SAMPLES);
    let mut data = clip.samples.clone();
    data.resize(n_frames * FRAME_SAMPLES, 0.0);
    Ok(FrameSequence { data, n_frames })
}

/// Root mean square of a sample window.
pub fn window_rms(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "RMS of an empty window");
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// All sliding 16-frame windows at the given frame stride. Windows
/// reaching past the end of the stream are zero-padded, so every window
/// has exactly [`WINDOW_SAMPLES`] samples. For n frames and hop h the
/// count is ceil((n-16)/h)+1 (one window when n <= 16).
pub fn event_windows(frames: &FrameSequence, hop_frames: usize) -> Vec<AdmittedWindow> {
    assert!(hop_frames >= 1, "hop must be at least one frame");
    let n = frames.n_frames();
    if n == 0 {
        return Vec::new();
    }
    let count = if n <= FRAMES_PER_WINDOW {
        1
    } else {
        (n - FRAMES_PER_WINDOW).div_ceil(hop_frames) + 1
    };
    (0..count)
        .map(|k| {
            let origin_frame = k * hop_frames;
            let start = origin_frame * FRAME_SAMPLES;
            let end = (start + WINDOW_SAMPLES).min(frames.data.len());
            let mut samples = frames.data[start.min(end)..end].to_vec();
            samples.resize(WINDOW_SAMPLES, 0.0);
            AdmittedWindow {
                origin_frame,
                samples,
            }
        })
        .collect()
}

/// Streaming admission: non-overlapping 16-frame windows whose RMS
/// exceeds the threshold. Quiet windows are dropped as silence.
pub fn admit_windows(frames: &FrameSequence, threshold: f64) -> Vec<AdmittedWindow> {
    assert!(threshold >= 0.0, "threshold must be nonnegative");
    event_windows(frames, FRAMES_PER_WINDOW)
        .into_iter()
        .filter(|w| window_rms(&w.samples) > threshold)
        .collect()
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// One 64 ms window -> 64x16 spectral segment: per frame, Hann window,
/// zero-pad 64 to 128, 128-point DFT magnitude, keep bins 0..63, then
/// compress with ln(1 + v/eps).
pub fn stft_segment(samples: &[f64], origin_frame: usize) -> SpectralSegment {
    assert_eq!(samples.len(), WINDOW_SAMPLES, "window must hold 16 frames");
    let window = hann(FRAME_SAMPLES);
    let mut values = Tensor::zeros(&[SPEC_BINS, FRAMES_PER_WINDOW]);
    let mut frame = [0.0; FRAME_SAMPLES];
    for f in 0..FRAMES_PER_WINDOW {
        let src = &samples[f * FRAME_SAMPLES..(f + 1) * FRAME_SAMPLES];
        for i in 0..FRAME_SAMPLES {
            frame[i] = src[i] * window[i];
        }
        let mags = fft::magnitude_spectrum(&frame, FFT_SIZE);
        let out = values.data_mut();
        for bin in 0..SPEC_BINS {
            out[bin * FRAMES_PER_WINDOW + f] = (1.0 + mags[bin] / LOG_COMPRESSION_EPS).ln();
        }
    }
    SpectralSegment {
        values,
        origin_frame,
    }
}

/// Re-buffers an admitted event into overlapping 16-frame windows at the
/// given hop and transforms each. Training uses hop 12 (4-frame overlap);
/// evaluation uses hop 16.
pub fn segment_event(frames: &FrameSequence, hop_frames: usize) -> Vec<SpectralSegment> {
    event_windows(frames, hop_frames)
        .iter()
        .map(AdmittedWindow::stft)
        .collect()
}

/// Admission threshold from a silence recording: the 95th percentile of
/// its non-overlapping window RMS values.
pub fn calibrate_threshold(silence: &AudioClip) -> Result<f64> {
    let frames = frame_signal(silence)?;
    let mut rms: Vec<f64> = event_windows(&frames, FRAMES_PER_WINDOW)
        .iter()
        .map(|w| window_rms(&w.samples))
        .collect();
    if rms.is_empty() {
        return Err(Error::EmptyAudio);
    }
    rms.sort_by(|a, b| a.partial_cmp(b).expect("RMS is never NaN"));
    let idx = ((rms.len() as f64 * 0.95).ceil() as usize).clamp(1, rms.len()) - 1;
    Ok(rms[idx])
}

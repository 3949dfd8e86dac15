//! MFCC extraction for the baseline models.
//!
//! Two shipped framings: 8 ms frames at a 4 ms hop (13 coefficients per
//! frame, 16 frames per 64 ms window, mirroring the spectral segments) and
//! non-overlapping 25 ms frames for the HMM classifier.

use crate::dsp::fft;
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const N_MFCC: usize = 13;
pub const N_MEL_FILTERS: usize = 26;
pub const PRE_EMPHASIS: f64 = 0.97;
/// Floor inside ln(energy + floor).
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

/// Segment-level config: matches the 16-frame spectral segments.
pub const SEGMENT_FRAME_MS: f64 = 8.0;
pub const SEGMENT_HOP_MS: f64 = 4.0;
/// HMM config: non-overlapping 25 ms frames.
pub const HMM_FRAME_MS: f64 = 25.0;
pub const HMM_HOP_MS: f64 = 25.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MfccSequence {
    /// Shape [T, 13].
    pub coeffs: Tensor,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl MfccSequence {
    pub fn n_frames(&self) -> usize {
        self.coeffs.shape()[0]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.coeffs.row(t)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// FFT size for a frame: the smallest power of two strictly greater than
/// the frame length, so every frame is zero-padded (128 -> 256, 400 -> 512).
pub fn fft_size_for(frame_len: usize) -> usize {
    let n = frame_len.next_power_of_two();
    if n == frame_len {
        n * 2
    } else {
        n
    }
}

/// Triangular filters with centers uniformly spaced on the mel scale from
/// 0 Hz to Nyquist. Row m covers DFT bins 0..=n_fft/2.
pub fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    assert!(n_filters >= 13, "need at least 13 filters");
    let nyquist = sample_rate as f64 / 2.0;
    let mel_points: Vec<f64> = (0..n_filters + 2)
        .map(|i| hz_to_mel(nyquist) * i as f64 / (n_filters + 1) as f64)
        .collect();
    let hz_points: Vec<f64> = mel_points.iter().map(|m| mel_to_hz(*m)).collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..n_filters)
        .map(|m| {
            let (lo, center, hi) = (hz_points[m], hz_points[m + 1], hz_points[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    };
                    w.max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II of `input`, first `n_out` coefficients.
pub fn dct_ii(input: &[f64], n_out: usize) -> Vec<f64> {
    let m = input.len() as f64;
    (0..n_out)
        .map(|j| {
            let alpha = if j == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            let sum: f64 = input
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v * (std::f64::consts::PI * j as f64 * (2.0 * i as f64 + 1.0) / (2.0 * m))
                        .cos()
                })
                .sum();
            alpha * sum
        })
        .collect()
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

fn mfcc_frame_with(samples: &[f64], filterbank: &[Vec<f64>], n_fft: usize) -> Vec<f64> {
    let n = samples.len();
    let mut frame = Vec::with_capacity(n);
    frame.push(samples[0]);
    for i in 1..n {
        frame.push(samples[i] - PRE_EMPHASIS * samples[i - 1]);
    }
    let window = hann(n);
    for (v, w) in frame.iter_mut().zip(&window) {
        *v *= w;
    }
    let power = fft::power_spectrum(&frame, n_fft);
    let log_energies: Vec<f64> = filterbank
        .iter()
        .map(|filter| {
            let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            (e + LOG_ENERGY_FLOOR).ln()
        })
        .collect();
    dct_ii(&log_energies, N_MFCC)
}

/// 13 MFCCs of one 8 ms frame (128 samples at 16 kHz): pre-emphasis,
/// Hann window, 256-point power spectrum, 26 mel energies,
/// ln(e + floor), DCT-II.
pub fn mfcc_frame(samples: &[f64]) -> [f64; N_MFCC] {
    assert_eq!(samples.len(), 128, "segment-config frame is 8 ms = 128 samples");
    let n_fft = fft_size_for(samples.len());
    let fb = mel_filterbank(N_MEL_FILTERS, n_fft, 16000);
    let coeffs = mfcc_frame_with(samples, &fb, n_fft);
    coeffs.try_into().expect("13 coefficients")
}

/// MFCC matrix over a clip or window: frames of `frame_ms` every `hop_ms`,
/// the tail frame zero-padded. T = ceil(n_samples / hop).
pub fn mfcc_sequence(
    samples: &[f64],
    sample_rate: u32,
    frame_ms: f64,
    hop_ms: f64,
) -> Result<MfccSequence> {
    assert!(hop_ms > 0.0 && hop_ms <= frame_ms, "hop must be in (0, frame]");
    let frame_len = (frame_ms * sample_rate as f64 / 1000.0).round() as usize;
    let hop_len = (hop_ms * sample_rate as f64 / 1000.0).round() as usize;
    if frame_len > samples.len() {
        return Err(Error::FrameTooLong {
            frame: frame_len,
            len: samples.len(),
        });
    }
    let n_fft = fft_size_for(frame_len);
    let fb = mel_filterbank(N_MEL_FILTERS, n_fft, sample_rate);
    let t_count = samples.len().div_ceil(hop_len);
    let mut data = Vec::with_capacity(t_count * N_MFCC);
    let mut padded = vec![0.0; frame_len];
    for t in 0..t_count {
        let start = t * hop_len;
        let end = (start + frame_len).min(samples.len());
        padded.fill(0.0);
        padded[..end - start].copy_from_slice(&samples[start..end]);
        data.extend(mfcc_frame_with(&padded, &fb, n_fft));
    }
    Ok(MfccSequence {
        coeffs: Tensor::from_vec(&[t_count, N_MFCC], data)?,
        frame_ms,
        hop_ms,
    })
}

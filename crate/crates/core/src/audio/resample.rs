//! Sample-rate conversion: windowed-sinc anti-alias filter followed by
//! linear interpolation of the filtered signal.

use crate::audio::AudioClip;

const TAPS: usize = 64;
/// Cutoff at 90% of the narrower Nyquist band leaves headroom for the
/// filter's transition width.
const CUTOFF_FRACTION: f64 = 0.45;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Hann-windowed sinc taps, normalized to unity DC gain.
fn design_lowpass(fc: f64) -> [f64; TAPS] {
    let m = (TAPS - 1) as f64;
    let mut h = [0.0; TAPS];
    for (i, tap) in h.iter_mut().enumerate() {
        let n = i as f64 - m / 2.0;
        let window = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / m).cos());
        *tap = 2.0 * fc * sinc(2.0 * fc * n) * window;
    }
    let sum: f64 = h.iter().sum();
    for tap in &mut h {
        *tap /= sum;
    }
    h
}

/// Resamples to `target_rate`. Output length is round(n * target/source);
/// equal rates return the input unchanged. The filter's group delay of
/// (TAPS-1)/2 samples is compensated during interpolation so the output
/// is phase-aligned with the input.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate {
        return clip.clone();
    }
    let in_rate = clip.sample_rate as f64;
    let out_rate = target_rate as f64;
    let n_in = clip.samples.len();
    let n_out = (n_in as f64 * out_rate / in_rate).round() as usize;

    let fc = CUTOFF_FRACTION * in_rate.min(out_rate) / in_rate;
    let h = design_lowpass(fc);

    // Full convolution: filtered[n] = sum_k h[k] * x[n-k], n in 0..n_in+TAPS-1.
    let mut filtered = vec![0.0; n_in + TAPS - 1];
    for (n, x) in clip.samples.iter().enumerate() {
        for (k, tap) in h.iter().enumerate() {
            filtered[n + k] += x * tap;
        }
    }

    let delay = (TAPS - 1) as f64 / 2.0;
    let step = in_rate / out_rate;
    let get = |i: isize| -> f64 {
        if i < 0 || i as usize >= filtered.len() {
            0.0
        } else {
            filtered[i as usize]
        }
    };
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let pos = j as f64 * step + delay;
        let i0 = pos.floor();
        let frac = pos - i0;
        let i0 = i0 as isize;
        out.push(get(i0) * (1.0 - frac) + get(i0 + 1) * frac);
    }
    AudioClip {
        samples: out,
        sample_rate: target_rate,
        label: clip.label,
        source_id: clip.source_id.clone(),
    }
}

//! Iterative radix-2 FFT, sized for the 128- and 512-point transforms the
//! pipeline needs. Twiddle factors are evaluated directly per butterfly:
//! at these sizes the trig cost is irrelevant and the rounding error stays
//! near machine epsilon.

use std::f64::consts::PI;

/// In-place decimation-in-time FFT. Lengths must be a power of two.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len(), "re/im length mismatch");
    assert!(n.is_power_of_two(), "FFT length must be a power of two");
    if n < 2 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let base = -2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wi, wr) = (base * k as f64).sin_cos();
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Magnitude spectrum of a real frame zero-padded to `n_fft`,
/// bins 0..=n_fft/2.
pub fn magnitude_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(frame.len() <= n_fft, "frame longer than FFT size");
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    re[..frame.len()].copy_from_slice(frame);
    fft(&mut re, &mut im);
    (0..=n_fft / 2)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect()
}

/// Power spectrum |X_k|^2 of a real frame zero-padded to `n_fft`,
/// bins 0..=n_fft/2.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(frame.len() <= n_fft, "frame longer than FFT size");
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    re[..frame.len()].copy_from_slice(frame);
    fft(&mut re, &mut im);
    (0..=n_fft / 2)
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .collect()
}

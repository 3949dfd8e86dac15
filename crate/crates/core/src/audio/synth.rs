//! Deterministic synthetic corpus.
//!
//! Cough clips are broadband noise bursts with a fast attack and an
//! exponential decay; speech clips are harmonic stacks (3-5 partials of a
//! 100-300 Hz fundamental) under slow amplitude modulation. The classes
//! therefore differ in both spectral shape and temporal envelope. Durations
//! are uniform in [250, 800] ms. Samples are snapped to the f32 grid at
//! generation time so a corpus written as float WAVs reloads bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use crate::audio::{load_wav, write_wav_f32, AudioClip, Dataset, Label};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const SYNTH_RATE: u32 = 16000;

const MIN_DURATION_MS: f64 = 250.0;
const MAX_DURATION_MS: f64 = 800.0;

fn finalize(samples: &mut [f64], peak_target: f64) {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let scale = if peak > 0.0 { peak_target / peak } else { 0.0 };
    for s in samples.iter_mut() {
        *s = (*s * scale) as f32 as f64;
    }
}

fn cough_clip(rng: &mut SeededRng, source_id: String) -> AudioClip {
    let rate = SYNTH_RATE as f64;
    let duration_ms = rng.uniform(MIN_DURATION_MS, MAX_DURATION_MS);
    let n = (duration_ms * rate / 1000.0).round() as usize;
    let attack = rng.uniform(2.0, 10.0) * rate / 1000.0;
    let tau = rng.uniform(40.0, 120.0) * rate / 1000.0;
    let peak = rng.uniform(0.4, 0.9);
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64;
            let env = if t < attack {
                t / attack
            } else {
                (-(t - attack) / tau).exp()
            };
            rng.uniform(-1.0, 1.0) * env
        })
        .collect();
    finalize(&mut samples, peak);
    AudioClip {
        samples,
        sample_rate: SYNTH_RATE,
        label: Some(Label::Cough),
        source_id,
    }
}

fn speech_clip(rng: &mut SeededRng, source_id: String) -> AudioClip {
    let rate = SYNTH_RATE as f64;
    let duration_ms = rng.uniform(MIN_DURATION_MS, MAX_DURATION_MS);
    let n = (duration_ms * rate / 1000.0).round() as usize;
    let f0 = rng.uniform(100.0, 300.0);
    let n_harmonics = 3 + rng.index(3);
    let partials: Vec<(f64, f64, f64)> = (1..=n_harmonics)
        .map(|h| {
            (
                h as f64 * f0,
                rng.uniform(0.5, 1.0) / h as f64,
                rng.uniform(0.0, 2.0 * std::f64::consts::PI),
            )
        })
        .collect();
    let am_rate = rng.uniform(2.0, 8.0);
    let am_depth = rng.uniform(0.2, 0.5);
    let am_phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
    let peak = rng.uniform(0.4, 0.9);
    let ramp = 0.010 * rate; // 10 ms on/off ramps
    let tau_pi = 2.0 * std::f64::consts::PI;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let voiced: f64 = partials
                .iter()
                .map(|(f, a, ph)| a * (tau_pi * f * t + ph).sin())
                .sum();
            let am = 1.0 + am_depth * (tau_pi * am_rate * t + am_phase).sin();
            let edge = (i as f64 / ramp).min((n - 1 - i) as f64 / ramp).min(1.0);
            voiced * am * edge
        })
        .collect();
    finalize(&mut samples, peak);
    AudioClip {
        samples,
        sample_rate: SYNTH_RATE,
        label: Some(Label::Speech),
        source_id,
    }
}

/// Generates `n_per_class` coughs then `n_per_class` speech clips.
/// Each clip draws from its own child generator, so clip i is the same
/// whatever n_per_class is.
pub fn synth_corpus(n_per_class: usize, seed: u64) -> Dataset {
    assert!(n_per_class >= 1, "need at least one clip per class");
    let mut master = SeededRng::new(seed);
    let mut clips = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let mut rng = master.split();
        clips.push(cough_clip(&mut rng, format!("cough_{i:04}")));
    }
    for i in 0..n_per_class {
        let mut rng = master.split();
        clips.push(speech_clip(&mut rng, format!("speech_{i:04}")));
    }
    Dataset { clips, seed }
}

/// Writes one WAV per clip plus `manifest.csv`
/// (`path,label,source_id,duration_ms`).
pub fn write_corpus(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("path,label,source_id,duration_ms\n");
    for clip in &ds.clips {
        let label = clip.label.ok_or_else(|| {
            Error::InsufficientData(format!("clip {} has no label", clip.source_id))
        })?;
        let file = format!("{}.wav", clip.source_id);
        write_wav_f32(&dir.join(&file), &clip.samples, clip.sample_rate)?;
        writeln!(
            manifest,
            "{},{},{},{:.3}",
            file,
            label,
            clip.source_id,
            clip.duration_ms()
        )
        .expect("string write");
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Loads a corpus directory written by [`write_corpus`].
pub fn load_corpus(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.csv");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut clips = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Manifest(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let label = Label::parse(fields[1])
            .ok_or_else(|| Error::Manifest(format!("line {}: unknown label {}", lineno + 1, fields[1])))?;
        let mut clip = load_wav(&dir.join(fields[0]))?;
        clip.label = Some(label);
        clip.source_id = fields[2].to_string();
        clips.push(clip);
    }
    if clips.is_empty() {
        return Err(Error::Manifest("manifest lists no clips".into()));
    }
    Ok(Dataset { clips, seed: 0 })
}

//! Audio ingestion, the synthetic corpus, and dataset splitting.

mod resample;
mod synth;
mod wav;

pub use resample::resample;
pub use synth::{load_corpus, synth_corpus, write_corpus, SYNTH_RATE};
pub use wav::{load_wav, read_wav, write_wav_f32};

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Cough,
    Speech,
}

impl Label {
    /// Class index used by the softmax head: Cough = 0, Speech = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Cough => 0,
            Label::Speech => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Cough),
            1 => Some(Label::Speech),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "Cough" | "cough" => Some(Label::Cough),
            "Speech" | "speech" => Some(Label::Speech),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Cough => "Cough",
            Label::Speech => "Speech",
        })
    }
}

/// Mono audio with samples in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: Option<Label>,
    /// Event identity; splits never place one source on both sides.
    pub source_id: String,
}

impl AudioClip {
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub clips: Vec<AudioClip>,
    pub seed: u64,
}

impl Dataset {
    /// (cough, speech) clip counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let cough = self
            .clips
            .iter()
            .filter(|c| c.label == Some(Label::Cough))
            .count();
        let speech = self
            .clips
            .iter()
            .filter(|c| c.label == Some(Label::Speech))
            .count();
        (cough, speech)
    }
}

/// Stratified grouped split: 30% of each class's sources to test, then
/// 20% of the remainder to validation. Sources (not clips) are shuffled,
/// so every clip of one source_id lands in the same split.
pub fn split_dataset(
    ds: &Dataset,
    test_frac: f64,
    val_frac_of_build: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    assert!(
        (0.0..1.0).contains(&test_frac) && (0.0..1.0).contains(&val_frac_of_build),
        "split fractions must lie in (0, 1)"
    );
    if ds.clips.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    // BTreeMap gives a stable source order before shuffling.
    let mut groups: BTreeMap<(usize, &str), Vec<usize>> = BTreeMap::new();
    for (i, clip) in ds.clips.iter().enumerate() {
        let label = clip.label.ok_or_else(|| {
            Error::InsufficientData(format!("clip {} has no label", clip.source_id))
        })?;
        groups
            .entry((label.index(), clip.source_id.as_str()))
            .or_default()
            .push(i);
    }

    let mut rng = SeededRng::new(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class in 0..2 {
        let mut sources: Vec<&Vec<usize>> = groups
            .iter()
            .filter(|((c, _), _)| *c == class)
            .map(|(_, v)| v)
            .collect();
        if sources.is_empty() {
            continue;
        }
        rng.shuffle(&mut sources);
        let n = sources.len();
        let n_test = (n as f64 * test_frac).round() as usize;
        let n_build = n - n_test;
        let n_val = (n_build as f64 * val_frac_of_build).round() as usize;
        let n_train = n_build - n_val;
        if n_test == 0 || n_val == 0 || n_train == 0 {
            return Err(Error::InsufficientData(format!(
                "class {} has {} sources; split would leave an empty part",
                Label::from_index(class).unwrap(),
                n
            )));
        }
        for (pos, idxs) in sources.iter().enumerate() {
            let bucket = if pos < n_test {
                &mut test
            } else if pos < n_test + n_val {
                &mut val
            } else {
                &mut train
            };
            bucket.extend(idxs.iter().map(|&i| ds.clips[i].clone()));
        }
    }
    let pack = |clips: Vec<AudioClip>| Dataset {
        clips,
        seed: ds.seed,
    };
    Ok((pack(train), pack(val), pack(test)))
}

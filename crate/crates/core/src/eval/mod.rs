//! Classification metrics: confusion counts, sensitivity/specificity,
//! ROC curves, and trapezoidal AUC. Cough is the positive class
//! throughout.

pub mod experiments;

use crate::audio::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    /// True-positive rate over the cough class.
    pub fn sensitivity(&self) -> f64 {
        self.true_positive as f64 / (self.true_positive + self.false_negative) as f64
    }

    /// True-negative rate over the speech class.
    pub fn specificity(&self) -> f64 {
        self.true_negative as f64 / (self.true_negative + self.false_positive) as f64
    }
}

pub fn confusion(truth: &[Label], predicted: &[Label]) -> Result<Confusion> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty);
    }
    let mut c = Confusion::default();
    for (t, p) in truth.iter().zip(predicted) {
        match (t, p) {
            (Label::Cough, Label::Cough) => c.true_positive += 1,
            (Label::Cough, Label::Speech) => c.false_negative += 1,
            (Label::Speech, Label::Cough) => c.false_positive += 1,
            (Label::Speech, Label::Speech) => c.true_negative += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
    /// Examples scoring >= this threshold are called Cough at this vertex.
    pub threshold: f64,
}

/// Threshold sweep over the distinct scores in descending order. Tied
/// scores collapse into a single vertex, and the curve is anchored at
/// (0,0) with an unreachable threshold. Scores must be orderable (no
/// NaN); higher means more cough-like.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("roc scores".into()));
    }
    let positives = labels.iter().filter(|l| **l == Label::Cough).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));

    let mut points = vec![RocPoint {
        false_positive_rate: 0.0,
        true_positive_rate: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        // Consume the whole tie group before emitting a vertex.
        while i < order.len() && scores[order[i]] == score {
            match labels[order[i]] {
                Label::Cough => tp += 1,
                Label::Speech => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            false_positive_rate: fp as f64 / negatives as f64,
            true_positive_rate: tp as f64 / positives as f64,
            threshold: score,
        });
    }
    Ok(points)
}

/// Trapezoidal area under the ROC polyline.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|pair| {
            let dx = pair[1].false_positive_rate - pair[0].false_positive_rate;
            dx * (pair[0].true_positive_rate + pair[1].true_positive_rate) / 2.0
        })
        .sum()
}

/// Everything reported for one model on one evaluation set.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub model: String,
    pub confusion: Confusion,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
}

impl EvalReport {
    pub fn new(
        model: &str,
        truth: &[Label],
        predicted: &[Label],
        scores: &[f64],
    ) -> Result<Self> {
        let confusion = confusion(truth, predicted)?;
        let roc = roc_curve(scores, truth)?;
        let auc = auc(&roc);
        Ok(EvalReport {
            model: model.to_string(),
            confusion,
            roc,
            auc,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use Label::{Cough, Speech};

    #[test]
    fn confusion_enumerates_the_four_cells() {
        let truth = [Cough, Cough, Speech, Speech];
        let pred = [Cough, Speech, Speech, Cough];
        let c = confusion(&truth, &pred).unwrap();
        assert_eq!(
            c,
            Confusion {
                true_positive: 1,
                false_positive: 1,
                true_negative: 1,
                false_negative: 1,
            }
        );
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn perfect_predictions_have_no_errors() {
        let truth = [Cough, Speech, Cough];
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!(c.false_positive, 0);
        assert_eq!(c.false_negative, 0);
        assert_eq!(c.sensitivity(), 1.0);
        assert_eq!(c.specificity(), 1.0);
    }

    #[test]
    fn sensitivity_is_tp_over_tp_plus_fn() {
        let c = Confusion {
            true_positive: 94,
            false_negative: 6,
            true_negative: 50,
            false_positive: 0,
        };
        assert!((c.sensitivity() - 0.94).abs() < 1e-12);
    }

    #[test]
    fn inverting_predictions_swaps_cells() {
        let mut rng = SeededRng::new(70);
        let truth: Vec<Label> = (0..50)
            .map(|_| if rng.unit() < 0.5 { Cough } else { Speech })
            .collect();
        let pred: Vec<Label> = (0..50)
            .map(|_| if rng.unit() < 0.5 { Cough } else { Speech })
            .collect();
        let flipped: Vec<Label> = pred
            .iter()
            .map(|l| if *l == Cough { Speech } else { Cough })
            .collect();
        let a = confusion(&truth, &pred).unwrap();
        let b = confusion(&truth, &flipped).unwrap();
        assert_eq!(a.true_positive, b.false_negative);
        assert_eq!(a.false_negative, b.true_positive);
        assert_eq!(a.true_negative, b.false_positive);
        assert_eq!(a.false_positive, b.true_negative);
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(matches!(confusion(&[], &[]), Err(Error::Empty)));
        assert!(matches!(
            confusion(&[Cough], &[]),
            Err(Error::LengthMismatch(1, 0))
        ));
    }

    #[test]
    fn perfectly_separated_scores_reach_auc_one() {
        let labels = [Cough, Cough, Speech, Speech];
        let scores = [0.9, 0.8, 0.2, 0.1];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert_eq!(roc.first().unwrap().threshold, f64::INFINITY);
        assert_eq!(
            (roc.first().unwrap().false_positive_rate, roc.first().unwrap().true_positive_rate),
            (0.0, 0.0)
        );
        let last = roc.last().unwrap();
        assert_eq!((last.false_positive_rate, last.true_positive_rate), (1.0, 1.0));
        assert_eq!(auc(&roc), 1.0);
    }

    #[test]
    fn all_tied_scores_are_the_diagonal() {
        let labels = [Cough, Speech, Cough, Speech];
        let scores = [0.5; 4];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert_eq!(roc.len(), 2, "one anchor plus one vertex for the tie group");
        assert_eq!(auc(&roc), 0.5);
    }

    #[test]
    fn roc_is_monotone_nondecreasing() {
        let mut rng = SeededRng::new(71);
        let labels: Vec<Label> = (0..60)
            .map(|i| if i % 2 == 0 { Cough } else { Speech })
            .collect();
        let scores: Vec<f64> = (0..60).map(|_| (rng.unit() * 8.0).round() / 8.0).collect();
        let roc = roc_curve(&scores, &labels).unwrap();
        for pair in roc.windows(2) {
            assert!(pair[1].false_positive_rate >= pair[0].false_positive_rate);
            assert!(pair[1].true_positive_rate >= pair[0].true_positive_rate);
            assert!(pair[1].threshold < pair[0].threshold);
        }
    }

    /// Independent AUC: count concordant pairs, half-credit ties.
    fn mann_whitney(scores: &[f64], labels: &[Label]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for (i, li) in labels.iter().enumerate() {
            if *li != Cough {
                continue;
            }
            for (j, lj) in labels.iter().enumerate() {
                if *lj != Speech {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    concordant += 1.0;
                } else if scores[i] == scores[j] {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn auc_equals_pair_counting() {
        let mut rng = SeededRng::new(72);
        for trial in 0..100 {
            let n = 2 + (trial % 199);
            let mut labels: Vec<Label> = (0..n)
                .map(|_| if rng.unit() < 0.5 { Cough } else { Speech })
                .collect();
            // Force both classes to appear.
            labels[0] = Cough;
            if n > 1 {
                labels[1] = Speech;
            }
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.unit() * 6.0).floor() / 6.0)
                .collect();
            let roc = roc_curve(&scores, &labels).unwrap();
            let a = auc(&roc);
            let b = mann_whitney(&scores, &labels);
            assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}");
        }
    }

    #[test]
    fn roc_ignores_monotone_score_transforms() {
        let mut rng = SeededRng::new(73);
        let labels: Vec<Label> = (0..40)
            .map(|i| if i % 3 == 0 { Cough } else { Speech })
            .collect();
        let scores: Vec<f64> = (0..40).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let a = roc_curve(&scores, &labels).unwrap();
        let b = roc_curve(&transformed, &labels).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.false_positive_rate, pb.false_positive_rate);
            assert_eq!(pa.true_positive_rate, pb.true_positive_rate);
        }
    }

    #[test]
    fn one_class_is_rejected() {
        assert!(matches!(
            roc_curve(&[0.1, 0.2], &[Cough, Cough]),
            Err(Error::OneClassOnly)
        ));
    }
}

//! Sequence-labeling evaluation: per-class precision/recall/F1,
//! macro-average F1 and accuracy, split by slot kind, with an optional
//! breakdown by paragraph length.
//!
//! A slot counts as correct when the predicted label is in its gold set.
//! On a match the predicted class gains a true positive; otherwise the
//! predicted class gains a false positive and the first-listed gold
//! label a false negative.

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Paragraph, SlotKind, Split};
use crate::error::{Error, Result};
use crate::model::{Model, SlotPrediction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub name: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub classes: Vec<ClassScore>,
    /// Unweighted mean of the per-class F1 scores.
    pub macro_f1: f64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    /// "2", "3", "4", "5", or ">5" discourse units.
    pub bucket: String,
    pub implicit: SlotMetrics,
    pub explicit: SlotMetrics,
    /// All slots (either kind) in paragraphs of this bucket.
    pub slot_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub implicit: SlotMetrics,
    pub explicit: SlotMetrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub buckets: Option<Vec<BucketMetrics>>,
}

pub const BUCKET_NAMES: [&str; 5] = ["2", "3", "4", "5", ">5"];

#[derive(Clone, Default)]
struct Counts {
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_count: Vec<usize>,
    correct: usize,
    total: usize,
}

impl Counts {
    fn new(classes: usize) -> Self {
        Counts { tp: vec![0; classes], fp: vec![0; classes], fn_count: vec![0; classes], correct: 0, total: 0 }
    }

    fn record(&mut self, predicted: usize, gold: &[usize]) {
        self.total += 1;
        if gold.contains(&predicted) {
            self.correct += 1;
            self.tp[predicted] += 1;
        } else {
            self.fp[predicted] += 1;
            self.fn_count[gold[0]] += 1;
        }
    }

    fn finish(&self, class_names: &[String]) -> SlotMetrics {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let classes: Vec<ClassScore> = class_names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let (tp, fp, fn_count) = (self.tp[c], self.fp[c], self.fn_count[c]);
                let precision = ratio(tp, tp + fp);
                let recall = ratio(tp, tp + fn_count);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassScore { name: name.clone(), tp, fp, fn_count, precision, recall, f1 }
            })
            .collect();
        let macro_f1 = classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64;
        SlotMetrics {
            macro_f1,
            accuracy: ratio(self.correct, self.total),
            correct: self.correct,
            total: self.total,
            classes: classes,
        }
    }
}

struct Tally {
    implicit: Counts,
    explicit: Counts,
}

impl Tally {
    fn new(classes: usize) -> Self {
        Tally { implicit: Counts::new(classes), explicit: Counts::new(classes) }
    }

    fn record(&mut self, kind: SlotKind, predicted: usize, gold: &[usize]) {
        match kind {
            SlotKind::Implicit => self.implicit.record(predicted, gold),
            SlotKind::Explicit => self.explicit.record(predicted, gold),
        }
    }
}

/// Decode every paragraph of a split.
pub fn predict_split(model: &Model, split: &Split, table: &EmbeddingTable) -> Result<Vec<Vec<SlotPrediction>>> {
    split.iter().map(|p| model.decode_paragraph(p, table)).collect()
}

/// Score per-slot label predictions against a split.
pub fn metrics_from_labels(
    split: &Split,
    predictions: &[Vec<usize>],
    class_names: &[String],
    gold_ids: impl Fn(&crate::corpus::RelationSlot) -> Vec<usize>,
    buckets: bool,
) -> Result<Metrics> {
    if predictions.len() != split.len() {
        return Err(Error::Data(format!(
            "{} prediction groups for {} paragraphs",
            predictions.len(),
            split.len()
        )));
    }
    let mut overall = Tally::new(class_names.len());
    let mut per_bucket: Vec<(Tally, usize)> =
        (0..BUCKET_NAMES.len()).map(|_| (Tally::new(class_names.len()), 0usize)).collect();

    for (paragraph, preds) in split.iter().zip(predictions.iter()) {
        if preds.len() != paragraph.num_slots() {
            return Err(Error::Data(format!(
                "{} predictions for a paragraph with {} slots",
                preds.len(),
                paragraph.num_slots()
            )));
        }
        let bucket = bucket_index(paragraph);
        for (slot, predicted) in paragraph.slots.iter().zip(preds.iter()) {
            let gold = gold_ids(slot);
            overall.record(slot.kind, *predicted, &gold);
            per_bucket[bucket].0.record(slot.kind, *predicted, &gold);
            per_bucket[bucket].1 += 1;
        }
    }

    let buckets = buckets.then(|| {
        per_bucket
            .into_iter()
            .zip(BUCKET_NAMES)
            .map(|((tally, slot_count), name)| BucketMetrics {
                bucket: name.to_string(),
                implicit: tally.implicit.finish(class_names),
                explicit: tally.explicit.finish(class_names),
                slot_count,
            })
            .collect()
    });
    Ok(Metrics {
        implicit: overall.implicit.finish(class_names),
        explicit: overall.explicit.finish(class_names),
        buckets,
    })
}

fn bucket_index(paragraph: &Paragraph) -> usize {
    BUCKET_NAMES.iter().position(|b| *b == paragraph.length_bucket()).unwrap()
}

/// Decode a split and score it. Per slot, the prediction is the decoded
/// label; implicit and explicit populations are scored separately.
pub fn evaluate(model: &Model, split: &Split, table: &EmbeddingTable, buckets: bool) -> Result<Metrics> {
    let predictions = predict_split(model, split, table)?;
    let labels: Vec<Vec<usize>> =
        predictions.iter().map(|p| p.iter().map(|s| s.label).collect()).collect();
    metrics_from_labels(split, &labels, &model.config.class_names(), |s| model.gold_ids(s), buckets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, Paragraph, RelationSlot, Token, ALL_LABELS};

    fn token(s: &str) -> Token {
        Token { surface: s.into(), pos_id: 0, ner_id: 0 }
    }

    fn four_slot_paragraph(golds: &[Vec<Label>], kinds: &[SlotKind]) -> Paragraph {
        let units = golds.len() + 1;
        let tokens: Vec<Token> = (0..units).map(|i| token(&format!("t{i}"))).collect();
        let spans: Vec<(usize, usize)> = (0..units).map(|i| (i, i)).collect();
        let slots = golds
            .iter()
            .zip(kinds.iter())
            .map(|(g, k)| RelationSlot::new(*k, g.clone()).unwrap())
            .collect();
        Paragraph::new(tokens, spans, slots).unwrap()
    }

    fn class_names() -> Vec<String> {
        ALL_LABELS.iter().map(|l| l.name().to_string()).collect()
    }

    fn multiway_gold(slot: &RelationSlot) -> Vec<usize> {
        slot.gold.iter().map(|l| l.index()).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let p = four_slot_paragraph(
            &[vec![Label::Comp], vec![Label::Cont], vec![Label::Exp], vec![Label::Temp]],
            &[SlotKind::Implicit; 4],
        );
        let preds = vec![vec![
            Label::Comp.index(),
            Label::Cont.index(),
            Label::Exp.index(),
            Label::Temp.index(),
        ]];
        let m = metrics_from_labels(&vec![p], &preds, &class_names(), multiway_gold, false).unwrap();
        assert_eq!(m.implicit.accuracy, 1.0);
        assert_eq!(m.implicit.macro_f1, 1.0);
        assert_eq!(m.explicit.total, 0);
        assert_eq!(m.explicit.accuracy, 0.0);
    }

    #[test]
    fn hand_computed_confusion_case() {
        // Gold Comp, Cont, Exp, Exp; predicted Comp, Exp, Exp, Temp.
        // Confusion counts: Comp TP=1; Exp TP=1, FP=1 (slot 2), FN=1
        // (slot 4); Cont FN=1; Temp FP=1. So accuracy = 0.5 and the class
        // F1s are Comp 1.0, Cont 0.0, Exp 0.5, Temp 0.0 -> macro 0.375.
        let p = four_slot_paragraph(
            &[vec![Label::Comp], vec![Label::Cont], vec![Label::Exp], vec![Label::Exp]],
            &[SlotKind::Implicit; 4],
        );
        let preds = vec![vec![
            Label::Comp.index(),
            Label::Exp.index(),
            Label::Exp.index(),
            Label::Temp.index(),
        ]];
        let m = metrics_from_labels(&vec![p], &preds, &class_names(), multiway_gold, false).unwrap();
        assert_eq!(m.implicit.accuracy, 0.5);
        let f1s: Vec<f64> = m.implicit.classes.iter().map(|c| c.f1).collect();
        assert_eq!(f1s[0], 1.0);
        assert_eq!(f1s[1], 0.0);
        assert!((f1s[2] - 0.5).abs() < 1e-12);
        assert_eq!(f1s[3], 0.0);
        assert!((m.implicit.macro_f1 - 0.375).abs() < 1e-12);
        // The unmatched double counting rule: FN went to the first-listed gold.
        assert_eq!(m.implicit.classes[1].fn_count, 1);
        assert_eq!(m.implicit.classes[2].fp, 1);
    }

    #[test]
    fn double_gold_match_counts_tp_for_predicted_class() {
        let p = four_slot_paragraph(&[vec![Label::Comp, Label::Exp]], &[SlotKind::Implicit]);
        let preds = vec![vec![Label::Exp.index()]];
        let m = metrics_from_labels(&vec![p], &preds, &class_names(), multiway_gold, false).unwrap();
        assert_eq!(m.implicit.accuracy, 1.0);
        assert_eq!(m.implicit.classes[Label::Exp.index()].tp, 1);
        assert_eq!(m.implicit.classes[Label::Comp.index()].tp, 0);
    }

    #[test]
    fn kinds_are_scored_separately() {
        let p = four_slot_paragraph(
            &[vec![Label::Comp], vec![Label::Comp]],
            &[SlotKind::Implicit, SlotKind::Explicit],
        );
        let preds = vec![vec![Label::Comp.index(), Label::Temp.index()]];
        let m = metrics_from_labels(&vec![p], &preds, &class_names(), multiway_gold, false).unwrap();
        assert_eq!(m.implicit.accuracy, 1.0);
        assert_eq!(m.explicit.accuracy, 0.0);
        assert_eq!(m.implicit.total, 1);
        assert_eq!(m.explicit.total, 1);
    }

    #[test]
    fn bucket_counts_sum_to_split_total() {
        let split = vec![
            four_slot_paragraph(&[vec![Label::Comp]], &[SlotKind::Implicit]),
            four_slot_paragraph(
                &[vec![Label::Comp], vec![Label::Cont], vec![Label::Exp], vec![Label::Temp], vec![Label::Exp]],
                &[SlotKind::Implicit; 5],
            ),
        ];
        let preds: Vec<Vec<usize>> = split
            .iter()
            .map(|p| p.slots.iter().map(|s| s.gold[0].index()).collect())
            .collect();
        let m = metrics_from_labels(&split, &preds, &class_names(), multiway_gold, true).unwrap();
        let buckets = m.buckets.unwrap();
        assert_eq!(buckets.len(), 5);
        let total: usize = buckets.iter().map(|b| b.slot_count).sum();
        assert_eq!(total, 6);
        assert_eq!(buckets[0].slot_count, 1); // the 2-unit paragraph
        assert_eq!(buckets[4].slot_count, 5); // the 6-unit paragraph
    }

    #[test]
    fn misaligned_predictions_are_data_errors() {
        let p = four_slot_paragraph(&[vec![Label::Comp]], &[SlotKind::Implicit]);
        let err = metrics_from_labels(&vec![p], &[vec![0, 1]], &class_names(), multiway_gold, false)
            .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}

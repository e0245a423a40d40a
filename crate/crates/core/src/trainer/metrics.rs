//! Binary classification metrics. Class 1 (hateful) is the positive class;
//! every rate is reported in percent.

use serde::{Deserialize, Serialize};

use super::{EpochRecord, TrainError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[u8], gold: &[u8]) -> Result<Self, TrainError> {
        if predicted.len() != gold.len() {
            return Err(TrainError::Config(format!(
                "{} predictions for {} labels",
                predicted.len(),
                gold.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &g) in predicted.iter().zip(gold) {
            match (p == 1, g == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with class 0 treated as positive.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `(precision, recall, f1)` of the positive class of `c`.
pub fn positive_scores(c: &Confusion) -> (f64, f64, f64) {
    let p = pct(c.tp, c.tp + c.fp);
    let r = pct(c.tp, c.tp + c.fn_);
    (p, r, f1(p, r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Positive-class F1.
    pub f1: f64,
    /// `[class 0, class 1]`.
    pub f1_per_class: [f64; 2],
    pub macro_f1: f64,
    pub confusion: Confusion,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Result<Self, TrainError> {
        if c.total() == 0 {
            return Err(TrainError::Empty("evaluation set"));
        }
        let (precision, recall, f1_pos) = positive_scores(&c);
        let (_, _, f1_neg) = positive_scores(&c.swapped());
        Ok(Self {
            accuracy: pct(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1: f1_pos,
            f1_per_class: [f1_neg, f1_pos],
            macro_f1: (f1_neg + f1_pos) / 2.0,
            confusion: c,
            history: Vec::new(),
        })
    }

    pub fn from_predictions(predicted: &[u8], gold: &[u8]) -> Result<Self, TrainError> {
        Self::from_confusion(Confusion::from_predictions(predicted, gold)?)
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{pad_batch, truncate, Example};
use super::metrics::MetricsReport;
use super::preset::PresetId;
use super::TrainError;
use crate::blocks::{Head, Mode};
use crate::tensor::AdamState;

fn default_max_epochs() -> usize {
    100
}

fn default_patience() -> usize {
    5
}

fn default_max_len() -> usize {
    64
}

/// Resolved optimisation settings of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Preset label the values came from, if any. Labels outside the
    /// built-in table (such as `M`) only tag explicitly given values.
    #[serde(default)]
    pub preset: Option<String>,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 stops
    /// after the first epoch.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Sequences are truncated to this many positions.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            preset: None,
            learning_rate,
            batch_size,
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            max_len: default_max_len(),
        }
    }

    pub fn from_preset(id: PresetId) -> Self {
        let p = id.preset();
        Self {
            preset: Some(id.to_string()),
            ..Self::new(p.learning_rate, p.batch_size)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, max_epochs: usize, patience: usize) -> Self {
        self.max_epochs = max_epochs;
        self.patience = patience;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Positive-class F1 on the validation set, in percent.
    pub val_f1: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub head: Head,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch the returned head comes from.
    pub best_epoch: usize,
}

fn check_dims(head: &Head, examples: &[Example]) -> Result<(), TrainError> {
    let expected = head.config().dim;
    match examples.iter().find(|e| e.features.dim() != expected) {
        Some(e) => Err(TrainError::Dim {
            expected,
            got: e.features.dim(),
        }),
        None => Ok(()),
    }
}

/// Eval-mode logits of every example.
pub fn logits(head: &Head, examples: &[Example], max_len: usize) -> Result<Vec<[f64; 2]>, TrainError> {
    examples
        .iter()
        .map(|e| {
            let (x, mask) = truncate(&e.features, max_len);
            let z = head.logits(&x, &mask)?;
            Ok([z[0] as f64, z[1] as f64])
        })
        .collect()
}

/// Argmax class; ties go to class 0.
pub fn argmax(z: &[f64; 2]) -> u8 {
    u8::from(z[1] > z[0])
}

pub fn predict(head: &Head, examples: &[Example], max_len: usize) -> Result<Vec<u8>, TrainError> {
    Ok(logits(head, examples, max_len)?.iter().map(argmax).collect())
}

fn cross_entropy(z: &[f64; 2], label: u8) -> f64 {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    lse - z[label as usize]
}

/// Metrics of `head` on `examples` from argmax predictions.
pub fn evaluate(head: &Head, examples: &[Example], max_len: usize) -> Result<MetricsReport, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty("evaluation set"));
    }
    check_dims(head, examples)?;
    let gold: Vec<u8> = examples.iter().map(|e| e.label).collect();
    MetricsReport::from_predictions(&predict(head, examples, max_len)?, &gold)
}

/// `(report, mean cross-entropy)` on a validation set.
fn validate(head: &Head, examples: &[Example], max_len: usize) -> Result<(MetricsReport, f64), TrainError> {
    let z = logits(head, examples, max_len)?;
    let loss = z.iter().zip(examples).map(|(z, e)| cross_entropy(z, e.label)).sum::<f64>() / examples.len() as f64;
    let predicted: Vec<u8> = z.iter().map(argmax).collect();
    let gold: Vec<u8> = examples.iter().map(|e| e.label).collect();
    Ok((MetricsReport::from_predictions(&predicted, &gold)?, loss))
}

/// Mini-batch Adam on mean cross-entropy with early stopping on validation
/// positive-class F1 (lower validation loss breaks ties). The returned head
/// is the best epoch's.
pub fn train(head: Head, train_set: &[Example], val_set: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(TrainError::Empty("validation set"));
    }
    check_dims(&head, train_set)?;
    check_dims(&head, val_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut head = head;
    let mut best: Option<(f64, f64, usize, Head)> = None;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (inputs, labels) = pad_batch(&batch, cfg.max_len);
            let (loss, grads) = head.loss_and_gradients(&inputs, &labels, &mut Mode::Train(&mut rng))?;
            total += loss * chunk.len() as f64;
            adam.step(head.params_mut(), &grads)?;
        }
        let (report, val_loss) = validate(&head, val_set, cfg.max_len)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
            val_f1: report.f1,
            val_accuracy: report.accuracy,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, val F1 {:.2}",
            record.train_loss,
            val_loss,
            report.f1
        );
        history.push(record);

        let improved = match &best {
            None => true,
            Some((f1, loss, _, _)) => report.f1 > *f1 || (report.f1 == *f1 && val_loss < *loss),
        };
        if improved {
            best = Some((report.f1, val_loss, epoch, head.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.2);
        if epoch - best_epoch >= cfg.patience {
            log::debug!("early stop after epoch {epoch}, best {best_epoch}");
            break;
        }
    }

    let (_, _, best_epoch, head) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        head,
        history,
        best_epoch,
    })
}

use std::fmt;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{common_dim, few_shot_sample, Example, Splits};
use super::fit::{predict, train, TrainConfig};
use super::metrics::MetricsReport;
use super::preset::PresetId;
use super::TrainError;
use crate::blocks::{BlockConfig, Head};

/// Few-shot percentages swept by default.
pub const FEW_SHOT_GRID: [u32; 7] = [0, 1, 5, 10, 25, 50, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// Train, validate and test on the source language.
    Unilingual,
    /// Train on the source language, test on the target.
    ZeroShot,
    /// Source training set plus `pct`% of the target training set.
    FewShot { pct: u32 },
    /// Only the `pct`% target samples, as a control.
    FewShotOnly { pct: u32 },
}

impl Protocol {
    /// `zero_shot` is `few_shot` with nothing injected.
    pub fn canonical(self) -> Self {
        match self {
            Protocol::ZeroShot => Protocol::FewShot { pct: 0 },
            other => other,
        }
    }

    pub fn validate(self) -> Result<(), TrainError> {
        match self {
            Protocol::FewShot { pct } | Protocol::FewShotOnly { pct } if pct > 100 => {
                Err(TrainError::Config(format!("few-shot percentage {pct} exceeds 100")))
            }
            Protocol::FewShotOnly { pct: 0 } => Err(TrainError::Config("few_shot_only needs pct > 0".into())),
            _ => Ok(()),
        }
    }

    fn needs_target(self) -> bool {
        !matches!(self, Protocol::Unilingual)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Unilingual => write!(f, "unilingual"),
            Protocol::ZeroShot => write!(f, "zero_shot"),
            Protocol::FewShot { pct } => write!(f, "few_shot({pct})"),
            Protocol::FewShotOnly { pct } => write!(f, "few_shot_only({pct})"),
        }
    }
}

/// Training settings as written in an experiment file: a preset letter,
/// explicit values, or both (explicit values win).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Overrides the head's LSTM state size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_hidden: Option<usize>,
    /// Overrides the head's dropout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
}

impl TrainSpec {
    pub fn preset(id: PresetId) -> Self {
        Self {
            preset: Some(id.to_string()),
            ..Self::default()
        }
    }

    /// Resolves to concrete train settings and the block config they imply.
    /// Built-in presets set the LSTM size and dropout of recurrent heads
    /// only; other heads keep their own values.
    pub fn resolve(&self, block: &BlockConfig, seed: u64) -> Result<(TrainConfig, BlockConfig), TrainError> {
        let builtin = match &self.preset {
            Some(label) => label.parse::<PresetId>().ok().map(PresetId::preset),
            None => None,
        };
        let missing = |field: &str| {
            let who = match &self.preset {
                Some(label) => format!("preset {label:?} has no built-in values, so"),
                None => "without a preset".to_string(),
            };
            TrainError::Config(format!("{who} train.{field} must be given"))
        };
        let learning_rate = self
            .learning_rate
            .or(builtin.map(|p| p.learning_rate))
            .ok_or_else(|| missing("learning_rate"))?;
        let batch_size = self
            .batch_size
            .or(builtin.map(|p| p.batch_size))
            .ok_or_else(|| missing("batch_size"))?;

        let mut cfg = TrainConfig::new(learning_rate, batch_size).with_seed(seed);
        cfg.preset = self.preset.clone();
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.max_len {
            cfg.max_len = v;
        }
        cfg.validate()?;

        let mut block = block.clone();
        if block.variant.is_recurrent() {
            if let Some(h) = builtin.and_then(|p| p.rnn_hidden) {
                block.hidden = h;
            }
            if let Some(p) = builtin.and_then(|p| p.rnn_dropout) {
                block.dropout = p;
            }
        }
        if let Some(h) = self.rnn_hidden {
            block.hidden = h;
        }
        if let Some(p) = self.rnn_dropout {
            block.dropout = p;
        }
        block.validate()?;
        Ok((cfg, block))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    pub block: BlockConfig,
    pub train: TrainSpec,
    #[serde(default)]
    pub seed: u64,
}

/// In-memory inputs of an experiment. `target` is required by every
/// protocol except `unilingual`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentData {
    pub source: Splits,
    pub target: Option<Splits>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Target-language samples added to training.
    pub injected: usize,
}

/// Wall-clock information, kept apart so records can be compared without it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Canonical protocol, so `zero_shot` is recorded as `few_shot` at 0%.
    pub protocol: Protocol,
    pub seed: u64,
    pub block: BlockConfig,
    pub train: TrainConfig,
    pub param_count: usize,
    pub sizes: SetSizes,
    pub injected_ids: Vec<String>,
    pub best_epoch: usize,
    pub report: MetricsReport,
    /// `(id, predicted label)` for every test example, in test order.
    pub predictions: Vec<(String, u8)>,
    pub timing: Timing,
}

impl RunRecord {
    /// The record with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }
}

/// Independent 64-bit seeds for initialisation, training and sampling.
fn derived_seeds(seed: u64) -> [u64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.next_u64(), rng.next_u64(), rng.next_u64()]
}

/// Trains a freshly built head under `spec.protocol` and evaluates it on
/// the test set of the evaluation language. Validation always uses the
/// source-language validation split.
pub fn run_experiment(spec: &ExperimentSpec, data: &ExperimentData) -> Result<RunRecord, TrainError> {
    let start = Instant::now();
    let protocol = spec.protocol.canonical();
    protocol.validate()?;
    let [init_seed, train_seed, sample_seed] = derived_seeds(spec.seed);
    let (train_cfg, block) = spec.train.resolve(&spec.block, train_seed)?;

    let target = match (protocol.needs_target(), &data.target) {
        (true, None) => return Err(TrainError::MissingTarget(protocol.to_string())),
        (true, Some(t)) => Some(t),
        (false, _) => None,
    };
    let source = &data.source;
    let (train_set, injected, test_set): (Vec<Example>, Vec<Example>, &[Example]) = match (protocol, target) {
        (Protocol::FewShot { pct }, Some(t)) => {
            let injected = few_shot_sample(&t.train, pct, sample_seed)?;
            let mut set = source.train.clone();
            set.extend(injected.iter().cloned());
            (set, injected, &t.test)
        }
        (Protocol::FewShotOnly { pct }, Some(t)) => {
            let injected = few_shot_sample(&t.train, pct, sample_seed)?;
            (injected.clone(), injected, &t.test)
        }
        _ => (source.train.clone(), Vec::new(), &source.test),
    };
    if test_set.is_empty() {
        return Err(TrainError::Empty("test set"));
    }
    for set in [&train_set[..], &source.validation, test_set] {
        if let Some(d) = common_dim(set)? {
            if d != block.dim {
                return Err(TrainError::Dim {
                    expected: block.dim,
                    got: d,
                });
            }
        }
    }

    log::info!(
        "{protocol}: {} train ({} injected), {} validation, {} test",
        train_set.len(),
        injected.len(),
        source.validation.len(),
        test_set.len()
    );
    let head = Head::build(&block, init_seed)?;
    let param_count = head.param_count();
    let outcome = train(head, &train_set, &source.validation, &train_cfg)?;
    let predicted = predict(&outcome.head, test_set, train_cfg.max_len)?;
    let gold: Vec<u8> = test_set.iter().map(|e| e.label).collect();
    let mut report = MetricsReport::from_predictions(&predicted, &gold)?;
    report.history = outcome.history;

    Ok(RunRecord {
        protocol,
        seed: spec.seed,
        block,
        train: train_cfg,
        param_count,
        sizes: SetSizes {
            train: train_set.len(),
            validation: source.validation.len(),
            test: test_set.len(),
            injected: injected.len(),
        },
        injected_ids: injected.into_iter().map(|e| e.id).collect(),
        best_epoch: outcome.best_epoch,
        report,
        predictions: test_set.iter().map(|e| e.id.clone()).zip(predicted).collect(),
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// One `few_shot` run per percentage, all sharing `spec`'s seed.
pub fn few_shot_sweep(spec: &ExperimentSpec, data: &ExperimentData, pcts: &[u32]) -> Result<Vec<RunRecord>, TrainError> {
    pcts.iter()
        .map(|&pct| {
            let spec = ExperimentSpec {
                protocol: Protocol::FewShot { pct },
                ..spec.clone()
            };
            run_experiment(&spec, data)
        })
        .collect()
}

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::corpus::RawTweet;
use crate::features::FeatureSequence;
use crate::tensor::Tensor;

/// One labelled feature sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: FeatureSequence,
    pub label: u8,
}

impl Example {
    pub fn new(id: impl Into<String>, features: FeatureSequence, label: u8) -> Self {
        Self {
            id: id.into(),
            features,
            label,
        }
    }
}

/// Labelled train/validation/test partitions of one language.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Pairs corpus labels with feature sequences for the ids of one split,
/// keeping the order of `ids`.
pub fn join_examples(
    ids: &[String],
    corpus: &[RawTweet],
    features: &BTreeMap<String, FeatureSequence>,
) -> Result<Vec<Example>, TrainError> {
    let labels: HashMap<&str, u8> = corpus.iter().map(|t| (t.id.as_str(), t.label)).collect();
    ids.iter()
        .map(|id| {
            let label = *labels.get(id.as_str()).ok_or_else(|| TrainError::MissingId {
                id: id.clone(),
                origin: "corpus",
            })?;
            let seq = features.get(id).ok_or_else(|| TrainError::MissingId {
                id: id.clone(),
                origin: "feature file",
            })?;
            Ok(Example::new(id.clone(), seq.clone(), label))
        })
        .collect()
}

/// Feature dimension shared by every example.
pub fn common_dim(examples: &[Example]) -> Result<Option<usize>, TrainError> {
    let mut dim = None;
    for e in examples {
        let d = e.features.dim();
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => return Err(TrainError::Dim { expected, got: d }),
            _ => {}
        }
    }
    Ok(dim)
}

/// First `max_len` rows of a sequence with its mask.
pub fn truncate(seq: &FeatureSequence, max_len: usize) -> (Tensor<f32>, Vec<bool>) {
    let t = seq.len().min(max_len);
    let d = seq.dim();
    let data = seq.matrix.data()[..t * d].to_vec();
    (Tensor::new(vec![t, d], data).expect("prefix of a valid matrix"), seq.mask[..t].to_vec())
}

/// Sequences of one mini-batch, each truncated to `max_len` and padded with
/// masked zero rows to the longest remaining length.
pub fn pad_batch(examples: &[&Example], max_len: usize) -> (Vec<(Tensor<f32>, Vec<bool>)>, Vec<usize>) {
    let width = examples.iter().map(|e| e.features.len().min(max_len)).max().unwrap_or(0);
    let inputs = examples
        .iter()
        .map(|e| {
            let (x, mut mask) = truncate(&e.features, max_len);
            let d = e.features.dim();
            let mut data = x.data().to_vec();
            data.resize(width * d, 0.0);
            mask.resize(width, false);
            (Tensor::new(vec![width, d], data).expect("padded shape"), mask)
        })
        .collect();
    let labels = examples.iter().map(|e| e.label as usize).collect();
    (inputs, labels)
}

/// Number of target samples injected at `pct` percent: `⌊pct·n/100⌋`.
pub fn injected_count(n: usize, pct: u32) -> usize {
    (pct as usize * n) / 100
}

/// Target samples chosen at `pct` percent. Larger percentages extend the
/// selection of smaller ones under the same seed, and input order is
/// irrelevant because candidates are sorted by id before the shuffle.
pub fn few_shot_sample(target: &[Example], pct: u32, seed: u64) -> Result<Vec<Example>, TrainError> {
    if pct > 100 {
        return Err(TrainError::Config(format!("few-shot percentage {pct} exceeds 100")));
    }
    let mut order: Vec<&Example> = target.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    Ok(order.into_iter().take(injected_count(target.len(), pct)).cloned().collect())
}

/// Source training set followed by the injected target samples.
pub fn few_shot_mix(source: &[Example], target: &[Example], pct: u32, seed: u64) -> Result<Vec<Example>, TrainError> {
    let mut mixed = source.to_vec();
    mixed.extend(few_shot_sample(target, pct, seed)?);
    Ok(mixed)
}

//! Bag-of-words baseline: tf-idf vectors and an L2-regularised hinge-loss
//! linear classifier.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::TrainError;

/// Regularisation constant of the reference baseline.
pub const DEFAULT_C: f64 = 3.5938;

/// Sparse row as `(column, value)` pairs in increasing column order.
pub type SparseVec = Vec<(usize, f64)>;

/// Raw term counts weighted by `idf(t) = ln((1+N)/(1+df(t))) + 1`, then
/// L2-normalised. The vocabulary is fixed at fit time; unseen terms are
/// dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tfidf {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl Tfidf {
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self, TrainError> {
        if docs.is_empty() {
            return Err(TrainError::Empty("tf-idf corpus"));
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(TrainError::Empty("tf-idf vocabulary"));
        }
        let n = docs.len() as f64;
        let vocab = df.keys().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
        let idf = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        Ok(Self { vocab, idf })
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|&i| self.idf[i])
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.vocab.get(term).copied()
    }

    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(&i) = self.vocab.get(t.as_ref()) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut row: SparseVec = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        row
    }

    pub fn transform_all<S: AsRef<str>>(&self, docs: &[Vec<S>]) -> Vec<SparseVec> {
        docs.iter().map(|d| self.transform(d)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub max_iter: usize,
    /// Stop once one iteration lowers the objective by less than this
    /// fraction of its value.
    pub tol: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            max_iter: 2000,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective after initialisation and after every accepted step.
    pub objective_history: Vec<f64>,
}

fn dot(w: &[f64], x: &[(usize, f64)]) -> f64 {
    x.iter().map(|&(i, v)| w[i] * v).sum()
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `½‖w‖² + C·Σ max(0, 1 − yᵢ(w·xᵢ + b))` with `y ∈ {−1, +1}`.
pub fn svm_objective(w: &[f64], b: f64, x: &[SparseVec], y: &[u8], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| (1.0 - sign(yi) * (dot(w, xi) + b)).max(0.0))
        .sum();
    reg + c * hinge
}

/// Bias minimising the hinge sum for fixed margins `mᵢ = w·xᵢ`. Each term
/// `max(0, 1 − sᵢ(mᵢ + b))` has its kink at `b = sᵢ − mᵢ`, and the slope of
/// the sum rises by one at every kink from `−n₊`, so the minimisers form the
/// interval between the `n₊`-th and `(n₊+1)`-th smallest kinks. Its
/// midpoint is returned.
fn best_bias(margins: &[f64], y: &[u8]) -> f64 {
    let mut kinks: Vec<f64> = margins.iter().zip(y).map(|(m, &l)| sign(l) - m).collect();
    kinks.sort_by(f64::total_cmp);
    let positives = y.iter().filter(|&&l| l == 1).count();
    (kinks[positives - 1] + kinks[positives]) / 2.0
}

/// Deterministic block descent: the bias is minimised exactly, then the
/// weights take a normalised subgradient step whose length backtracks
/// until the objective drops. Steps that do not lower the objective are
/// never taken, so the recorded objective is nonincreasing.
pub fn svm_train(x: &[SparseVec], y: &[u8], dim: usize, cfg: &SvmConfig) -> Result<LinearSvm, TrainError> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(TrainError::Config(format!("C must be positive, got {}", cfg.c)));
    }
    if x.len() != y.len() {
        return Err(TrainError::Config(format!("{} rows for {} labels", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(TrainError::Empty("training set"));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(TrainError::SingleClass);
    }
    if let Some(&(i, _)) = x.iter().flat_map(|r| r.iter()).find(|&&(i, _)| i >= dim) {
        return Err(TrainError::Dim { expected: dim, got: i + 1 });
    }

    let margins = |w: &[f64]| x.iter().map(|xi| dot(w, xi)).collect::<Vec<f64>>();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut f = svm_objective(&w, b, x, y, cfg.c);
    let mut history = vec![f];
    let start = best_bias(&margins(&w), y);
    let fb = svm_objective(&w, start, x, y, cfg.c);
    if fb < f {
        b = start;
        f = fb;
        history.push(f);
    }
    let mut step = 1.0;
    for _ in 0..cfg.max_iter {
        let m = margins(&w);
        let mut gw = w.clone();
        for ((xi, &yi), mi) in x.iter().zip(y).zip(&m) {
            let s = sign(yi);
            if s * (mi + b) < 1.0 {
                for &(j, v) in xi {
                    gw[j] -= cfg.c * s * v;
                }
            }
        }
        let norm = gw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut accepted = None;
        while step > 1e-12 {
            let cw: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi / norm).collect();
            let cf = svm_objective(&cw, b, x, y, cfg.c);
            if cf < f {
                accepted = Some(cw);
                break;
            }
            step /= 2.0;
        }
        let Some(cw) = accepted else { break };
        let mut cb = best_bias(&margins(&cw), y);
        let mut cf = svm_objective(&cw, cb, x, y, cfg.c);
        let kept = svm_objective(&cw, b, x, y, cfg.c);
        if kept <= cf {
            cb = b;
            cf = kept;
        }
        let decrease = f - cf;
        w = cw;
        b = cb;
        f = cf;
        history.push(f);
        step *= 2.0;
        if decrease < cfg.tol * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(LinearSvm {
        weights: w,
        bias: b,
        objective_history: history,
    })
}

impl LinearSvm {
    pub fn decision(&self, x: &[(usize, f64)]) -> f64 {
        x.iter()
            .filter(|&&(i, _)| i < self.weights.len())
            .map(|&(i, v)| self.weights[i] * v)
            .sum::<f64>()
            + self.bias
    }

    /// Class 1 when the decision value is positive.
    pub fn predict(&self, x: &[(usize, f64)]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }

    pub fn predict_all(&self, xs: &[SparseVec]) -> Vec<u8> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

/// Fits tf-idf on the training documents, trains the SVM and reports test
/// metrics.
pub fn run_baseline<S: AsRef<str>>(
    train_docs: &[Vec<S>],
    train_labels: &[u8],
    test_docs: &[Vec<S>],
    test_labels: &[u8],
    cfg: &SvmConfig,
) -> Result<(Tfidf, LinearSvm, MetricsReport), TrainError> {
    let tfidf = Tfidf::fit(train_docs)?;
    let x = tfidf.transform_all(train_docs);
    let model = svm_train(&x, train_labels, tfidf.len(), cfg)?;
    let predicted = model.predict_all(&tfidf.transform_all(test_docs));
    let report = MetricsReport::from_predictions(&predicted, test_labels)?;
    Ok((tfidf, model, report))
}

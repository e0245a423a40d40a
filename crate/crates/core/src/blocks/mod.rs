//! Classification heads over frozen feature sequences.
//!
//! A head maps one `T×d` sequence plus its validity mask to two logits. All
//! heads keep weights as `[in, out]` matrices applied as `x·W + b`; pooling
//! is always masked, and spatial convolutions see masked positions as zeros,
//! so trailing padding never changes the logits.

mod attention;
mod cv;
mod init;
mod naive;
mod recurrent;

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Graph, Scalar, Tensor, TensorError, Var};

pub use attention::{axel_channels, axel_channels_of};
pub use init::glorot_bound;

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("invalid block config: {0}")]
    Config(String),
    #[error("feature dimension mismatch: head expects {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, BlockError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Attention and average branches only.
    AttAvgFc,
    /// Attention and max branches only.
    AttMaxFc,
    /// Separate FC weights for the max and average branches.
    AttAvgFcMaxFc,
    /// Channel sum instead of the 1×1 fusion convolution.
    SumFusion,
    /// tanh instead of ReLU after the FC.
    TanhAct,
    /// Extra variance-pooled branch through the shared FC.
    VarFc,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::AttAvgFc,
        Ablation::AttMaxFc,
        Ablation::AttAvgFcMaxFc,
        Ablation::SumFusion,
        Ablation::TanhAct,
        Ablation::VarFc,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    DenseFirstToken,
    MaxPool,
    AvgPool,
    LstmHead { layers: usize },
    Attention,
    Rcab,
    Cbam,
    Csar,
    Ram,
    Axel,
    AxelAblation(Ablation),
}

impl Variant {
    /// Every head variant, with both LSTM depths and all ablations.
    pub fn all() -> Vec<Variant> {
        let mut v = vec![
            Variant::DenseFirstToken,
            Variant::MaxPool,
            Variant::AvgPool,
            Variant::LstmHead { layers: 1 },
            Variant::LstmHead { layers: 2 },
            Variant::Attention,
            Variant::Rcab,
            Variant::Cbam,
            Variant::Csar,
            Variant::Ram,
            Variant::Axel,
        ];
        v.extend(Ablation::ALL.map(Variant::AxelAblation));
        v
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Variant::LstmHead { .. })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::AttAvgFc => "att_avg_fc",
            Ablation::AttMaxFc => "att_max_fc",
            Ablation::AttAvgFcMaxFc => "att_avg_fc_max_fc",
            Ablation::SumFusion => "sum_fusion",
            Ablation::TanhAct => "tanh_act",
            Ablation::VarFc => "var_fc",
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::DenseFirstToken => f.write_str("dense_first_token"),
            Variant::MaxPool => f.write_str("max_pool"),
            Variant::AvgPool => f.write_str("avg_pool"),
            Variant::LstmHead { layers } => write!(f, "lstm_head_{layers}"),
            Variant::Attention => f.write_str("attention"),
            Variant::Rcab => f.write_str("rcab"),
            Variant::Cbam => f.write_str("cbam"),
            Variant::Csar => f.write_str("csar"),
            Variant::Ram => f.write_str("ram"),
            Variant::Axel => f.write_str("axel"),
            Variant::AxelAblation(a) => write!(f, "axel_{a}"),
        }
    }
}

fn default_hidden() -> usize {
    128
}

fn default_reduction() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub variant: Variant,
    /// Feature dimension `d` of the input sequence.
    pub dim: usize,
    /// LSTM state size per direction.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Channel-attention reduction ratio; bottleneck is `max(1, d / r)`.
    #[serde(default = "default_reduction")]
    pub reduction: usize,
    /// Dropout before the output layer, training mode only.
    #[serde(default)]
    pub dropout: f64,
    /// Score positions with `v·tanh(W h + b)` instead of `v·h`.
    #[serde(default)]
    pub projected_attention: bool,
}

impl BlockConfig {
    pub fn new(variant: Variant, dim: usize) -> Self {
        Self {
            variant,
            dim,
            hidden: default_hidden(),
            reduction: default_reduction(),
            dropout: 0.0,
            projected_attention: false,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_reduction(mut self, reduction: usize) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BlockError::Config(m));
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.reduction == 0 {
            return bad("reduction must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if let Variant::LstmHead { layers } = self.variant {
            if !(1..=2).contains(&layers) {
                return bad(format!("lstm_head supports 1 or 2 layers, got {layers}"));
            }
            if self.hidden == 0 {
                return bad("hidden must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Channel-attention bottleneck width.
    pub fn bottleneck(&self) -> usize {
        (self.dim / self.reduction).max(1)
    }
}

/// Shape and initialisation of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// `(fan_in, fan_out)` for Glorot-uniform init; `None` means zeros.
    pub fans: Option<(usize, usize)>,
}

fn weight(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        fans: Some((fan_in, fan_out)),
    }
}

fn bias(name: impl Into<String>, len: usize) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: vec![len],
        fans: None,
    }
}

fn dense(prefix: &str, n_in: usize, n_out: usize) -> [ParamSpec; 2] {
    [
        weight(format!("{prefix}.w"), &[n_in, n_out], n_in, n_out),
        bias(format!("{prefix}.b"), n_out),
    ]
}

/// The ordered parameter layout of a head.
pub fn param_specs(cfg: &BlockConfig) -> Vec<ParamSpec> {
    let d = cfg.dim;
    let k = cfg.bottleneck();
    let mut specs = Vec::new();
    let bottleneck = |specs: &mut Vec<ParamSpec>| {
        specs.extend(dense("ca.fc1", d, k));
        specs.extend(dense("ca.fc2", k, d));
    };
    let mut out_in = d;
    match cfg.variant {
        Variant::DenseFirstToken | Variant::MaxPool | Variant::AvgPool => {}
        Variant::LstmHead { layers } => {
            let h = cfg.hidden;
            for layer in 1..=layers {
                let d_in = if layer == 1 { d } else { 2 * h };
                for dir in ["fwd", "bwd"] {
                    let p = format!("lstm{layer}.{dir}");
                    specs.push(weight(format!("{p}.w_ih"), &[d_in, 4 * h], d_in, 4 * h));
                    specs.push(weight(format!("{p}.w_hh"), &[h, 4 * h], h, 4 * h));
                    specs.push(bias(format!("{p}.b"), 4 * h));
                }
            }
            out_in = 2 * h;
        }
        Variant::Attention => attention::specs(cfg, &mut specs),
        Variant::Rcab => bottleneck(&mut specs),
        Variant::Cbam => {
            bottleneck(&mut specs);
            specs.push(weight("sa.conv.w", &[1, 2, 7], 2 * 7, 7));
            specs.push(bias("sa.conv.b", 1));
        }
        Variant::Csar => {
            bottleneck(&mut specs);
            specs.push(weight("sa.conv.w", &[1, d, 3], d * 3, 3));
            specs.push(bias("sa.conv.b", 1));
            specs.extend(dense("fuse", 2 * d, d));
        }
        Variant::Ram => {
            bottleneck(&mut specs);
            specs.push(weight("sa.dw.w", &[d, 3], 3, 3));
            specs.push(bias("sa.dw.b", d));
        }
        Variant::Axel => attention::axel_specs(cfg, None, &mut specs),
        Variant::AxelAblation(a) => attention::axel_specs(cfg, Some(a), &mut specs),
    }
    specs.extend(dense("out", out_in, NUM_CLASSES));
    specs
}

/// Whether dropout masks are drawn: only while training with a rate above 0.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Parameters registered in one graph, looked up by name.
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| BlockError::UnknownParam(name.to_owned()))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// A built head: its config and named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Head<F: Scalar = f32> {
    config: BlockConfig,
    names: Vec<String>,
    params: Vec<Tensor<F>>,
}

impl Head<f32> {
    /// Builds a head with Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn build(config: &BlockConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = param_specs(config);
        let params = specs.iter().map(|s| init::init_param(s, &mut rng)).collect();
        Ok(Self {
            config: config.clone(),
            names: specs.into_iter().map(|s| s.name).collect(),
            params,
        })
    }
}

impl<F: Scalar> Head<F> {
    pub fn config(&self) -> &BlockConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<F>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    /// Replaces one parameter; the shape must not change.
    pub fn set_param(&mut self, name: &str, value: Tensor<F>) -> Result<()> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| BlockError::UnknownParam(name.to_owned()))?;
        if self.params[i].shape() != value.shape() {
            return Err(TensorError::Dimension {
                op: "set_param",
                lhs: self.params[i].shape().to_vec(),
                rhs: value.shape().to_vec(),
            }
            .into());
        }
        self.params[i] = value;
        Ok(())
    }

    /// Same head with every parameter replaced, in layout order.
    pub fn with_params(&self, params: Vec<Tensor<F>>) -> Result<Self> {
        let mut out = self.clone();
        if params.len() != out.params.len() {
            return Err(BlockError::Config(format!(
                "expected {} parameter tensors, got {}",
                out.params.len(),
                params.len()
            )));
        }
        for (name, p) in self.names.iter().zip(params) {
            out.set_param(name, p)?;
        }
        Ok(out)
    }

    pub fn cast<G: Scalar>(&self) -> Head<G> {
        Head {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers the parameters as gradient leaves of `g`.
    pub fn bind(&self, g: &mut Graph<F>) -> Bound {
        Bound {
            names: self.names.clone(),
            vars: self.params.iter().map(|p| g.param(p.clone())).collect(),
        }
    }

    /// Logits `[1, 2]` for one sequence `x[T, d]`.
    pub fn forward(&self, g: &mut Graph<F>, p: &Bound, x: Var, mask: &[bool], mode: &mut Mode) -> Result<Var> {
        let (t, d) = g.value(x).dims2("head")?;
        if d != self.config.dim {
            return Err(BlockError::Dim {
                expected: self.config.dim,
                got: d,
            });
        }
        if mask.len() != t {
            return Err(TensorError::Dimension {
                op: "head mask",
                lhs: vec![t, d],
                rhs: vec![mask.len()],
            }
            .into());
        }
        if !mask.iter().any(|&m| m) {
            return Err(TensorError::EmptySequence { op: "head" }.into());
        }
        let cfg = &self.config;
        let features = match cfg.variant {
            Variant::DenseFirstToken => naive::first_token(g, x, mask)?,
            Variant::MaxPool => naive::pooled(g, x, mask, crate::tensor::PoolKind::Max)?,
            Variant::AvgPool => naive::pooled(g, x, mask, crate::tensor::PoolKind::Avg)?,
            Variant::LstmHead { layers } => recurrent::final_states(g, p, x, mask, layers, cfg.hidden)?,
            Variant::Attention => attention::context(g, p, x, mask, cfg.projected_attention, "att")?,
            Variant::Rcab => cv::rcab(g, p, x, mask)?,
            Variant::Cbam => cv::cbam(g, p, x, mask)?,
            Variant::Csar => cv::csar(g, p, x, mask)?,
            Variant::Ram => cv::ram(g, p, x, mask)?,
            Variant::Axel => attention::axel(g, p, cfg, None, x, mask)?,
            Variant::AxelAblation(a) => attention::axel(g, p, cfg, Some(a), x, mask)?,
        };
        let features = match mode {
            Mode::Train(rng) if cfg.dropout > 0.0 => g.dropout(features, cfg.dropout, true, rng)?,
            _ => features,
        };
        Ok(g.linear(features, p.get("out.w")?, p.get("out.b")?)?)
    }

    /// Logits `[B, 2]` for a batch of `(sequence, mask)` inputs.
    pub fn forward_batch(
        &self,
        g: &mut Graph<F>,
        p: &Bound,
        batch: &[(Var, &[bool])],
        mode: &mut Mode,
    ) -> Result<Var> {
        let rows = batch
            .iter()
            .map(|&(x, mask)| self.forward(g, p, x, mask, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(g.concat(&rows, 0)?)
    }

    /// Eval-mode logits of one sequence.
    pub fn logits(&self, x: &Tensor<F>, mask: &[bool]) -> Result<Vec<F>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let xv = g.input(x.clone());
        let out = self.forward(&mut g, &p, xv, mask, &mut Mode::Eval)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Mean cross-entropy over a batch and its gradient for every parameter.
    pub fn loss_and_gradients(
        &self,
        batch: &[(Tensor<F>, Vec<bool>)],
        labels: &[usize],
        mode: &mut Mode,
    ) -> Result<(f64, Vec<Tensor<F>>)> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let inputs: Vec<(Var, &[bool])> = batch.iter().map(|(x, m)| (g.input(x.clone()), m.as_slice())).collect();
        let logits = self.forward_batch(&mut g, &p, &inputs, mode)?;
        let loss = g.cross_entropy(logits, labels)?;
        let grads = g.backward(loss)?;
        let value = g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
        let grads = p
            .vars()
            .iter()
            .zip(&self.params)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect();
        Ok((value, grads))
    }

    /// Eval-mode mean cross-entropy of a batch.
    pub fn loss(&self, batch: &[(Tensor<F>, Vec<bool>)], labels: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let inputs: Vec<(Var, &[bool])> = batch.iter().map(|(x, m)| (g.input(x.clone()), m.as_slice())).collect();
        let logits = self.forward_batch(&mut g, &p, &inputs, &mut Mode::Eval)?;
        let loss = g.cross_entropy(logits, labels)?;
        Ok(g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN))
    }
}

/// Relative gradient error of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradError {
    pub name: String,
    /// `f32` analytic gradient against `f64` central differences.
    pub f32_vs_numeric: f64,
    /// `f64` analytic gradient against `f64` central differences.
    pub f64_vs_numeric: f64,
}

/// Eval-mode finite-difference check of every parameter gradient of `head`
/// on a labelled batch. Central differences run on an `f64` copy.
pub fn check_gradients(
    head: &Head<f32>,
    batch: &[(Tensor<f32>, Vec<bool>)],
    labels: &[usize],
    eps: f64,
) -> Result<Vec<GradError>> {
    let (_, analytic32) = head.loss_and_gradients(batch, labels, &mut Mode::Eval)?;
    let head64: Head<f64> = head.cast();
    let batch64: Vec<(Tensor<f64>, Vec<bool>)> = batch.iter().map(|(x, m)| (x.cast(), m.clone())).collect();
    let (_, analytic64) = head64.loss_and_gradients(&batch64, labels, &mut Mode::Eval)?;
    let mut failure = None;
    let numeric = crate::tensor::gradcheck::finite_difference(head64.params(), eps, |ps| {
        let perturbed = head64.with_params(ps.to_vec()).expect("same layout");
        perturbed.loss(&batch64, labels).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(head
        .names()
        .iter()
        .zip(analytic32.iter().zip(&analytic64).zip(&numeric))
        .map(|(name, ((a32, a64), n))| GradError {
            name: name.clone(),
            f32_vs_numeric: crate::tensor::gradcheck::relative_error(a32, n),
            f64_vs_numeric: crate::tensor::gradcheck::relative_error(a64, n),
        })
        .collect())
}

/// 0/1 vector of a mask, as a graph constant.
pub(crate) fn mask_input<F: Scalar>(g: &mut Graph<F>, mask: &[bool]) -> Var {
    let data = mask.iter().map(|&m| if m { F::one() } else { F::zero() }).collect();
    g.input(Tensor::vector(data))
}

/// `x[1, n]` from a rank-1 `[n]`.
pub(crate) fn as_row<F: Scalar>(g: &mut Graph<F>, v: Var) -> Result<Var> {
    let n = g.value(v).len();
    Ok(g.reshape(v, &[1, n])?)
}

#[cfg(test)]
mod tests;

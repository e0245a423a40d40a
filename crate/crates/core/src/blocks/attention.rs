//! Attention pooling and the AXEL head.
//!
//! AXEL stacks three `d`-wide channels, `[c_att; c_max; c_avg]`, where
//! `c_max = act(W_s·maxpool(H) + b_s)` and `c_avg = act(W_s·avgpool(H) + b_s)`
//! share `W_s`, and fuses them with a 1×1 convolution into one `d` vector.

use super::{as_row, bias, dense, weight, Ablation, BlockConfig, Bound, ParamSpec, Result};
use crate::tensor::{Activation, Graph, PoolKind, Scalar, Tensor, Var};

pub(super) fn specs(cfg: &BlockConfig, specs: &mut Vec<ParamSpec>) {
    let d = cfg.dim;
    specs.push(weight("att.v", &[d, 1], d, 1));
    if cfg.projected_attention {
        specs.extend(dense("att.proj", d, d));
    }
}

/// Number of stacked channels fed to the fusion step.
pub fn axel_channels(ablation: Option<Ablation>) -> usize {
    match ablation {
        Some(Ablation::AttAvgFc | Ablation::AttMaxFc) => 2,
        Some(Ablation::VarFc) => 4,
        _ => 3,
    }
}

pub(super) fn axel_specs(cfg: &BlockConfig, ablation: Option<Ablation>, out: &mut Vec<ParamSpec>) {
    let d = cfg.dim;
    specs(cfg, out);
    if ablation == Some(Ablation::AttAvgFcMaxFc) {
        out.extend(dense("fc_max", d, d));
        out.extend(dense("fc_avg", d, d));
    } else {
        out.extend(dense("fc", d, d));
    }
    if ablation != Some(Ablation::SumFusion) {
        let c = axel_channels(ablation);
        out.push(weight("fuse.w", &[1, c, 1], c, 1));
        out.push(bias("fuse.b", 1));
    }
}

/// Attention context `αᵀH` of shape `[1, d]`, `α = masked softmax(H·v)`.
pub(super) fn context<F: Scalar>(
    g: &mut Graph<F>,
    p: &Bound,
    x: Var,
    mask: &[bool],
    projected: bool,
    prefix: &str,
) -> Result<Var> {
    let keys = if projected {
        let z = g.linear(x, p.get(&format!("{prefix}.proj.w"))?, p.get(&format!("{prefix}.proj.b"))?)?;
        g.tanh(z)?
    } else {
        x
    };
    let scores = g.matmul(keys, p.get(&format!("{prefix}.v"))?)?;
    let scores = g.transpose(scores)?;
    let alpha = g.masked_softmax(scores, 1, Some(mask))?;
    Ok(g.matmul(alpha, x)?)
}

fn branch<F: Scalar>(
    g: &mut Graph<F>,
    p: &Bound,
    x: Var,
    mask: &[bool],
    kind: PoolKind,
    fc: &str,
    act: Activation,
) -> Result<Var> {
    let pooled = g.pool_axis(x, mask, kind)?;
    let pooled = as_row(g, pooled)?;
    let z = g.linear(pooled, p.get(&format!("{fc}.w"))?, p.get(&format!("{fc}.b"))?)?;
    Ok(g.activation(z, act)?)
}

/// The fused `[1, d]` representation of full AXEL or one of its ablations.
pub(super) fn axel<F: Scalar>(
    g: &mut Graph<F>,
    p: &Bound,
    cfg: &BlockConfig,
    ablation: Option<Ablation>,
    x: Var,
    mask: &[bool],
) -> Result<Var> {
    Ok(axel_parts(g, p, cfg, ablation, x, mask)?.1)
}

/// `(stacked [C, d], fused [1, d])`.
fn axel_parts<F: Scalar>(
    g: &mut Graph<F>,
    p: &Bound,
    cfg: &BlockConfig,
    ablation: Option<Ablation>,
    x: Var,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let act = if ablation == Some(Ablation::TanhAct) {
        Activation::Tanh
    } else {
        Activation::Relu
    };
    let (fc_max, fc_avg) = if ablation == Some(Ablation::AttAvgFcMaxFc) {
        ("fc_max", "fc_avg")
    } else {
        ("fc", "fc")
    };
    let mut channels = vec![context(g, p, x, mask, cfg.projected_attention, "att")?];
    if ablation != Some(Ablation::AttAvgFc) {
        channels.push(branch(g, p, x, mask, PoolKind::Max, fc_max, act)?);
    }
    if ablation != Some(Ablation::AttMaxFc) {
        channels.push(branch(g, p, x, mask, PoolKind::Avg, fc_avg, act)?);
    }
    if ablation == Some(Ablation::VarFc) {
        channels.push(branch(g, p, x, mask, PoolKind::Var, "fc", act)?);
    }
    let stacked = g.concat(&channels, 0)?;
    let fused = if ablation == Some(Ablation::SumFusion) {
        let ones = g.input(Tensor::full(&[1, channels.len()], F::one()));
        g.matmul(ones, stacked)?
    } else {
        g.conv1d(stacked, p.get("fuse.w")?, p.get("fuse.b")?)?
    };
    Ok((stacked, fused))
}

/// Rows of the stacked channel matrix, in stacking order (attention, max,
/// avg, var; absent branches skipped).
pub fn axel_channels_of<F: Scalar>(head: &super::Head<F>, x: &Tensor<F>, mask: &[bool]) -> Result<Vec<Vec<F>>> {
    let ablation = match head.config().variant {
        super::Variant::Axel => None,
        super::Variant::AxelAblation(a) => Some(a),
        other => return Err(super::BlockError::Config(format!("{other} is not an AXEL head"))),
    };
    let mut g = Graph::new();
    let p = head.bind(&mut g);
    let xv = g.input(x.clone());
    let (stacked, _) = axel_parts(&mut g, &p, head.config(), ablation, xv, mask)?;
    let t = g.value(stacked);
    Ok((0..t.shape()[0]).map(|r| t.row(r).to_vec()).collect())
}

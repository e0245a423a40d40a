//! Channel/spatial attention blocks adapted from 2-D vision modules to
//! sequences: channels are the `d` features, the spatial axis is `T`.
//!
//! Each block ends with a masked average pool over positions. Spatial
//! convolutions run over the transposed sequence with masked positions
//! zeroed, padded so the output keeps length `T`.

use super::{as_row, mask_input, Bound, Result};
use crate::tensor::{Graph, PoolKind, Scalar, Var};

/// `fc2(relu(fc1(s)))` for `s[1, d]`: the pre-sigmoid channel logits.
fn bottleneck<F: Scalar>(g: &mut Graph<F>, p: &Bound, s: Var) -> Result<Var> {
    let z = g.linear(s, p.get("ca.fc1.w")?, p.get("ca.fc1.b")?)?;
    let z = g.relu(z)?;
    Ok(g.linear(z, p.get("ca.fc2.w")?, p.get("ca.fc2.b")?)?)
}

fn pooled_row<F: Scalar>(g: &mut Graph<F>, x: Var, mask: &[bool], kind: PoolKind) -> Result<Var> {
    let v = g.pool_axis(x, mask, kind)?;
    as_row(g, v)
}

/// Gate `[d]` from a squeeze over positions with `kind`.
fn channel_gate<F: Scalar>(g: &mut Graph<F>, p: &Bound, x: Var, mask: &[bool], kind: PoolKind) -> Result<Var> {
    let s = pooled_row(g, x, mask, kind)?;
    let z = bottleneck(g, p, s)?;
    let gate = g.sigmoid(z)?;
    let d = g.value(gate).len();
    Ok(g.reshape(gate, &[d])?)
}

/// `xᵀ[d, T]` with masked columns zeroed and `pad` zero columns on each side.
fn masked_channels<F: Scalar>(g: &mut Graph<F>, x: Var, mask: &[bool], pad: usize) -> Result<Var> {
    let xt = g.transpose(x)?;
    let m = mask_input(g, mask);
    let xt = g.scale_cols(xt, m)?;
    Ok(g.pad_cols(xt, pad, pad)?)
}

/// Channel-only squeeze-excitation.
pub(super) fn rcab<F: Scalar>(g: &mut Graph<F>, p: &Bound, x: Var, mask: &[bool]) -> Result<Var> {
    let gate = channel_gate(g, p, x, mask, PoolKind::Avg)?;
    let scaled = g.scale_cols(x, gate)?;
    pooled_row(g, scaled, mask, PoolKind::Avg)
}

/// Channel gate from max and avg squeezes through one MLP, then a width-7
/// spatial gate over per-position `[max; avg]` feature statistics.
pub(super) fn cbam<F: Scalar>(g: &mut Graph<F>, p: &Bound, x: Var, mask: &[bool]) -> Result<Var> {
    let avg = pooled_row(g, x, mask, PoolKind::Avg)?;
    let max = pooled_row(g, x, mask, PoolKind::Max)?;
    let za = bottleneck(g, p, avg)?;
    let zm = bottleneck(g, p, max)?;
    let z = g.add(za, zm)?;
    let gate = g.sigmoid(z)?;
    let d = g.value(gate).len();
    let gate = g.reshape(gate, &[d])?;
    let h1 = g.scale_cols(x, gate)?;

    let t = mask.len();
    let fmax = g.pool(h1, 1, None, PoolKind::Max)?;
    let fmax = g.reshape(fmax, &[1, t])?;
    let favg = g.pool(h1, 1, None, PoolKind::Avg)?;
    let favg = g.reshape(favg, &[1, t])?;
    let stats = g.concat(&[fmax, favg], 0)?;
    let m = mask_input(g, mask);
    let stats = g.scale_cols(stats, m)?;
    let stats = g.pad_cols(stats, 3, 3)?;
    let logits = g.conv1d(stats, p.get("sa.conv.w")?, p.get("sa.conv.b")?)?;
    let spatial = g.sigmoid(logits)?;
    let spatial = g.reshape(spatial, &[t])?;
    let h2 = g.scale_rows(h1, spatial)?;
    pooled_row(g, h2, mask, PoolKind::Avg)
}

/// Parallel channel and spatial gates on `H`; the two gated maps are
/// concatenated feature-wise and fused back to `d` by a 1×1 convolution.
pub(super) fn csar<F: Scalar>(g: &mut Graph<F>, p: &Bound, x: Var, mask: &[bool]) -> Result<Var> {
    let gate = channel_gate(g, p, x, mask, PoolKind::Avg)?;
    let hc = g.scale_cols(x, gate)?;

    let t = mask.len();
    let xt = masked_channels(g, x, mask, 1)?;
    let logits = g.conv1d(xt, p.get("sa.conv.w")?, p.get("sa.conv.b")?)?;
    let spatial = g.sigmoid(logits)?;
    let spatial = g.reshape(spatial, &[t])?;
    let hs = g.scale_rows(x, spatial)?;

    let both = g.concat(&[hc, hs], 1)?;
    let fused = g.linear(both, p.get("fuse.w")?, p.get("fuse.b")?)?;
    pooled_row(g, fused, mask, PoolKind::Avg)
}

/// Variance-squeezed channel logits plus depthwise width-3 spatial logits,
/// summed before one sigmoid into a full `T×d` gate.
pub(super) fn ram<F: Scalar>(g: &mut Graph<F>, p: &Bound, x: Var, mask: &[bool]) -> Result<Var> {
    let s = pooled_row(g, x, mask, PoolKind::Var)?;
    let channel = bottleneck(g, p, s)?;
    let d = g.value(channel).len();
    let channel = g.reshape(channel, &[d])?;

    let xt = masked_channels(g, x, mask, 1)?;
    let spatial = g.depthwise_conv1d(xt, p.get("sa.dw.w")?, p.get("sa.dw.b")?)?;
    let spatial = g.transpose(spatial)?;
    let logits = g.add_row(spatial, channel)?;
    let gate = g.sigmoid(logits)?;
    let gated = g.mul(x, gate)?;
    pooled_row(g, gated, mask, PoolKind::Avg)
}

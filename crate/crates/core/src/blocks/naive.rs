use super::{as_row, Result};
use crate::tensor::{Graph, PoolKind, Scalar, TensorError, Var};

/// Row 0 of `x`, which must be a valid position.
pub(super) fn first_token<F: Scalar>(g: &mut Graph<F>, x: Var, mask: &[bool]) -> Result<Var> {
    if !mask[0] {
        return Err(TensorError::Invalid("first token is masked".into()).into());
    }
    Ok(g.select_rows(x, &[0])?)
}

pub(super) fn pooled<F: Scalar>(g: &mut Graph<F>, x: Var, mask: &[bool], kind: PoolKind) -> Result<Var> {
    let v = g.pool_axis(x, mask, kind)?;
    as_row(g, v)
}

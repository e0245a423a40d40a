use super::{Bound, Result};
use crate::tensor::{lstm_forward, Graph, LstmCell, LstmLayer, Scalar, Var};

fn cell(p: &Bound, layer: usize, dir: &str) -> Result<LstmCell> {
    let name = |part: &str| format!("lstm{layer}.{dir}.{part}");
    Ok(LstmCell {
        w_ih: p.get(&name("w_ih"))?,
        w_hh: p.get(&name("w_hh"))?,
        bias: p.get(&name("b"))?,
    })
}

/// `[h_fwd(last) | h_bwd(first)]` of a stacked BiLSTM over the valid rows,
/// shape `[1, 2h]`.
pub(super) fn final_states<F: Scalar>(
    g: &mut Graph<F>,
    p: &Bound,
    x: Var,
    mask: &[bool],
    layers: usize,
    hidden: usize,
) -> Result<Var> {
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let valid = if rows.len() == mask.len() { x } else { g.select_rows(x, &rows)? };
    let stack = (1..=layers)
        .map(|l| {
            Ok(LstmLayer {
                forward: Some(cell(p, l, "fwd")?),
                backward: Some(cell(p, l, "bwd")?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = lstm_forward(g, valid, &stack)?;
    let last = g.select_rows(out, &[rows.len() - 1])?;
    let fwd_last = g.slice_cols(last, 0, hidden)?;
    let first = g.select_rows(out, &[0])?;
    let bwd_first = g.slice_cols(first, hidden, 2 * hidden)?;
    Ok(g.concat(&[fwd_last, bwd_first], 1)?)
}

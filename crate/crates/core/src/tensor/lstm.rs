use super::{Graph, Result, Scalar, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

/// Parameters of one LSTM direction. Gates are packed `[i | f | g | o]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    /// `[d_in, 4h]`
    pub w_ih: Var,
    /// `[h, 4h]`
    pub w_hh: Var,
    /// `[4h]`
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmLayer {
    pub forward: Option<LstmCell>,
    pub backward: Option<LstmCell>,
}

impl LstmLayer {
    pub fn direction(&self) -> Option<Direction> {
        match (self.forward, self.backward) {
            (Some(_), Some(_)) => Some(Direction::Bidirectional),
            (Some(_), None) => Some(Direction::Forward),
            (None, Some(_)) => Some(Direction::Backward),
            (None, None) => None,
        }
    }
}

/// Runs stacked (bi)LSTM layers over `x[T, d_in]`.
///
/// Each layer's output `[T, d_out]` feeds the next; a bidirectional layer
/// emits `[h_fwd | h_bwd]` per position so `d_out = 2h`. Zero initial state.
pub fn lstm_forward<F: Scalar>(g: &mut Graph<F>, x: Var, layers: &[LstmLayer]) -> Result<Var> {
    let mut input = x;
    for layer in layers {
        let fwd = layer.forward.map(|c| run_direction(g, input, c, false)).transpose()?;
        let bwd = layer.backward.map(|c| run_direction(g, input, c, true)).transpose()?;
        input = match (fwd, bwd) {
            (Some(f), Some(b)) => g.concat(&[f, b], 1)?,
            (Some(h), None) | (None, Some(h)) => h,
            (None, None) => return Err(TensorError::Invalid("LSTM layer without cells".into())),
        };
    }
    Ok(input)
}

fn run_direction<F: Scalar>(g: &mut Graph<F>, x: Var, cell: LstmCell, reverse: bool) -> Result<Var> {
    let (steps, _) = g.value(x).dims2("lstm")?;
    let (hidden, four_h) = g.value(cell.w_hh).dims2("lstm")?;
    if four_h != 4 * hidden {
        return Err(TensorError::Dimension {
            op: "lstm",
            lhs: vec![hidden, four_h],
            rhs: vec![hidden, 4 * hidden],
        });
    }
    let projected = g.linear(x, cell.w_ih, cell.bias)?;

    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    let mut outputs: Vec<Option<Var>> = vec![None; steps];
    let mut state: Option<(Var, Var)> = None;
    for t in order {
        let mut z = g.select_rows(projected, &[t])?;
        if let Some((h_prev, _)) = state {
            let rec = g.matmul(h_prev, cell.w_hh)?;
            z = g.add(z, rec)?;
        }
        let i = g.slice_cols(z, 0, hidden)?;
        let i = g.sigmoid(i)?;
        let f = g.slice_cols(z, hidden, 2 * hidden)?;
        let f = g.sigmoid(f)?;
        let cand = g.slice_cols(z, 2 * hidden, 3 * hidden)?;
        let cand = g.tanh(cand)?;
        let o = g.slice_cols(z, 3 * hidden, 4 * hidden)?;
        let o = g.sigmoid(o)?;

        let mut c = g.mul(i, cand)?;
        if let Some((_, c_prev)) = state {
            let kept = g.mul(f, c_prev)?;
            c = g.add(c, kept)?;
        }
        let squashed = g.tanh(c)?;
        let h = g.mul(o, squashed)?;
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    let rows: Vec<Var> = outputs.into_iter().flatten().collect();
    g.concat(&rows, 0)
}

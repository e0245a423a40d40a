use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Named hyperparameter combinations. `M` is not listed here on purpose:
/// it has no published values and must be given explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PresetId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub id: PresetId,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// LSTM state size; `None` for heads without a recurrent part.
    pub rnn_hidden: Option<usize>,
    pub rnn_dropout: Option<f64>,
}

const fn row(id: PresetId, learning_rate: f64, batch_size: usize, rnn: Option<(usize, f64)>) -> Preset {
    let (rnn_hidden, rnn_dropout) = match rnn {
        Some((h, p)) => (Some(h), Some(p)),
        None => (None, None),
    };
    Preset {
        id,
        learning_rate,
        batch_size,
        rnn_hidden,
        rnn_dropout,
    }
}

pub const PRESETS: [Preset; 12] = [
    row(PresetId::A, 0.001, 32, Some((128, 0.0))),
    row(PresetId::B, 0.001, 32, Some((128, 0.2))),
    row(PresetId::C, 0.0005, 16, Some((128, 0.2))),
    row(PresetId::D, 0.00005, 64, Some((128, 0.0))),
    row(PresetId::E, 0.00005, 64, None),
    row(PresetId::F, 0.0005, 64, None),
    row(PresetId::G, 0.00001, 64, None),
    row(PresetId::H, 0.0005, 32, Some((64, 0.2))),
    row(PresetId::I, 0.0005, 32, Some((128, 0.2))),
    row(PresetId::J, 0.0005, 64, Some((128, 0.2))),
    row(PresetId::K, 0.00005, 32, None),
    row(PresetId::L, 0.00005, 32, Some((128, 0.0))),
];

impl PresetId {
    pub const ALL: [PresetId; 12] = [
        PresetId::A,
        PresetId::B,
        PresetId::C,
        PresetId::D,
        PresetId::E,
        PresetId::F,
        PresetId::G,
        PresetId::H,
        PresetId::I,
        PresetId::J,
        PresetId::K,
        PresetId::L,
    ];

    pub fn preset(self) -> Preset {
        PRESETS[self as usize]
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for PresetId {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        PresetId::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                TrainError::Config(format!(
                    "unknown preset {s:?}; A to L are built in, anything else needs explicit values"
                ))
            })
    }
}

use rand::Rng;

use super::ParamSpec;
use crate::tensor::Tensor;

/// Half-width `sqrt(6 / (fan_in + fan_out))` of the Glorot-uniform range.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(super) fn init_param<R: Rng>(spec: &ParamSpec, rng: &mut R) -> Tensor<f32> {
    let n: usize = spec.shape.iter().product();
    let data = match spec.fans {
        Some((fan_in, fan_out)) => {
            let a = glorot_bound(fan_in, fan_out);
            (0..n).map(|_| rng.gen_range(-a..a) as f32).collect()
        }
        None => vec![0.0; n],
    };
    Tensor::new(spec.shape.clone(), data).expect("spec shapes are positive")
}

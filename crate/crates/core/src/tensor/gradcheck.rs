//! Central finite differences on the `f64` shadow path.

use super::{Scalar, Tensor};

/// Numerical gradient of `loss` w.r.t. every element of `params`.
///
/// `loss` receives the perturbed parameter set; entries are perturbed one at
/// a time by `±eps`.
pub fn finite_difference<L>(params: &[Tensor<f64>], eps: f64, mut loss: L) -> Vec<Tensor<f64>>
where
    L: FnMut(&[Tensor<f64>]) -> f64,
{
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = Vec::with_capacity(params[p].len());
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let up = loss(&work);
            work[p].data_mut()[i] = orig - eps;
            let down = loss(&work);
            work[p].data_mut()[i] = orig;
            grad.push((up - down) / (2.0 * eps));
        }
        out.push(Tensor::new(params[p].shape().to_vec(), grad).expect("same shape"));
    }
    out
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, 1e-8)`.
pub fn relative_error<F: Scalar>(analytic: &Tensor<F>, numeric: &Tensor<f64>) -> f64 {
    let a = analytic.to_f64_vec();
    let diff = a
        .iter()
        .zip(numeric.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / analytic.l2_norm().max(numeric.l2_norm()).max(1e-8)
}

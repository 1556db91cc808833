use super::ModelParams;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Heavy-ball SGD producing a new candidate; `params` is left untouched so a
/// rejected candidate can simply be dropped.
///
/// `buffer ← m·buffer + g`, `w ← w − η·buffer`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &ModelParams<T>,
    grad: &[T],
    eta: f64,
    momentum: f64,
) -> Result<ModelParams<T>> {
    if grad.len() != params.weights.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, model has {}",
            grad.len(),
            params.weights.len()
        )));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid("eta", format!("{eta} must be finite and > 0")));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(invalid("momentum", format!("{momentum} outside [0, 1)")));
    }
    let (eta, m) = (T::from_f64_lossy(eta), T::from_f64_lossy(momentum));
    let momentum: Vec<T> = params
        .momentum
        .iter()
        .zip(grad)
        .map(|(b, g)| m * *b + *g)
        .collect();
    let weights = params
        .weights
        .iter()
        .zip(&momentum)
        .map(|(w, b)| *w - eta * *b)
        .collect();
    Ok(ModelParams {
        shape: params.shape,
        weights,
        momentum,
    })
}

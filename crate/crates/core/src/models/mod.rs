//! Small differentiable models with exact per-sample gradients.
//!
//! Parameters live in one flat vector per model. Layouts:
//!
//! * `Linear`: `[w (d), b]`, squared-error loss `½(wᵀx + b − y)²`
//! * `Logistic`: `[W (k×d, row-major), b (k)]`, softmax cross-entropy
//! * `Mlp1`: `[W1 (h×d), b1 (h), W2 (k×h), b2 (k)]`, tanh hidden layer,
//!   softmax cross-entropy

mod clip;
mod optim;

pub use clip::{clip_per_sample, noisy_mean_gradient, GradientBatch};
pub use optim::sgd_momentum_step;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Logistic,
    Mlp1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// 1 for linear regression, number of classes otherwise.
    pub output_dim: usize,
    /// Only meaningful for `Mlp1`.
    pub hidden_dim: usize,
}

impl ModelShape {
    pub fn linear(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::Linear,
            input_dim,
            output_dim: 1,
            hidden_dim: 0,
        }
    }

    pub fn logistic(input_dim: usize, classes: usize) -> Self {
        Self {
            kind: ModelKind::Logistic,
            input_dim,
            output_dim: classes,
            hidden_dim: 0,
        }
    }

    pub fn mlp1(input_dim: usize, hidden_dim: usize, classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp1,
            input_dim,
            output_dim: classes,
            hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Shape(m.to_string()));
        if self.input_dim == 0 {
            return bad("input dimension must be >= 1");
        }
        match self.kind {
            ModelKind::Linear if self.output_dim != 1 => bad("linear model has exactly one output"),
            ModelKind::Logistic | ModelKind::Mlp1 if self.output_dim < 2 => {
                bad("classifiers need at least two classes")
            }
            ModelKind::Mlp1 if self.hidden_dim == 0 => bad("mlp1 needs a hidden dimension >= 1"),
            _ => Ok(()),
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.kind != ModelKind::Linear
    }

    pub fn n_params(&self) -> usize {
        let (d, k, h) = (self.input_dim, self.output_dim, self.hidden_dim);
        match self.kind {
            ModelKind::Linear => d + 1,
            ModelKind::Logistic => k * d + k,
            ModelKind::Mlp1 => h * d + h + k * h + k,
        }
    }
}

/// Class index for classifiers, real target for regression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label<T> {
    Class(usize),
    Value(T),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example<T> {
    pub features: Vec<T>,
    pub label: Label<T>,
}

impl<T: Scalar> Example<T> {
    pub fn classified(features: Vec<T>, class: usize) -> Self {
        Self {
            features,
            label: Label::Class(class),
        }
    }

    pub fn regression(features: Vec<T>, target: T) -> Self {
        Self {
            features,
            label: Label::Value(target),
        }
    }
}

/// Model weights plus the SGD momentum buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    shape: ModelShape,
    weights: Vec<T>,
    momentum: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let n = shape.n_params();
        Ok(Self {
            shape,
            weights: vec![T::zero(); n],
            momentum: vec![T::zero(); n],
        })
    }

    /// Each layer's weights and biases uniform in `[-1/√fan_in, 1/√fan_in]`.
    pub fn init_uniform<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(shape)?;
        let mut fill = |slice: &mut [T], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in slice {
                *w = T::from_f64_lossy(rng.random_range(-bound..=bound));
            }
        };
        let (d, h) = (shape.input_dim, shape.hidden_dim);
        match shape.kind {
            ModelKind::Linear | ModelKind::Logistic => fill(&mut params.weights, d),
            ModelKind::Mlp1 => {
                let (first, second) = params.weights.split_at_mut(h * d + h);
                fill(first, d);
                fill(second, h);
            }
        }
        Ok(params)
    }

    pub fn from_parts(shape: ModelShape, weights: Vec<T>, momentum: Vec<T>) -> Result<Self> {
        shape.validate()?;
        let n = shape.n_params();
        if weights.len() != n || momentum.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} weights and momentum entries, got {} and {}",
                weights.len(),
                momentum.len()
            )));
        }
        if weights.iter().chain(&momentum).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(Self {
            shape,
            weights,
            momentum,
        })
    }

    pub fn with_weights(shape: ModelShape, weights: Vec<T>) -> Result<Self> {
        let momentum = vec![T::zero(); weights.len()];
        Self::from_parts(shape, weights, momentum)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn momentum(&self) -> &[T] {
        &self.momentum
    }

    pub fn check_example(&self, ex: &Example<T>) -> Result<()> {
        if ex.features.len() != self.shape.input_dim {
            return Err(Error::Shape(format!(
                "example has {} features, model expects {}",
                ex.features.len(),
                self.shape.input_dim
            )));
        }
        match (ex.label, self.shape.is_classifier()) {
            (Label::Class(c), true) if c < self.shape.output_dim => Ok(()),
            (Label::Class(c), true) => Err(Error::Shape(format!(
                "class {c} out of range for {} classes",
                self.shape.output_dim
            ))),
            (Label::Value(_), false) => Ok(()),
            _ => Err(Error::Shape("label kind does not match model kind".into())),
        }
    }

    /// Regression prediction or class logits.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let (d, k, h) = (self.shape.input_dim, self.shape.output_dim, self.shape.hidden_dim);
        let w = &self.weights;
        match self.shape.kind {
            ModelKind::Linear => vec![dot(&w[..d], x) + w[d]],
            ModelKind::Logistic => affine(&w[..k * d], &w[k * d..], x),
            ModelKind::Mlp1 => {
                let (w1, rest) = w.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                let hidden: Vec<T> = affine(w1, b1, x).into_iter().map(T::tanh).collect();
                affine(w2, b2, &hidden)
            }
        }
    }

    /// Predicted class (argmax of logits, first maximum wins); `None` for
    /// regression.
    pub fn predict_class(&self, x: &[T]) -> Option<usize> {
        if !self.shape.is_classifier() {
            return None;
        }
        let logits = self.forward(x);
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        Some(best)
    }

    /// Loss on a single example, writing its gradient into `grad`.
    fn loss_and_grad(&self, ex: &Example<T>, grad: &mut [T]) -> T {
        let (d, k, h) = (self.shape.input_dim, self.shape.output_dim, self.shape.hidden_dim);
        let x = &ex.features;
        let w = &self.weights;
        match (self.shape.kind, ex.label) {
            (ModelKind::Linear, Label::Value(y)) => {
                let r = dot(&w[..d], x) + w[d] - y;
                for (g, xi) in grad[..d].iter_mut().zip(x) {
                    *g = r * *xi;
                }
                grad[d] = r;
                half::<T>() * r * r
            }
            (ModelKind::Logistic, Label::Class(y)) => {
                let logits = affine(&w[..k * d], &w[k * d..], x);
                let (loss, delta) = softmax_xent(&logits, y);
                let (gw, gb) = grad.split_at_mut(k * d);
                outer_into(gw, &delta, x);
                gb.copy_from_slice(&delta);
                loss
            }
            (ModelKind::Mlp1, Label::Class(y)) => {
                let (w1, rest) = w.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                let hidden: Vec<T> = affine(w1, b1, x).into_iter().map(T::tanh).collect();
                let logits = affine(w2, b2, &hidden);
                let (loss, delta_out) = softmax_xent(&logits, y);

                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(k * h);
                outer_into(gw2, &delta_out, &hidden);
                gb2.copy_from_slice(&delta_out);
                for j in 0..h {
                    let back: T = (0..k).map(|c| w2[c * h + j] * delta_out[c]).sum();
                    gb1[j] = back * (T::one() - hidden[j] * hidden[j]);
                }
                outer_into(gw1, gb1, x);
                loss
            }
            _ => unreachable!("labels are checked before evaluation"),
        }
    }

    fn sample_loss(&self, ex: &Example<T>) -> T {
        let y_hat = self.forward(&ex.features);
        match ex.label {
            Label::Value(y) => {
                let r = y_hat[0] - y;
                half::<T>() * r * r
            }
            Label::Class(c) => log_sum_exp(&y_hat) - y_hat[c],
        }
    }

    fn check_batch(&self, batch: &[Example<T>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        batch.iter().try_for_each(|ex| self.check_example(ex))
    }
}

fn half<T: Scalar>() -> T {
    T::from_f64_lossy(0.5)
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// `W x + b` with `W` stored row-major.
fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| dot(&w[r * cols..(r + 1) * cols], x) + *bias)
        .collect()
}

fn outer_into<T: Scalar>(out: &mut [T], rows: &[T], cols: &[T]) {
    let n = cols.len();
    for (r, a) in rows.iter().enumerate() {
        for (o, b) in out[r * n..(r + 1) * n].iter_mut().zip(cols) {
            *o = *a * *b;
        }
    }
}

fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    max + v.iter().map(|x| (*x - max).exp()).sum::<T>().ln()
}

/// Cross-entropy and its gradient w.r.t. the logits (`softmax − onehot`).
fn softmax_xent<T: Scalar>(logits: &[T], class: usize) -> (T, Vec<T>) {
    let lse = log_sum_exp(logits);
    let mut delta: Vec<T> = logits.iter().map(|z| (*z - lse).exp()).collect();
    delta[class] -= T::one();
    (lse - logits[class], delta)
}

/// Mean per-sample loss over a non-empty batch.
pub fn loss<T: Scalar>(params: &ModelParams<T>, batch: &[Example<T>]) -> Result<T> {
    params.check_batch(batch)?;
    let total: T = batch.iter().map(|ex| params.sample_loss(ex)).sum();
    Ok(total / T::from_usize(batch.len()).expect("batch length fits the scalar type"))
}

/// Mean loss over the examples of `data` selected by `indices`.
pub fn loss_at<T: Scalar>(params: &ModelParams<T>, data: &[Example<T>], indices: &[usize]) -> Result<T> {
    if indices.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = T::zero();
    for &i in indices {
        let ex = &data[i];
        params.check_example(ex)?;
        total += params.sample_loss(ex);
    }
    Ok(total / T::from_usize(indices.len()).expect("batch length fits the scalar type"))
}

/// Exact gradient of every sample's loss, unclipped.
pub fn per_sample_gradients<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[Example<T>],
) -> Result<GradientBatch<T>> {
    params.check_batch(batch)?;
    Ok(gradients_of(params, batch.iter()))
}

/// [`per_sample_gradients`] for the examples of `data` selected by
/// `indices`; an empty selection yields an empty batch.
pub fn per_sample_gradients_at<T: Scalar>(
    params: &ModelParams<T>,
    data: &[Example<T>],
    indices: &[usize],
) -> Result<GradientBatch<T>> {
    for &i in indices {
        params.check_example(&data[i])?;
    }
    Ok(gradients_of(params, indices.iter().map(|&i| &data[i])))
}

fn gradients_of<'a, T: Scalar>(
    params: &ModelParams<T>,
    examples: impl Iterator<Item = &'a Example<T>>,
) -> GradientBatch<T> {
    let n = params.shape.n_params();
    let per_sample = examples
        .map(|ex| {
            let mut g = vec![T::zero(); n];
            params.loss_and_grad(ex, &mut g);
            g
        })
        .collect();
    GradientBatch::unclipped(per_sample)
}

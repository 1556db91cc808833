use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Per-sample gradients of one sampled batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBatch<T> {
    per_sample: Vec<Vec<T>>,
    /// Set once every vector has been clipped to this L2 bound.
    clip_bound: Option<T>,
}

impl<T: Scalar> GradientBatch<T> {
    pub fn unclipped(per_sample: Vec<Vec<T>>) -> Self {
        Self {
            per_sample,
            clip_bound: None,
        }
    }

    pub fn per_sample(&self) -> &[Vec<T>] {
        &self.per_sample
    }

    pub fn clip_bound(&self) -> Option<T> {
        self.clip_bound
    }

    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    /// Elementwise mean, summed in sample order.
    pub fn mean(&self) -> Option<Vec<T>> {
        let sum = self.sum()?;
        let n = T::from_usize(self.len())?;
        Some(sum.into_iter().map(|v| v / n).collect())
    }

    /// Elementwise sum in sample order, so the result does not depend on
    /// how the gradients were produced.
    pub fn sum(&self) -> Option<Vec<T>> {
        let first = self.per_sample.first()?;
        let mut acc = vec![T::zero(); first.len()];
        for g in &self.per_sample {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += *v;
            }
        }
        Some(acc)
    }
}

fn l2_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Scale each vector by `1 / max(1, ‖g‖₂ / C)`. Vectors already inside the
/// ball are left untouched.
pub fn clip_per_sample<T: Scalar>(batch: &GradientBatch<T>, clip_bound: T) -> Result<GradientBatch<T>> {
    if !(clip_bound > T::zero()) || !clip_bound.is_finite() {
        return Err(invalid("clip_bound", format!("{clip_bound} must be finite and > 0")));
    }
    let per_sample = batch
        .per_sample
        .iter()
        .map(|g| {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("per-sample gradient".into()));
            }
            let norm = l2_norm(g);
            if norm <= clip_bound {
                Ok(g.clone())
            } else {
                let scale = clip_bound / norm;
                Ok(g.iter().map(|v| *v * scale).collect())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientBatch {
        per_sample,
        clip_bound: Some(clip_bound),
    })
}

/// `(Σ clipped gradients + N(0, σ²C²·I)) / n` with `n` the realised batch size.
///
/// Returns `None` for an empty batch: there is nothing to release and the
/// caller skips the step.
pub fn noisy_mean_gradient<T: Scalar, R: Rng + ?Sized>(
    batch: &GradientBatch<T>,
    noise_multiplier: f64,
    rng: &mut R,
) -> Result<Option<Vec<T>>> {
    let clip_bound = batch
        .clip_bound
        .ok_or_else(|| invalid("batch", "gradients must be clipped before adding noise"))?;
    if !(noise_multiplier >= 0.0) || !noise_multiplier.is_finite() {
        return Err(invalid(
            "noise_multiplier",
            format!("{noise_multiplier} must be finite and >= 0"),
        ));
    }
    let Some(mut sum) = batch.sum() else {
        return Ok(None);
    };
    let std = T::from_f64_lossy(noise_multiplier) * clip_bound;
    let n = T::from_usize(batch.len()).expect("batch length fits the scalar type");
    for v in &mut sum {
        let noise = if noise_multiplier > 0.0 {
            std * T::standard_normal(rng)
        } else {
            T::zero()
        };
        *v = (*v + noise) / n;
    }
    Ok(Some(sum))
}

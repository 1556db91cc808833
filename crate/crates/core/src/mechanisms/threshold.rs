//! Clipping of the validation loss difference and the noisy acceptance test.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal::std_normal_cdf;
use crate::error::{invalid, Error, Result};

/// Parameters of the validation-phase Gaussian mechanism.
///
/// The clipped loss difference has sensitivity `2·clip_bound`; the noise
/// standard deviation is `noise_multiplier · 2·clip_bound` and an update is
/// accepted when the noisy value falls below `beta · clip_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationMechanismSpec {
    pub clip_bound: f64,
    /// Zero gives a noiseless sign test (non-private).
    pub noise_multiplier: f64,
    pub beta: f64,
}

impl ValidationMechanismSpec {
    pub fn new(clip_bound: f64, noise_multiplier: f64, beta: f64) -> Result<Self> {
        let spec = Self {
            clip_bound,
            noise_multiplier,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_bound > 0.0) || !self.clip_bound.is_finite() {
            return Err(invalid("clip_bound", format!("{} must be finite and > 0", self.clip_bound)));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(invalid(
                "noise_multiplier",
                format!("{} must be finite and >= 0", self.noise_multiplier),
            ));
        }
        if self.beta.is_nan() {
            return Err(invalid("beta", "NaN"));
        }
        Ok(())
    }

    /// Acceptance threshold `Z = β·C_v`.
    pub fn threshold(&self) -> f64 {
        self.beta * self.clip_bound
    }

    pub fn sensitivity(&self) -> f64 {
        2.0 * self.clip_bound
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_multiplier * self.sensitivity()
    }

    /// Analytic acceptance rate for a loss change of the given sign under
    /// minimal clipping. Does not depend on `clip_bound`.
    pub fn acceptance_probability(&self, sign: LossChange) -> Result<f64> {
        acceptance_probability(sign, self.beta, self.noise_multiplier)
    }
}

/// How the loss difference is mapped into `[-C_v, C_v]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Keep only the sign: `±C_v`.
    #[default]
    Minimal,
    /// Clamp to the interval, keeping interior values.
    Interval,
}

fn check_clip_inputs(delta_e: f64, clip_bound: f64) -> Result<()> {
    if !delta_e.is_finite() {
        return Err(Error::NonFinite(format!("loss difference {delta_e}")));
    }
    if !(clip_bound > 0.0) || !clip_bound.is_finite() {
        return Err(invalid("clip_bound", format!("{clip_bound} must be finite and > 0")));
    }
    Ok(())
}

/// Sign discretisation: `-C_v` for a decrease, `+C_v` otherwise.
///
/// A difference of exactly zero maps to `+C_v`, the rejection-favouring side.
pub fn minimal_clip(delta_e: f64, clip_bound: f64) -> Result<f64> {
    check_clip_inputs(delta_e, clip_bound)?;
    Ok(if delta_e < 0.0 { -clip_bound } else { clip_bound })
}

/// `min(max(ΔE, -C_v), C_v)`.
pub fn interval_clip(delta_e: f64, clip_bound: f64) -> Result<f64> {
    check_clip_inputs(delta_e, clip_bound)?;
    Ok(delta_e.clamp(-clip_bound, clip_bound))
}

pub fn clip_loss_difference(delta_e: f64, clip_bound: f64, mode: ClipMode) -> Result<f64> {
    match mode {
        ClipMode::Minimal => minimal_clip(delta_e, clip_bound),
        ClipMode::Interval => interval_clip(delta_e, clip_bound),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub accepted: bool,
    pub noisy_value: f64,
}

/// Clip `delta_e`, add `N(0, (2·C_v·σ_v)²)` and compare against `β·C_v`.
pub fn noisy_threshold_test<R: Rng + ?Sized>(
    delta_e: f64,
    spec: &ValidationMechanismSpec,
    mode: ClipMode,
    rng: &mut R,
) -> Result<ThresholdOutcome> {
    spec.validate()?;
    let clipped = clip_loss_difference(delta_e, spec.clip_bound, mode)?;
    let z: f64 = StandardNormal.sample(rng);
    let noisy_value = clipped + spec.noise_std() * z;
    Ok(ThresholdOutcome {
        accepted: noisy_value < spec.threshold(),
        noisy_value,
    })
}

/// Sign of the true loss difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChange {
    Negative,
    Positive,
}

/// Probability that [`noisy_threshold_test`] accepts under minimal clipping:
/// `Φ((β+1)/(2σ_v))` for a decrease and `Φ((β-1)/(2σ_v))` for an increase.
pub fn acceptance_probability(sign: LossChange, beta: f64, sigma_v: f64) -> Result<f64> {
    if !(sigma_v > 0.0) || !sigma_v.is_finite() {
        return Err(invalid("sigma_v", format!("{sigma_v} must be finite and > 0")));
    }
    if beta.is_nan() {
        return Err(invalid("beta", "NaN"));
    }
    let shift = match sign {
        LossChange::Negative => 1.0,
        LossChange::Positive => -1.0,
    };
    Ok(std_normal_cdf((beta + shift) / (2.0 * sigma_v)))
}

//! Gaussian mechanism with selective release, and the Rényi divergence of
//! the truncated normals it induces on neighbouring inputs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal::{log_std_normal_cdf, log_std_normal_window, std_normal_cdf, std_normal_pdf};
use crate::error::{invalid, Error, Result};

/// Hard cap on internal redraws of [`selective_release`].
pub const MAX_RELEASE_DRAWS: u64 = 1_000_000;
/// Windows with less probability mass than this are refused up front.
pub const MIN_WINDOW_MASS: f64 = 1e-12;

/// Normal distribution `N(mean, scale²)` restricted to `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussianSpec {
    pub mean: f64,
    pub scale: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedGaussianSpec {
    pub fn new(mean: f64, scale: f64, lower: f64, upper: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean", format!("{mean} must be finite")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid("scale", format!("{scale} must be finite and > 0")));
        }
        check_window(lower, upper)?;
        let spec = Self {
            mean,
            scale,
            lower,
            upper,
        };
        if spec.log_mass() == f64::NEG_INFINITY {
            return Err(Error::EmptyWindow { lower, upper });
        }
        Ok(spec)
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    /// ln P(lower <= X <= upper) for the untruncated normal.
    pub fn log_mass(&self) -> f64 {
        log_std_normal_window(self.standardize(self.lower), self.standardize(self.upper))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        let z = self.standardize(x);
        (std_normal_pdf(z).ln() - self.log_mass()).exp() / self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let lo = self.standardize(self.lower);
        (log_std_normal_window(lo, self.standardize(x)) - self.log_mass()).exp()
    }

    pub fn mean(&self) -> f64 {
        let lo = self.standardize(self.lower);
        let hi = self.standardize(self.upper);
        let density = |z: f64| if z.is_finite() { std_normal_pdf(z) } else { 0.0 };
        self.mean + self.scale * (density(lo) - density(hi)) / self.log_mass().exp()
    }
}

fn check_window(lower: f64, upper: f64) -> Result<()> {
    if lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
        return Err(invalid("interval", format!("[{lower}, {upper}] is not a valid window")));
    }
    if !(lower < upper) {
        return Err(invalid("interval", format!("lower {lower} must be < upper {upper}")));
    }
    Ok(())
}

/// Release `f + N(0, μ²σ²)` conditioned on landing in `[lower, upper]`.
///
/// `true_value` is first clipped to `[0, μ]`, which fixes the sensitivity at
/// `μ`. Draws outside the window are discarded and redrawn; only the accepted
/// draw leaves this function.
pub fn selective_release<R: Rng + ?Sized>(
    true_value: f64,
    sensitivity: f64,
    sigma: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    if !true_value.is_finite() {
        return Err(Error::NonFinite(format!("query value {true_value}")));
    }
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(invalid("sensitivity", format!("{sensitivity} must be finite and > 0")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("{sigma} must be finite and > 0")));
    }
    check_window(lower, upper)?;

    let center = true_value.clamp(0.0, sensitivity);
    let scale = sensitivity * sigma;
    let log_mass = log_std_normal_window((lower - center) / scale, (upper - center) / scale);
    if !(log_mass >= MIN_WINDOW_MASS.ln()) {
        return Err(Error::ReleaseAborted(format!(
            "window [{lower}, {upper}] holds probability {:e} < {MIN_WINDOW_MASS:e}",
            log_mass.exp()
        )));
    }
    for _ in 0..MAX_RELEASE_DRAWS {
        let z: f64 = StandardNormal.sample(rng);
        let draw = center + scale * z;
        if (lower..=upper).contains(&draw) {
            return Ok(draw);
        }
    }
    Err(Error::ReleaseAborted(format!(
        "no draw landed in [{lower}, {upper}] after {MAX_RELEASE_DRAWS} attempts"
    )))
}

/// Which ordered pair of neighbouring outputs the divergence compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceDirection {
    /// `D_α(f(·; 0) ‖ f(·; μ))`
    ZeroVsMu,
    /// `D_α(f(·; μ) ‖ f(·; 0))`
    MuVsZero,
}

/// Closed-form Rényi divergence of order `alpha` between the truncated
/// normals `N(0, (μσ)²)` and `N(μ, (μσ)²)` restricted to `[lower, upper]`:
///
/// `α/(2σ²) + (1/(α-1)) ln[ P_q^(α-1) / P_p^α · P_s ]`
///
/// where `P_m` is the mass of `[lower, upper]` under `N(m, (μσ)²)`, `p` is the
/// mean of the first argument, `q` the mean of the second and `s` the mean of
/// the tilted product `p^α q^(1-α)` (`(1-α)μ` or `αμ`). All masses are handled
/// in log space.
pub fn truncated_renyi_divergence(
    direction: DivergenceDirection,
    mu: f64,
    sigma: f64,
    lower: f64,
    upper: f64,
    alpha: f64,
) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid("mu", format!("{mu} must be finite and > 0")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("{sigma} must be finite and > 0")));
    }
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(invalid("alpha", format!("order {alpha} must be finite and > 1")));
    }
    check_window(lower, upper)?;

    let scale = mu * sigma;
    let (first, second, tilted) = match direction {
        DivergenceDirection::ZeroVsMu => (0.0, mu, (1.0 - alpha) * mu),
        DivergenceDirection::MuVsZero => (mu, 0.0, alpha * mu),
    };
    let log_mass = |center: f64| -> Result<f64> {
        let v = log_std_normal_window((lower - center) / scale, (upper - center) / scale);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EmptyWindow { lower, upper })
        }
    };
    let log_term = (alpha - 1.0) * log_mass(second)? - alpha * log_mass(first)? + log_mass(tilted)?;
    Ok(alpha / (2.0 * sigma * sigma) + log_term / (alpha - 1.0))
}

/// The two ratios bounding the log term of the upper-truncated divergence
/// (lower end at −∞):
///
/// `A = Φ((b-μ)/μσ)^(α-1) Φ((b+(α-1)μ)/μσ) / Φ(b/μσ)^α`
/// `B = Φ(b/μσ)^(α-1) Φ((b-αμ)/μσ) / Φ((b-μ)/μσ)^α`
///
/// Log-concavity of Φ gives `A, B <= 1`, hence the selective release costs
/// no more than the plain Gaussian mechanism.
pub fn upper_truncation_ratios(mu: f64, sigma: f64, upper: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0) || !(sigma > 0.0) || !(alpha > 1.0) || !upper.is_finite() {
        return Err(invalid(
            "ratios",
            format!("need mu > 0, sigma > 0, alpha > 1, finite b; got {mu}, {sigma}, {alpha}, {upper}"),
        ));
    }
    let s = mu * sigma;
    let lp = |x: f64| log_std_normal_cdf(x / s);
    let log_a = (alpha - 1.0) * lp(upper - mu) + lp(upper + (alpha - 1.0) * mu) - alpha * lp(upper);
    let log_b = (alpha - 1.0) * lp(upper) + lp(upper - alpha * mu) - alpha * lp(upper - mu);
    Ok((log_a.exp(), log_b.exp()))
}

/// Probability that a Gaussian release centred on `center` lands in the window.
pub fn window_probability(center: f64, scale: f64, lower: f64, upper: f64) -> f64 {
    let lo = (lower - center) / scale;
    let hi = (upper - center) / scale;
    if lo.is_finite() && hi.is_finite() && lo < 0.0 && hi > 0.0 {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    } else {
        log_std_normal_window(lo, hi).exp()
    }
}

//! Randomisation machinery of the selective-update step: clipping of the
//! validation loss difference, the noisy threshold test, the Gaussian
//! mechanism with selective release and the divergence calculus that
//! certifies it.

mod normal;
mod selective;
mod threshold;

pub use normal::{log_std_normal_cdf, log_std_normal_window, std_normal_cdf, std_normal_pdf};
pub use selective::{
    selective_release, truncated_renyi_divergence, upper_truncation_ratios, window_probability,
    DivergenceDirection, TruncatedGaussianSpec, MAX_RELEASE_DRAWS, MIN_WINDOW_MASS,
};
pub use threshold::{
    acceptance_probability, clip_loss_difference, interval_clip, minimal_clip,
    noisy_threshold_test, ClipMode, LossChange, ThresholdOutcome, ValidationMechanismSpec,
};

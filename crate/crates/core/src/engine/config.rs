use serde::{Deserialize, Serialize};

use crate::accountant::{PrivacyLedger, SubsampledGaussianSpec, DEFAULT_DELTA};
use crate::error::Result;
use crate::mechanisms::{ClipMode, ValidationMechanismSpec};

/// Hard cap on loop iterations (accepted, rejected and skipped together).
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Dpsur,
    Dpsgd,
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Learning rate η.
    pub eta: f64,
    pub momentum: f64,
    /// Expected training batch size B_t; the sampling rate is B_t / N.
    pub batch_train: usize,
    /// Expected validation batch size B_v.
    pub batch_valid: usize,
    /// Per-sample gradient L2 bound C_t.
    pub clip_train: f64,
    /// Loss-difference bound C_v.
    pub clip_valid: f64,
    /// σ_t. Zero disables privacy (no budget may then be set).
    pub sigma_train: f64,
    /// σ_v. Zero makes the validation test a plain sign test.
    pub sigma_valid: f64,
    /// Acceptance threshold parameter β; updates pass when the noisy loss
    /// difference is below β·C_v.
    pub beta: f64,
    pub clip_mode: ClipMode,
    /// Stop before the reported ε would exceed this; `None` runs without a budget.
    pub target_epsilon: Option<f64>,
    pub delta: f64,
    /// Accepted-update cap T.
    pub max_updates: u64,
    pub max_iterations: u64,
    pub seed: u64,
    /// Evaluate on the test set after every this many accepted updates (0: never).
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dpsur,
            eta: 0.5,
            momentum: 0.9,
            batch_train: 256,
            batch_valid: 256,
            clip_train: 1.0,
            clip_valid: 0.001,
            sigma_train: 1.5,
            sigma_valid: 1.0,
            beta: -1.0,
            clip_mode: ClipMode::Minimal,
            target_epsilon: Some(3.0),
            delta: DEFAULT_DELTA,
            max_updates: 1_000_000,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: 0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    /// Every problem with the configuration for a dataset of `n` examples.
    pub fn problems(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        let dpsur = self.algorithm == Algorithm::Dpsur;
        check(self.eta > 0.0 && self.eta.is_finite(), format!("eta = {} must be finite and > 0", self.eta));
        check(
            (0.0..1.0).contains(&self.momentum),
            format!("momentum = {} must lie in [0, 1)", self.momentum),
        );
        check(n > 0, "dataset is empty".into());
        check(
            self.batch_train >= 1 && self.batch_train <= n,
            format!("batch_train = {} must lie in [1, N = {n}]", self.batch_train),
        );
        if dpsur {
            check(
                self.batch_valid >= 1 && self.batch_valid <= n,
                format!("batch_valid = {} must lie in [1, N = {n}]", self.batch_valid),
            );
        }
        check(
            self.clip_train > 0.0 && self.clip_train.is_finite(),
            format!("clip_train = {} must be finite and > 0", self.clip_train),
        );
        check(
            self.clip_valid > 0.0 && self.clip_valid.is_finite(),
            format!("clip_valid = {} must be finite and > 0", self.clip_valid),
        );
        check(
            self.sigma_train >= 0.0 && self.sigma_train.is_finite(),
            format!("sigma_train = {} must be finite and >= 0", self.sigma_train),
        );
        check(
            self.sigma_valid >= 0.0 && self.sigma_valid.is_finite(),
            format!("sigma_valid = {} must be finite and >= 0", self.sigma_valid),
        );
        check(!self.beta.is_nan(), "beta is NaN".into());
        check(
            self.delta > 0.0 && self.delta < 1.0,
            format!("delta = {} must lie in (0, 1)", self.delta),
        );
        if let Some(eps) = self.target_epsilon {
            check(eps > 0.0 && eps.is_finite(), format!("target_epsilon = {eps} must be finite and > 0"));
            check(
                self.sigma_train > 0.0 && (!dpsur || self.sigma_valid > 0.0),
                "a privacy budget needs positive noise multipliers".into(),
            );
        }
        check(self.max_updates >= 1, "max_updates must be >= 1".into());
        check(self.max_iterations >= 1, "max_iterations must be >= 1".into());
        out
    }

    pub fn train_rate(&self, n: usize) -> f64 {
        self.batch_train as f64 / n as f64
    }

    pub fn valid_rate(&self, n: usize) -> f64 {
        self.batch_valid as f64 / n as f64
    }

    pub fn validation_spec(&self) -> Result<ValidationMechanismSpec> {
        ValidationMechanismSpec::new(self.clip_valid, self.sigma_valid, self.beta)
    }

    /// The privacy ledger this run charges, or `None` for a non-private run.
    pub fn ledger(&self, n: usize) -> Result<Option<PrivacyLedger>> {
        if self.sigma_train == 0.0 {
            return Ok(None);
        }
        let train = SubsampledGaussianSpec::new(self.train_rate(n), self.sigma_train)?;
        let valid = match self.algorithm {
            Algorithm::Dpsur if self.sigma_valid == 0.0 => return Ok(None),
            Algorithm::Dpsur => Some(SubsampledGaussianSpec::new(self.valid_rate(n), self.sigma_valid)?),
            Algorithm::Dpsgd => None,
        };
        PrivacyLedger::new(train, valid, self.delta).map(Some)
    }
}

//! Experiment harness: configuration, datasets, runs, verification and
//! accounting helpers behind the command-line tool.

mod config;
mod data;
mod experiment;
mod verify;

pub use config::{CsvDataConfig, DataConfig, ExperimentConfig, ModelConfig, Precision, Preset};
pub use data::{
    generate_synthetic, load_csv, load_csv_with_stats, write_csv, CsvSchema, Dataset, Normalization,
    NormalizationStats, Provenance, SyntheticData, SyntheticKind, SyntheticSpec, Task, TRAIN_FRACTION,
};
pub use experiment::{
    load_data, model_shape, resume_experiment, run_experiment, ExperimentResult, CHECKPOINT_FILE, RESULT_FILE,
    TRACE_FILE, TRACE_SCHEMA, TRAJECTORY_COLUMNS, TRAJECTORY_FILE,
};
pub use verify::{
    chi_square_uniform_p_value, sgm_moment_monte_carlo, truncation_grid, verify_mechanisms, Check, Status,
    VerificationReport, CHI_SQUARE_BINS, CHI_SQUARE_LEVEL, DEFAULT_BUDGET, MC_STANDARD_ERRORS,
    MIN_POWERED_BUDGET, RELEASE_SETTINGS, SGM_GRID,
};

use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_max_updates, PrivacyLedger, SubsampledGaussianSpec};
use crate::error::Result;

/// ε after `t` accepted updates, with the composed RDP curve behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountReport {
    pub t: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub best_order: u32,
    /// `(order, RDP)` pairs of the composed curve.
    pub curve: Vec<(u32, f64)>,
}

/// Account `t` accepted updates; `valid` is `None` for plain DPSGD.
pub fn account(
    train: SubsampledGaussianSpec,
    valid: Option<SubsampledGaussianSpec>,
    t: u64,
    delta: f64,
) -> Result<AccountReport> {
    let ledger = PrivacyLedger::new(train, valid, delta)?.with_updates(t);
    let curve = ledger.curve()?;
    let g = ledger.guarantee()?;
    Ok(AccountReport {
        t,
        epsilon: g.epsilon,
        delta,
        best_order: g.best_order,
        curve: curve.iter().collect(),
    })
}

/// Largest number of accepted updates within `(epsilon, delta)`.
pub fn calibrate(
    train: SubsampledGaussianSpec,
    valid: Option<SubsampledGaussianSpec>,
    epsilon: f64,
    delta: f64,
) -> Result<u64> {
    calibrate_max_updates(train, valid, epsilon, delta)
}

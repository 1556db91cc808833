//! Monte-Carlo and grid checks of the mechanisms and the accountant.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::accountant::{sgm_rdp, SubsampledGaussianSpec};
use crate::error::Result;
use crate::mechanisms::{
    noisy_threshold_test, selective_release, truncated_renyi_divergence, upper_truncation_ratios,
    ClipMode, DivergenceDirection, LossChange, TruncatedGaussianSpec, ValidationMechanismSpec,
};

/// Sample budgets below this are reported as underpowered instead of failing.
pub const MIN_POWERED_BUDGET: u64 = 100_000;
pub const DEFAULT_BUDGET: u64 = 1_000_000;
/// Monte-Carlo tolerance in standard errors.
pub const MC_STANDARD_ERRORS: f64 = 5.0;
/// Chi-square rows pass when the p-value exceeds this.
pub const CHI_SQUARE_LEVEL: f64 = 0.01;
pub const CHI_SQUARE_BINS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Underpowered,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Underpowered => "underpowered",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub case: String,
    pub analytic: f64,
    pub empirical: f64,
    pub tolerance: f64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub budget: u64,
    pub seed: u64,
    pub underpowered: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    /// `suite,case,analytic,empirical,tolerance,status`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["suite", "case", "analytic", "empirical", "tolerance", "status"])?;
        for c in &self.checks {
            w.write_record([
                c.suite.clone(),
                c.case.clone(),
                c.analytic.to_string(),
                c.empirical.to_string(),
                c.tolerance.to_string(),
                c.status.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per suite with its pass/fail/underpowered counts.
    pub fn summary(&self) -> String {
        let mut suites: Vec<&str> = Vec::new();
        for c in &self.checks {
            if !suites.contains(&c.suite.as_str()) {
                suites.push(&c.suite);
            }
        }
        let mut out = String::new();
        for s in suites {
            let count = |st: Status| self.checks.iter().filter(|c| c.suite == s && c.status == st).count();
            let (p, f, u) = (count(Status::Pass), count(Status::Fail), count(Status::Underpowered));
            let verdict = if f > 0 { "FAIL" } else if u > 0 { "UNDERPOWERED" } else { "PASS" };
            out.push_str(&format!("{verdict:<13}{s}: {p} pass, {f} fail, {u} underpowered\n"));
        }
        out
    }
}

struct Recorder {
    powered: bool,
    checks: Vec<Check>,
}

impl Recorder {
    fn exact(&mut self, suite: &str, case: String, analytic: f64, empirical: f64, tolerance: f64, ok: bool) {
        self.checks.push(Check {
            suite: suite.into(),
            case,
            analytic,
            empirical,
            tolerance,
            status: if ok { Status::Pass } else { Status::Fail },
        });
    }

    fn statistical(&mut self, suite: &str, case: String, analytic: f64, empirical: f64, tolerance: f64, ok: bool) {
        let status = match (self.powered, ok) {
            (false, _) => Status::Underpowered,
            (true, true) => Status::Pass,
            (true, false) => Status::Fail,
        };
        self.checks.push(Check {
            suite: suite.into(),
            case,
            analytic,
            empirical,
            tolerance,
            status,
        });
    }
}

/// Run every suite with `budget` samples per Monte-Carlo case.
pub fn verify_mechanisms(budget: u64, seed: u64) -> Result<VerificationReport> {
    let mut rec = Recorder {
        powered: budget >= MIN_POWERED_BUDGET,
        checks: Vec::new(),
    };
    let budget = budget.max(1);
    let stream = |id: u64| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(id);
        rng
    };
    acceptance_suite(&mut rec, budget, &mut stream(1))?;
    invariance_suite(&mut rec)?;
    release_suite(&mut rec, budget, &mut stream(2))?;
    truncation_suite(&mut rec)?;
    divergence_bound_suite(&mut rec)?;
    accountant_suite(&mut rec, budget, &mut stream(3))?;
    Ok(VerificationReport {
        budget,
        seed,
        underpowered: !rec.powered,
        checks: rec.checks,
    })
}

fn acceptance_suite<R: Rng>(rec: &mut Recorder, n: u64, rng: &mut R) -> Result<()> {
    for (sign, delta_e) in [(LossChange::Negative, -0.5), (LossChange::Positive, 0.5)] {
        for beta in [0.0, -1.0] {
            let spec = ValidationMechanismSpec::new(0.001, 1.0, beta)?;
            let p = spec.acceptance_probability(sign)?;
            let mut hits = 0u64;
            for _ in 0..n {
                hits += u64::from(noisy_threshold_test(delta_e, &spec, ClipMode::Minimal, rng)?.accepted);
            }
            let freq = hits as f64 / n as f64;
            let tol = MC_STANDARD_ERRORS * (p * (1.0 - p) / n as f64).sqrt();
            rec.statistical(
                "acceptance_rate",
                format!("{sign:?} beta={beta} sigma_v=1"),
                p,
                freq,
                tol,
                (freq - p).abs() <= tol,
            );
        }
    }
    Ok(())
}

fn invariance_suite(rec: &mut Recorder) -> Result<()> {
    for sign in [LossChange::Negative, LossChange::Positive] {
        for beta in [0.0, -1.0, 0.5] {
            let reference = ValidationMechanismSpec::new(0.1, 1.0, beta)?.acceptance_probability(sign)?;
            for clip in [1e-3, 1e-5] {
                let p = ValidationMechanismSpec::new(clip, 1.0, beta)?.acceptance_probability(sign)?;
                rec.exact(
                    "clip_invariance",
                    format!("{sign:?} beta={beta} C_v={clip}"),
                    reference,
                    p,
                    0.0,
                    p.to_bits() == reference.to_bits(),
                );
            }
        }
    }
    Ok(())
}

/// `(true value, sensitivity μ, σ, lower, upper)` for the release checks.
pub const RELEASE_SETTINGS: [(f64, f64, f64, f64, f64); 3] = [
    (0.0, 1.0, 1.0, f64::NEG_INFINITY, 0.5),
    (1.0, 1.0, 1.0, -0.5, 1.5),
    (0.3, 2.0, 0.5, 0.5, f64::INFINITY),
];

fn release_suite<R: Rng>(rec: &mut Recorder, n: u64, rng: &mut R) -> Result<()> {
    for (value, mu, sigma, lower, upper) in RELEASE_SETTINGS {
        let center = value.clamp(0.0, mu);
        let target = TruncatedGaussianSpec::new(center, mu * sigma, lower, upper)?;
        let mut bins = vec![0u64; CHI_SQUARE_BINS];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = selective_release(value, mu, sigma, lower, upper, rng)?;
            sum += x;
            sum_sq += x * x;
            let u = target.cdf(x);
            bins[((u * CHI_SQUARE_BINS as f64) as usize).min(CHI_SQUARE_BINS - 1)] += 1;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let tol = MC_STANDARD_ERRORS * (var / n as f64).sqrt();
        let case = format!("f={value} mu={mu} sigma={sigma} window=[{lower}, {upper}]");
        rec.statistical(
            "selective_release_mean",
            case.clone(),
            target.mean(),
            mean,
            tol,
            (mean - target.mean()).abs() <= tol,
        );
        let p = chi_square_uniform_p_value(&bins);
        rec.statistical("selective_release_chi_square", case, CHI_SQUARE_LEVEL, p, 0.0, p > CHI_SQUARE_LEVEL);
    }
    Ok(())
}

/// p-value of a chi-square test that `counts` are equally likely bins.
pub fn chi_square_uniform_p_value(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("at least two bins");
    dist.sf(stat)
}

/// Grid for the ratio bounds: μ, σ ∈ {0.5, 1, 2}, b ∈ {−2, 0, 2}, α ∈ {2, 4, 16, 64}.
pub fn truncation_grid() -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::new();
    for mu in [0.5, 1.0, 2.0] {
        for sigma in [0.5, 1.0, 2.0] {
            for b in [-2.0, 0.0, 2.0] {
                for alpha in [2.0, 4.0, 16.0, 64.0] {
                    out.push((mu, sigma, b, alpha));
                }
            }
        }
    }
    out
}

const RATIO_SLACK: f64 = 1e-12;

fn truncation_suite(rec: &mut Recorder) -> Result<()> {
    for (mu, sigma, b, alpha) in truncation_grid() {
        let (a_ratio, b_ratio) = upper_truncation_ratios(mu, sigma, b, alpha)?;
        for (name, v) in [("A", a_ratio), ("B", b_ratio)] {
            rec.exact(
                "upper_truncation_ratio",
                format!("{name} mu={mu} sigma={sigma} b={b} alpha={alpha}"),
                1.0,
                v,
                RATIO_SLACK,
                v <= 1.0 + RATIO_SLACK,
            );
        }
    }
    Ok(())
}

fn divergence_bound_suite(rec: &mut Recorder) -> Result<()> {
    for (mu, sigma, b, alpha) in truncation_grid() {
        let bound = alpha / (2.0 * sigma * sigma);
        for dir in [DivergenceDirection::ZeroVsMu, DivergenceDirection::MuVsZero] {
            let d = match truncated_renyi_divergence(dir, mu, sigma, f64::NEG_INFINITY, b, alpha) {
                Ok(d) => d,
                // Windows far in a tail have no representable mass; nothing to bound.
                Err(crate::error::Error::EmptyWindow { .. }) => continue,
                Err(e) => return Err(e),
            };
            rec.exact(
                "divergence_bound",
                format!("{dir:?} mu={mu} sigma={sigma} b={b} alpha={alpha}"),
                bound,
                d,
                RATIO_SLACK * bound,
                d <= bound * (1.0 + RATIO_SLACK),
            );
        }
    }
    Ok(())
}

/// `(q, σ, α)` grid for the accountant check.
pub const SGM_GRID: [(f64, f64, u32); 12] = [
    (0.01, 1.0, 2),
    (0.01, 1.0, 4),
    (0.01, 1.0, 8),
    (0.01, 2.0, 2),
    (0.01, 2.0, 4),
    (0.01, 2.0, 8),
    (0.1, 1.0, 2),
    (0.1, 1.0, 4),
    (0.1, 1.0, 8),
    (0.1, 2.0, 2),
    (0.1, 2.0, 4),
    (0.1, 2.0, 8),
];

fn accountant_suite<R: Rng>(rec: &mut Recorder, n: u64, rng: &mut R) -> Result<()> {
    for (q, sigma, alpha) in SGM_GRID {
        let analytic = ((alpha - 1) as f64 * sgm_rdp(&SubsampledGaussianSpec::new(q, sigma)?, alpha)?).exp();
        let (est, se) = sgm_moment_monte_carlo(q, sigma, alpha, n, rng);
        let tol = MC_STANDARD_ERRORS * se;
        rec.statistical(
            "sgm_moment",
            format!("q={q} sigma={sigma} alpha={alpha}"),
            analytic,
            est,
            tol,
            (est - analytic).abs() <= tol,
        );
    }
    Ok(())
}

/// Estimate `E_{z~N(0,σ²)}[(1 − q + q·e^{(2z−1)/(2σ²)})^α]` and its standard
/// error by importance sampling from an equal mixture of `N(k, σ²)`,
/// `k = 0..=α`, which covers every term of the binomial expansion.
pub fn sgm_moment_monte_carlo<R: Rng + ?Sized>(q: f64, sigma: f64, alpha: u32, n: u64, rng: &mut R) -> (f64, f64) {
    let s2 = sigma * sigma;
    let a = f64::from(alpha);
    let comps = alpha as usize + 1;
    let log_comps = (comps as f64).ln();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let k = rng.random_range(0..comps) as f64;
        let z: f64 = StandardNormal.sample(rng);
        let x = k + sigma * z;
        // Log densities up to the shared N(·, σ²) constant.
        let log_p0 = -x * x / (2.0 * s2);
        let terms: Vec<f64> = (0..comps).map(|j| -(x - j as f64).powi(2) / (2.0 * s2)).collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_g = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln() - log_comps;
        let ratio_exp = (2.0 * x - 1.0) / (2.0 * s2);
        // ln(1 − q + q·e^r) computed without overflow.
        let log_mix = if ratio_exp > 0.0 {
            ratio_exp + (q + (1.0 - q) * (-ratio_exp).exp()).ln()
        } else {
            (1.0 - q + q * ratio_exp.exp()).ln()
        };
        let w = (log_p0 - log_g + a * log_mix).exp();
        sum += w;
        sum_sq += w * w;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

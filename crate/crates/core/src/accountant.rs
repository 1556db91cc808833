//! Rényi-DP accounting for the subsampled Gaussian mechanism.
//!
//! Per-step RDP is evaluated on the integer order grid `2..=64`, composed
//! linearly across accepted updates and converted to `(ε, δ)`-DP by a
//! minimum over orders. Every function here is pure.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const MIN_ORDER: u32 = 2;
pub const MAX_ORDER: u32 = 64;
/// Upper bound for [`calibrate_max_updates`].
pub const MAX_CALIBRATED_UPDATES: u64 = 10_000_000;

/// The order grid `{2, …, 64}`.
pub fn default_orders() -> Vec<u32> {
    (MIN_ORDER..=MAX_ORDER).collect()
}

/// RDP guarantee ε(α) tabulated on a grid of integer orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    orders: Vec<u32>,
    values: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if orders.len() != values.len() {
            return Err(invalid(
                "values",
                format!("{} values for {} orders", values.len(), orders.len()),
            ));
        }
        if orders.iter().any(|&a| a < MIN_ORDER) {
            return Err(invalid("orders", "every order must be >= 2"));
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("orders", "orders must be strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid("values", format!("RDP value {v} is not finite and >= 0")));
        }
        Ok(Self { orders, values })
    }

    /// The all-zero curve on `orders`.
    pub fn zero(orders: Vec<u32>) -> Result<Self> {
        let values = vec![0.0; orders.len()];
        Self::new(orders, values)
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// `factor`-fold self-composition.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            orders: self.orders.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.orders.iter().copied().zip(self.values.iter().copied())
    }
}

/// Poisson-subsampled Gaussian mechanism with sampling rate `q` and noise
/// multiplier `sigma` (noise std over sensitivity).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampledGaussianSpec {
    pub q: f64,
    pub sigma: f64,
}

impl SubsampledGaussianSpec {
    pub fn new(q: f64, sigma: f64) -> Result<Self> {
        let spec = Self { q, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(invalid("q", format!("sampling rate {} outside (0, 1]", self.q)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(
                "sigma",
                format!("noise multiplier {} must be finite and > 0", self.sigma),
            ));
        }
        Ok(())
    }
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    if n <= 120 {
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * u128::from(n - i) / u128::from(i + 1);
        }
        (c as f64).ln()
    } else {
        (0..k)
            .map(|i| f64::from(n - i).ln() - f64::from(i + 1).ln())
            .sum()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// RDP of one invocation of the subsampled Gaussian mechanism at integer
/// order `alpha`:
///
/// `(1/(α-1)) ln Σ_k C(α,k) (1-q)^(α-k) q^k exp((k²-k)/(2σ²))`
///
/// The binomial sum is evaluated as a log-sum-exp, so large orders with
/// small σ do not overflow.
pub fn sgm_rdp(spec: &SubsampledGaussianSpec, alpha: u32) -> Result<f64> {
    spec.validate()?;
    if alpha < MIN_ORDER {
        return Err(invalid("alpha", format!("order {alpha} must be >= 2")));
    }
    if spec.q == 1.0 {
        // No subsampling: the plain Gaussian mechanism.
        return gaussian_rdp(spec.sigma, f64::from(alpha));
    }
    let log_q = spec.q.ln();
    let log_1mq = (-spec.q).ln_1p();
    let two_var = 2.0 * spec.sigma * spec.sigma;
    let terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            let kf = f64::from(k);
            let rest = alpha - k;
            let tail = if rest == 0 {
                0.0
            } else {
                f64::from(rest) * log_1mq
            };
            ln_binomial(alpha, k) + tail + kf * log_q + (kf * kf - kf) / two_var
        })
        .collect();
    let log_a = log_sum_exp(&terms);
    Ok((log_a / f64::from(alpha - 1)).max(0.0))
}

/// [`sgm_rdp`] on every order of `orders`.
pub fn sgm_curve(spec: &SubsampledGaussianSpec, orders: &[u32]) -> Result<RdpCurve> {
    let values = orders
        .iter()
        .map(|&a| sgm_rdp(spec, a))
        .collect::<Result<Vec<_>>>()?;
    RdpCurve::new(orders.to_vec(), values)
}

/// RDP of the (non-subsampled) Gaussian mechanism: `α / (2σ²)`.
pub fn gaussian_rdp(sigma: f64, alpha: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("noise multiplier {sigma} must be > 0")));
    }
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(invalid("alpha", format!("order {alpha} must be > 1")));
    }
    Ok(alpha / (2.0 * sigma * sigma))
}

/// Sequential composition: pointwise sum on a shared order grid.
pub fn compose(c1: &RdpCurve, c2: &RdpCurve) -> Result<RdpCurve> {
    if c1.orders != c2.orders {
        return Err(Error::GridMismatch);
    }
    Ok(RdpCurve {
        orders: c1.orders.clone(),
        values: c1.values.iter().zip(&c2.values).map(|(a, b)| a + b).collect(),
    })
}

/// Result of converting an RDP curve to `(ε, δ)`-DP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub delta: f64,
    pub best_order: u32,
}

/// Convert RDP to `(ε, δ)`-DP, minimising over the curve's orders
///
/// `ε(α) = R(α) + ln((α-1)/α) - (ln δ + ln α)/(α-1)`.
///
/// ε is floored at zero; `best_order` is the unclamped minimiser.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpGuarantee> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} outside (0, 1)")));
    }
    if curve.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let log_delta = delta.ln();
    let (best_order, epsilon) = curve
        .iter()
        .map(|(order, rdp)| {
            let a = f64::from(order);
            let eps = rdp + ((a - 1.0) / a).ln() - (log_delta + a.ln()) / (a - 1.0);
            (order, eps)
        })
        .fold((curve.orders[0], f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        });
    Ok(DpGuarantee {
        epsilon: epsilon.max(0.0),
        delta,
        best_order,
    })
}

/// Running privacy account of a selective-update training run.
///
/// Only accepted updates are charged: each one costs one subsampled-Gaussian
/// release for the gradient step and, when `valid` is set, one for the
/// validation test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub accepted_updates: u64,
    pub train: SubsampledGaussianSpec,
    pub valid: Option<SubsampledGaussianSpec>,
    pub delta: f64,
}

impl PrivacyLedger {
    pub fn new(
        train: SubsampledGaussianSpec,
        valid: Option<SubsampledGaussianSpec>,
        delta: f64,
    ) -> Result<Self> {
        let ledger = Self {
            accepted_updates: 0,
            train,
            valid,
            delta,
        };
        ledger.validate()?;
        Ok(ledger)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(v) = &self.valid {
            v.validate()?;
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("{} outside (0, 1)", self.delta)));
        }
        Ok(())
    }

    pub fn record_accepted(&mut self) {
        self.accepted_updates += 1;
    }

    /// The ledger after `t` accepted updates.
    pub fn with_updates(&self, t: u64) -> Self {
        Self {
            accepted_updates: t,
            ..self.clone()
        }
    }

    /// Composed RDP curve `t·R_train + t·R_valid` on the default grid.
    pub fn curve(&self) -> Result<RdpCurve> {
        PerUpdateCurves::new(self)?.after(self.accepted_updates)
    }

    pub fn guarantee(&self) -> Result<DpGuarantee> {
        rdp_to_dp(&self.curve()?, self.delta)
    }

    pub fn epsilon(&self) -> Result<f64> {
        ledger_epsilon(self)
    }
}

/// Reported ε of a ledger: compose `t` per-update training and validation
/// curves, then convert once.
pub fn ledger_epsilon(ledger: &PrivacyLedger) -> Result<f64> {
    Ok(ledger.guarantee()?.epsilon)
}

struct PerUpdateCurves {
    train: RdpCurve,
    valid: Option<RdpCurve>,
}

impl PerUpdateCurves {
    fn new(ledger: &PrivacyLedger) -> Result<Self> {
        ledger.validate()?;
        let orders = default_orders();
        Ok(Self {
            train: sgm_curve(&ledger.train, &orders)?,
            valid: ledger
                .valid
                .as_ref()
                .map(|v| sgm_curve(v, &orders))
                .transpose()?,
        })
    }

    fn after(&self, t: u64) -> Result<RdpCurve> {
        let t = t as f64;
        let train = self.train.scaled(t);
        match &self.valid {
            Some(valid) => compose(&train, &valid.scaled(t)),
            None => Ok(train),
        }
    }
}

/// Largest number of accepted updates whose ledger ε stays within
/// `epsilon_target`, capped at [`MAX_CALIBRATED_UPDATES`].
///
/// Returns 0 when a single update already overshoots the budget and fails
/// with [`Error::InfeasibleBudget`] when the target lies below the zero-update
/// conversion floor.
pub fn calibrate_max_updates(
    train: SubsampledGaussianSpec,
    valid: Option<SubsampledGaussianSpec>,
    epsilon_target: f64,
    delta: f64,
) -> Result<u64> {
    if !(epsilon_target > 0.0) {
        return Err(invalid("epsilon_target", format!("{epsilon_target} must be > 0")));
    }
    let ledger = PrivacyLedger::new(train, valid, delta)?;
    let curves = PerUpdateCurves::new(&ledger)?;
    let eps_at = |t: u64| -> Result<f64> { Ok(rdp_to_dp(&curves.after(t)?, delta)?.epsilon) };

    let floor = eps_at(0)?;
    if epsilon_target < floor {
        return Err(Error::InfeasibleBudget(format!(
            "target epsilon {epsilon_target} is below the conversion floor {floor:.6} at delta {delta}"
        )));
    }
    if eps_at(1)? > epsilon_target {
        return Ok(0);
    }
    // Invariant: eps_at(lo) <= target, and eps_at(hi) > target unless hi is the cap.
    let mut lo = 1u64;
    let mut hi = 2u64;
    while hi < MAX_CALIBRATED_UPDATES && eps_at(hi)? <= epsilon_target {
        lo = hi;
        hi = (hi * 2).min(MAX_CALIBRATED_UPDATES);
    }
    if hi == MAX_CALIBRATED_UPDATES && eps_at(hi)? <= epsilon_target {
        return Ok(hi);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eps_at(mid)? <= epsilon_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

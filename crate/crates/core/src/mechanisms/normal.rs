//! Standard normal CDF and its logarithm, accurate deep into both tails.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

/// Beyond this the CDF is 0 or 1 to well below the 1e-12 tolerance.
const SATURATION: f64 = 40.0;
/// Below this `erfc` loses range; the log-CDF switches to the Mills ratio.
const LOG_TAIL_SWITCH: f64 = -35.0;

/// Φ(x), the standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > SATURATION {
        1.0
    } else if x < -SATURATION {
        0.0
    } else if x >= 0.0 {
        1.0 - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Mills ratio `Φ(-z)/φ(z)` for large positive `z`, by backward evaluation
/// of the continued fraction `1/(z + 1/(z + 2/(z + 3/(z + …))))`.
fn mills_ratio(z: f64) -> f64 {
    let mut tail = z;
    for n in (1..=60).rev() {
        tail = z + f64::from(n) / tail;
    }
    1.0 / tail
}

/// ln Φ(x), finite for every finite `x`.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x >= LOG_TAIL_SWITCH {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() + mills_ratio(-x).ln()
    }
}

/// ln(1 - e^d) for d <= 0.
fn log1m_exp(d: f64) -> f64 {
    if d > -LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// ln(Φ(upper) - Φ(lower)); either end may be infinite.
///
/// Windows lying entirely in one tail are reflected into the lower tail and
/// evaluated as a ratio of log-CDFs, so no difference of two values close to
/// one is ever formed.
pub fn log_std_normal_window(lower: f64, upper: f64) -> f64 {
    if lower.is_nan() || upper.is_nan() {
        return f64::NAN;
    }
    if lower >= upper {
        return f64::NEG_INFINITY;
    }
    if lower == f64::NEG_INFINITY {
        return log_std_normal_cdf(upper);
    }
    if upper == f64::INFINITY {
        return log_std_normal_cdf(-lower);
    }
    if lower > 0.0 {
        return log_std_normal_window(-upper, -lower);
    }
    if upper <= 0.0 {
        let lu = log_std_normal_cdf(upper);
        if lu == f64::NEG_INFINITY {
            return lu;
        }
        let ll = log_std_normal_cdf(lower);
        return lu + log1m_exp(ll - lu);
    }
    (-(std_normal_cdf(lower) + std_normal_cdf(-upper))).ln_1p()
}

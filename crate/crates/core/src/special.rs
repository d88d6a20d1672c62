//! Error-function helpers.

use std::f64::consts::PI;

/// Above this argument `erfc` underflows and the asymptotic series takes over.
const ERFCX_ASYMPTOTIC: f64 = 26.0;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `exp(x^2)` with the rounding error of `x * x` folded back in.
fn exp_square(x: f64) -> f64 {
    let sq = x * x;
    let lo = x.mul_add(x, -sq);
    sq.exp() * (1.0 + lo)
}

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
///
/// Finite for all `x >= -26.6`; decays like `1 / (sqrt(pi) x)` for large `x`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * exp_square(x) - erfcx(-x);
    }
    if x < ERFCX_ASYMPTOTIC {
        return exp_square(x) * erfc(x);
    }
    // 1/(sqrt(pi) x) * sum_k (-1)^k (2k-1)!! / (2x^2)^k
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
    }
    sum / (PI.sqrt() * x)
}

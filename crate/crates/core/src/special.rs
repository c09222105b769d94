//! Log-space combinatorial and special functions.

use crate::error::{IcpError, Result};

/// Above this many terms `harmonic_shift` switches from the exact recurrence
/// sum to a difference of two digamma evaluations.
const HARMONIC_SUM_LIMIT: usize = 10_000;

/// `log(x (x+1) ... (x+n-1))`, the log of the rising factorial (Pochhammer symbol).
pub fn log_rising_factorial(x: f64, n: usize) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(IcpError::Domain(format!(
            "rising factorial needs x > 0, got {x}"
        )));
    }
    Ok((0..n).map(|j| (x + j as f64).ln()).sum())
}

/// `log(x (x-1) ... (x-n+1))`, the log of the falling factorial.
pub fn log_falling_factorial(x: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    if !x.is_finite() || !(x - n as f64 + 1.0 > 0.0) {
        return Err(IcpError::Domain(format!(
            "falling factorial of {x} with {n} terms has a non-positive factor"
        )));
    }
    Ok((0..n).map(|j| (x - j as f64).ln()).sum())
}

/// `log(n!)`.
pub fn log_factorial(n: usize) -> f64 {
    (2..=n).map(|j| (j as f64).ln()).sum()
}

/// Digamma ψ(x) for x > 0.
///
/// Shifts the argument above 10 with ψ(x) = ψ(x+1) − 1/x and finishes with the
/// asymptotic series in 1/x².
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(IcpError::Domain(format!("digamma needs x > 0, got {x}")));
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // B_{2k} / (2k) for k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(shift + x.ln() - 0.5 / x - series)
}

/// ψ(α + j) − ψ(α) = Σ_{t<j} 1/(α+t).
pub fn harmonic_shift(alpha: f64, j: usize) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(IcpError::Domain(format!(
            "harmonic shift needs α > 0, got {alpha}"
        )));
    }
    if j <= HARMONIC_SUM_LIMIT {
        let mut acc = CompensatedSum::default();
        for t in 0..j {
            acc.add(1.0 / (alpha + t as f64));
        }
        Ok(acc.value())
    } else {
        Ok(digamma(alpha + j as f64)? - digamma(alpha)?)
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// ln Γ(x) for x > 0, by shifting x above 10 and applying Stirling's series.
pub fn ln_gamma(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0 - inv2 * 691.0 / 360_360.0)))));
    shift + (x - 0.5) * x.ln() - x + 0.5 * std::f64::consts::TAU.ln() + series
}

/// Log-density of Gamma(shape, rate) at x.
pub fn log_gamma_density(x: f64, shape: f64, rate: f64, ln_gamma_shape: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma_shape + (shape - 1.0) * x.ln() - rate * x
}

/// Log-density of N(mean, 1/precision) at x.
pub fn log_normal_density(x: f64, mean: f64, precision: f64) -> f64 {
    let d = x - mean;
    0.5 * (precision.ln() - std::f64::consts::TAU.ln()) - 0.5 * precision * d * d
}

/// ln Γ(1/2).
pub const LN_GAMMA_HALF: f64 = 0.572_364_942_924_700_1;

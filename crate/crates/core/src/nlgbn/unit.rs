//! Output density of a single sigmoid unit with Gaussian preactivation noise.

use crate::error::{IcpError, Result};
use crate::special::log_normal_density;

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn logit(u: f64) -> f64 {
    u.ln() - (-u).ln_1p()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-density of u = σ(a) with a ~ N(mean, 1/precision).
pub fn log_density_unit(u: f64, mean: f64, precision: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(IcpError::Domain(format!("unit output {u} outside (0, 1)")));
    }
    if !(precision > 0.0) {
        return Err(IcpError::Domain(format!("precision {precision} must be positive")));
    }
    Ok(log_normal_density(logit(u), mean, precision) - u.ln() - (-u).ln_1p())
}

/// Same density written in terms of the preactivation `a`, stable for
/// saturated units.
pub fn log_density_preactivation(a: f64, mean: f64, precision: f64) -> f64 {
    log_normal_density(a, mean, precision) + softplus(a) + softplus(-a)
}

use serde::{Deserialize, Serialize};

use crate::error::{IcpError, Result};

/// Mass `alpha`, concentration `gamma` and the popularity boost `phi` that
/// observed nodes receive as parents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub alpha: f64,
    pub gamma: f64,
    pub phi: f64,
}

impl Hyperparams {
    pub fn new(alpha: f64, gamma: f64, phi: f64) -> Result<Self> {
        let hp = Hyperparams { alpha, gamma, phi };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(IcpError::InvalidHyperparams(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(IcpError::InvalidHyperparams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(IcpError::InvalidHyperparams(format!(
                "phi must be nonnegative, got {}",
                self.phi
            )));
        }
        Ok(())
    }
}

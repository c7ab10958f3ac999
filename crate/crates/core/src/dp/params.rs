use serde::{Deserialize, Serialize};

use super::DpError;

/// An `(epsilon, delta)` guarantee together with the query sensitivity it
/// was calibrated for (l1 for Laplace, l2 for Gaussian).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self, DpError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(DpError::Parameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(DpError::Parameter(format!("delta must be in [0, 1), got {delta}")));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(DpError::Parameter(format!(
                "sensitivity must be > 0, got {sensitivity}"
            )));
        }
        Ok(Self {
            epsilon,
            delta,
            sensitivity,
        })
    }

    /// Pure Laplace configuration (`delta = 0`).
    pub fn pure(epsilon: f64, sensitivity: f64) -> Result<Self, DpError> {
        Self::new(epsilon, 0.0, sensitivity)
    }

    pub fn laplace_noise(&self) -> Result<NoiseParams, DpError> {
        NoiseParams::laplace(laplace_scale(self.sensitivity, self.epsilon)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    Laplace,
    Gaussian,
}

/// Zero-centred noise distribution. `scale` is `b` for Laplace and `sigma`
/// for Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseParams {
    pub fn laplace(scale: f64) -> Result<Self, DpError> {
        Self::new(NoiseKind::Laplace, scale)
    }

    pub fn gaussian(sigma: f64) -> Result<Self, DpError> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    fn new(kind: NoiseKind, scale: f64) -> Result<Self, DpError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DpError::Parameter(format!("noise scale must be > 0, got {scale}")));
        }
        Ok(Self { kind, scale })
    }

    /// Always zero; kept for symmetry with the density `f(x | mu, b)`.
    pub fn location(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::Laplace => 2.0 * self.scale * self.scale,
            NoiseKind::Gaussian => self.scale * self.scale,
        }
    }
}

/// Laplace scale `b = sensitivity / epsilon`.
pub fn laplace_scale(sensitivity: f64, epsilon: f64) -> Result<f64, DpError> {
    if !(sensitivity > 0.0) || !(epsilon > 0.0) {
        return Err(DpError::Parameter(format!(
            "laplace scale needs positive sensitivity and epsilon, got ({sensitivity}, {epsilon})"
        )));
    }
    Ok(sensitivity / epsilon)
}

/// Gaussian calibration `sigma = sqrt(2 ln(1.25 / delta)) * sensitivity / epsilon`.
pub fn gaussian_sigma(sensitivity2: f64, epsilon: f64, delta: f64) -> Result<f64, DpError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DpError::Parameter(format!(
            "gaussian mechanism requires delta in (0, 1), got {delta}"
        )));
    }
    if !(sensitivity2 > 0.0) || !(epsilon > 0.0) {
        return Err(DpError::Parameter(format!(
            "gaussian sigma needs positive sensitivity and epsilon, got ({sensitivity2}, {epsilon})"
        )));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() * sensitivity2 / epsilon)
}

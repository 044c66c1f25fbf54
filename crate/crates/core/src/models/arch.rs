use super::{
    gaussian_observation_derivatives, gaussian_observation_log_likelihood, normal_log_pdf, standard_normal,
    StateSpaceModel,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// ARCH(1) state observed in Gaussian noise:
/// `X' = sqrt(β₀ + β₁ X²) W`, `Y = X + σ_v V`.
///
/// The stationary law has no closed form. `X_0` is drawn from
/// `N(0, β₀ / (1 - β₁))` when `β₁ < 1` and from `N(0, β₀)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyArch {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma_v: f64,
}

impl NoisyArch {
    pub fn new(beta0: f64, beta1: f64, sigma_v: f64) -> Result<Self> {
        if !(beta0 > 0.0 && beta0.is_finite()) || !(beta1 >= 0.0 && beta1.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "ARCH coefficients need beta0 > 0 and beta1 >= 0, got ({beta0}, {beta1})"
            )));
        }
        if !(sigma_v > 0.0 && sigma_v.is_finite()) {
            return Err(Error::InvalidModel(format!("sigma_v must be positive, got {sigma_v}")));
        }
        Ok(Self { beta0, beta1, sigma_v })
    }

    fn initial_variance(&self) -> f64 {
        if self.beta1 < 1.0 {
            self.beta0 / (1.0 - self.beta1)
        } else {
            self.beta0
        }
    }

    fn volatility(&self, x: f64) -> f64 {
        (self.beta0 + self.beta1 * x * x).sqrt()
    }
}

impl StateSpaceModel for NoisyArch {
    fn name(&self) -> &'static str {
        "arch"
    }

    fn sample_initial(&self, rng: &mut RngStream) -> f64 {
        self.initial_variance().sqrt() * standard_normal(rng)
    }

    fn initial_log_density(&self, x: f64) -> f64 {
        normal_log_pdf(x, 0.0, self.initial_variance().sqrt())
    }

    fn initial_moments(&self) -> (f64, f64) {
        (0.0, self.initial_variance().sqrt())
    }

    fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64 {
        self.volatility(x) * standard_normal(rng)
    }

    fn transition_log_density(&self, x: f64, x_next: f64) -> f64 {
        normal_log_pdf(x_next, 0.0, self.volatility(x))
    }

    fn transition_mean(&self, _x: f64) -> f64 {
        0.0
    }

    fn transition_std(&self, x: f64) -> f64 {
        self.volatility(x)
    }

    fn observation_log_likelihood(&self, y: f64, x: f64) -> f64 {
        gaussian_observation_log_likelihood(y, x, self.sigma_v)
    }

    fn sample_observation(&self, x: f64, rng: &mut RngStream) -> f64 {
        x + self.sigma_v * standard_normal(rng)
    }

    fn observation_noise_std(&self) -> Option<f64> {
        Some(self.sigma_v)
    }

    fn observation_log_likelihood_derivatives(&self, y: f64, x: f64) -> Option<(f64, f64)> {
        Some(gaussian_observation_derivatives(y, x, self.sigma_v))
    }

    fn likelihood_location(&self, y: f64) -> Option<(f64, f64)> {
        (!y.is_nan()).then_some((y, self.sigma_v))
    }

    fn marginal_std(&self) -> Option<f64> {
        (self.beta1 < 1.0).then(|| self.initial_variance().sqrt())
    }
}

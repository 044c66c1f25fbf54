use super::{
    gaussian_observation_derivatives, gaussian_observation_log_likelihood, normal_log_pdf, standard_normal, InitialLaw,
    StateSpaceModel,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `X' = φX + σ_w W`, `Y = X + σ_v V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianAR1 {
    pub phi: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub initial: InitialLaw,
}

impl LinearGaussianAR1 {
    /// Model started at its stationary law `N(0, σ_w² / (1 - φ²))`.
    pub fn new(phi: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        Self::with_initial(phi, sigma_w, sigma_v, InitialLaw::Stationary)
    }

    pub fn with_initial(phi: f64, sigma_w: f64, sigma_v: f64, initial: InitialLaw) -> Result<Self> {
        if !(sigma_w > 0.0 && sigma_w.is_finite()) || !(sigma_v > 0.0 && sigma_v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "linear Gaussian noise scales must be positive, got sigma_w={sigma_w}, sigma_v={sigma_v}"
            )));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidModel(format!("phi must be finite, got {phi}")));
        }
        match initial {
            InitialLaw::Stationary if phi.abs() >= 1.0 => {
                return Err(Error::InvalidModel(format!(
                    "stationary initial law needs |phi| < 1, got {phi}"
                )))
            }
            InitialLaw::Normal { std, .. } if !(std > 0.0) => {
                return Err(Error::InvalidModel(format!("initial std must be positive, got {std}")))
            }
            _ => {}
        }
        Ok(Self {
            phi,
            sigma_w,
            sigma_v,
            initial,
        })
    }

    pub fn stationary_variance(&self) -> Option<f64> {
        (self.phi.abs() < 1.0).then(|| self.sigma_w * self.sigma_w / (1.0 - self.phi * self.phi))
    }

    /// Mean and variance of `X_0`.
    pub fn initial_mean_var(&self) -> (f64, f64) {
        match self.initial {
            InitialLaw::Stationary => (0.0, self.stationary_variance().expect("checked at construction")),
            InitialLaw::Normal { mean, std } => (mean, std * std),
        }
    }
}

impl StateSpaceModel for LinearGaussianAR1 {
    fn name(&self) -> &'static str {
        "linear-gaussian"
    }

    fn sample_initial(&self, rng: &mut RngStream) -> f64 {
        let (m, v) = self.initial_mean_var();
        m + v.sqrt() * standard_normal(rng)
    }

    fn initial_log_density(&self, x: f64) -> f64 {
        let (m, v) = self.initial_mean_var();
        normal_log_pdf(x, m, v.sqrt())
    }

    fn initial_moments(&self) -> (f64, f64) {
        let (m, v) = self.initial_mean_var();
        (m, v.sqrt())
    }

    fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64 {
        self.phi * x + self.sigma_w * standard_normal(rng)
    }

    fn transition_log_density(&self, x: f64, x_next: f64) -> f64 {
        normal_log_pdf(x_next, self.phi * x, self.sigma_w)
    }

    fn transition_mean(&self, x: f64) -> f64 {
        self.phi * x
    }

    fn transition_std(&self, _x: f64) -> f64 {
        self.sigma_w
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
        Some(self.stationary_variance().unwrap_or(self.initial_mean_var().1).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_variance_of_paper_regime() {
        let m = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let v = m.stationary_variance().unwrap();
        assert!((v - 0.01 / 0.19).abs() < 1e-15);
        assert!((v - 0.052_63).abs() < 1e-5);
    }

    #[test]
    fn degenerate_parameters_rejected() {
        assert!(LinearGaussianAR1::new(0.9, 0.0, 0.0).is_err());
        assert!(LinearGaussianAR1::new(0.9, 0.1, 0.0).is_err());
        assert!(LinearGaussianAR1::new(1.0, 0.1, 0.1).is_err());
        assert!(LinearGaussianAR1::with_initial(1.0, 0.1, 0.1, InitialLaw::Normal { mean: 0.0, std: 1.0 }).is_ok());
    }
}

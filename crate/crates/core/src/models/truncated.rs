use statrs::distribution::{ContinuousCDF, Normal};

use super::{
    gaussian_observation_derivatives, gaussian_observation_log_likelihood, normal_log_pdf, standard_normal,
    StateSpaceModel,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Linear Gaussian AR(1) whose state is confined to `[lower, upper]`.
///
/// Transitions are `N(φx, σ_w²)` truncated to the interval, and the initial
/// law is the untruncated stationary normal truncated the same way. On a
/// compact interval the transition density is bounded above and below, so
/// the conditional chain forgets its initial condition geometrically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedLinearGaussian {
    pub phi: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub lower: f64,
    pub upper: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

impl TruncatedLinearGaussian {
    pub fn new(phi: f64, sigma_w: f64, sigma_v: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) || !(sigma_w > 0.0) || !(sigma_v > 0.0) {
            return Err(Error::InvalidModel(format!(
                "truncated AR(1) needs |phi| < 1 and positive noise, got ({phi}, {sigma_w}, {sigma_v})"
            )));
        }
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidModel(format!("invalid support [{lower}, {upper}]")));
        }
        Ok(Self {
            phi,
            sigma_w,
            sigma_v,
            lower,
            upper,
        })
    }

    fn stationary_std(&self) -> f64 {
        self.sigma_w / (1.0 - self.phi * self.phi).sqrt()
    }

    fn inside(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    fn log_mass(&self, mean: f64, std: f64) -> f64 {
        let n = std_normal();
        let mass = n.cdf((self.upper - mean) / std) - n.cdf((self.lower - mean) / std);
        mass.ln()
    }

    fn sample_truncated(&self, mean: f64, std: f64, rng: &mut RngStream) -> f64 {
        for _ in 0..64 {
            let x = mean + std * standard_normal(rng);
            if self.inside(x) {
                return x;
            }
        }
        // low acceptance: invert the CDF instead
        use rand::Rng;
        let n = std_normal();
        let a = n.cdf((self.lower - mean) / std);
        let b = n.cdf((self.upper - mean) / std);
        let u = a + (b - a) * rng.random::<f64>();
        (mean + std * n.inverse_cdf(u)).clamp(self.lower, self.upper)
    }

    fn truncated_log_pdf(&self, x: f64, mean: f64, std: f64) -> f64 {
        if !self.inside(x) {
            return f64::NEG_INFINITY;
        }
        normal_log_pdf(x, mean, std) - self.log_mass(mean, std)
    }
}

impl StateSpaceModel for TruncatedLinearGaussian {
    fn name(&self) -> &'static str {
        "truncated-linear-gaussian"
    }

    fn sample_initial(&self, rng: &mut RngStream) -> f64 {
        self.sample_truncated(0.0, self.stationary_std(), rng)
    }

    fn initial_log_density(&self, x: f64) -> f64 {
        self.truncated_log_pdf(x, 0.0, self.stationary_std())
    }

    fn initial_moments(&self) -> (f64, f64) {
        (0.0, self.stationary_std())
    }

    fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64 {
        self.sample_truncated(self.phi * x, self.sigma_w, rng)
    }

    fn transition_log_density(&self, x: f64, x_next: f64) -> f64 {
        self.truncated_log_pdf(x_next, self.phi * x, self.sigma_w)
    }

    fn transition_mean(&self, x: f64) -> f64 {
        let m = self.phi * x;
        let s = self.sigma_w;
        let n = std_normal();
        let (a, b) = ((self.lower - m) / s, (self.upper - m) / s);
        let z = n.cdf(b) - n.cdf(a);
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        m + s * (pdf(a) - pdf(b)) / z
    }

    fn transition_std(&self, _x: f64) -> f64 {
        self.sigma_w
    }

    fn gaussian_transition(&self) -> bool {
        false
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
        Some(self.stationary_std())
    }

    fn state_bounds(&self) -> Option<(f64, f64)> {
        Some((self.lower, self.upper))
    }
}

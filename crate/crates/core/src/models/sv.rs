use super::{normal_log_pdf, standard_normal, InitialLaw, StateSpaceModel, LN_SQRT_2PI};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Canonical stochastic volatility model:
/// `X' = φX + σW` (log-volatility), `Y = β exp(X/2) V` (log-return).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticVolatility {
    pub phi: f64,
    pub sigma: f64,
    pub beta: f64,
    pub initial: InitialLaw,
}

impl StochasticVolatility {
    /// Model started at its stationary law.
    pub fn new(phi: f64, sigma: f64, beta: f64) -> Result<Self> {
        Self::with_initial(phi, sigma, beta, InitialLaw::Stationary)
    }

    pub fn with_initial(phi: f64, sigma: f64, beta: f64, initial: InitialLaw) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::InvalidModel(format!("SV needs |phi| < 1, got {phi}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidModel(format!("SV sigma must be positive, got {sigma}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidModel(format!("SV beta must be positive, got {beta}")));
        }
        Ok(Self {
            phi,
            sigma,
            beta,
            initial,
        })
    }

    pub fn stationary_std(&self) -> f64 {
        self.sigma / (1.0 - self.phi * self.phi).sqrt()
    }

    fn initial_mean_std(&self) -> (f64, f64) {
        match self.initial {
            InitialLaw::Stationary => (0.0, self.stationary_std()),
            InitialLaw::Normal { mean, std } => (mean, std),
        }
    }
}

impl StateSpaceModel for StochasticVolatility {
    fn name(&self) -> &'static str {
        "sv"
    }

    fn sample_initial(&self, rng: &mut RngStream) -> f64 {
        let (m, s) = self.initial_mean_std();
        m + s * standard_normal(rng)
    }

    fn initial_log_density(&self, x: f64) -> f64 {
        let (m, s) = self.initial_mean_std();
        normal_log_pdf(x, m, s)
    }

    fn initial_moments(&self) -> (f64, f64) {
        self.initial_mean_std()
    }

    fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64 {
        self.phi * x + self.sigma * standard_normal(rng)
    }

    fn transition_log_density(&self, x: f64, x_next: f64) -> f64 {
        normal_log_pdf(x_next, self.phi * x, self.sigma)
    }

    fn transition_mean(&self, x: f64) -> f64 {
        self.phi * x
    }

    fn transition_std(&self, _x: f64) -> f64 {
        self.sigma
    }

    fn observation_log_likelihood(&self, y: f64, x: f64) -> f64 {
        if y.is_nan() {
            return 0.0;
        }
        // N(y; 0, β² e^x)
        -LN_SQRT_2PI - self.beta.ln() - 0.5 * x - 0.5 * y * y * (-x).exp() / (self.beta * self.beta)
    }

    fn sample_observation(&self, x: f64, rng: &mut RngStream) -> f64 {
        self.beta * (0.5 * x).exp() * standard_normal(rng)
    }

    fn observation_log_likelihood_derivatives(&self, y: f64, x: f64) -> Option<(f64, f64)> {
        if y.is_nan() {
            return Some((0.0, 0.0));
        }
        let c = 0.5 * y * y * (-x).exp() / (self.beta * self.beta);
        Some((-0.5 + c, -c))
    }

    fn likelihood_location(&self, y: f64) -> Option<(f64, f64)> {
        // mode of x ↦ g(y | x) is ln(y²/β²), where the curvature is -1/2
        (!y.is_nan() && y != 0.0).then(|| ((y * y / (self.beta * self.beta)).ln(), std::f64::consts::SQRT_2))
    }

    fn marginal_std(&self) -> Option<f64> {
        Some(self.stationary_std().max(self.initial_mean_std().1))
    }
}

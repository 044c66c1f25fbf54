//! Scalar state-space models and their exact or numerical filters.
//!
//! A model pairs a Markov transition `Q(x, dx')` with density `q(x, x')`,
//! an observation likelihood `g(y | x)` and an initial law `ν`. A `NaN`
//! observation is treated as missing: its likelihood is flat.

mod arch;
mod grid;
mod kalman;
mod linear_gaussian;
mod records;
mod simulate;
mod sv;
mod truncated;

use std::fmt;

pub use arch::NoisyArch;
pub use grid::{grid_filter, grid_filter_converged, GridBounds, GridDensity, GridFilter, GridSpec};
pub use kalman::{kalman_filter, kalman_recursion, GaussianMoments};
pub use linear_gaussian::LinearGaussianAR1;
pub use records::{parse_record, read_record, write_record};
pub use simulate::{simulate, simulate_from, Trajectory};
pub use sv::StochasticVolatility;
pub use truncated::TruncatedLinearGaussian;

use crate::rng::RngStream;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - LN_SQRT_2PI
}

pub(crate) fn standard_normal(rng: &mut RngStream) -> f64 {
    use rand::Rng;
    rng.sample(rand_distr::StandardNormal)
}

/// Law of the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    /// The stationary law of the state chain.
    Stationary,
    Normal {
        mean: f64,
        std: f64,
    },
}

/// A scalar state-space model.
pub trait StateSpaceModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn sample_initial(&self, rng: &mut RngStream) -> f64;
    fn initial_log_density(&self, x: f64) -> f64;
    /// Mean and standard deviation of the initial law.
    fn initial_moments(&self) -> (f64, f64);

    fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64;
    fn transition_log_density(&self, x: f64, x_next: f64) -> f64;
    /// `∫ x' Q(x, dx')`.
    fn transition_mean(&self, x: f64) -> f64;
    fn transition_std(&self, x: f64) -> f64;
    /// Whether `Q(x, ·)` is exactly `N(transition_mean, transition_std²)`.
    fn gaussian_transition(&self) -> bool {
        true
    }

    fn observation_log_likelihood(&self, y: f64, x: f64) -> f64;
    fn sample_observation(&self, x: f64, rng: &mut RngStream) -> f64;
    /// `σ_v` when observations are `y = x + σ_v V` with standard normal `V`.
    fn observation_noise_std(&self) -> Option<f64> {
        None
    }
    /// First and second derivatives of `x ↦ ln g(y | x)`.
    fn observation_log_likelihood_derivatives(&self, y: f64, x: f64) -> Option<(f64, f64)>;
    /// Rough location and scale of `x ↦ g(y | x)`, when it is integrable.
    fn likelihood_location(&self, y: f64) -> Option<(f64, f64)>;

    /// Standard deviation of the stationary (or initial) law, used to size grids.
    fn marginal_std(&self) -> Option<f64>;
    /// Compact support of the state, if any.
    fn state_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// First and second derivatives of `x' ↦ ln q(x, x')`.
    fn transition_log_density_derivatives(&self, x: f64, x_next: f64) -> Option<(f64, f64)> {
        if !self.gaussian_transition() {
            return None;
        }
        let m = self.transition_mean(x);
        let s2 = self.transition_std(x).powi(2);
        Some((-(x_next - m) / s2, -1.0 / s2))
    }
}

pub(crate) fn gaussian_observation_log_likelihood(y: f64, x: f64, sigma_v: f64) -> f64 {
    if y.is_nan() {
        0.0
    } else {
        normal_log_pdf(y, x, sigma_v)
    }
}

pub(crate) fn gaussian_observation_derivatives(y: f64, x: f64, sigma_v: f64) -> (f64, f64) {
    if y.is_nan() {
        (0.0, 0.0)
    } else {
        let s2 = sigma_v * sigma_v;
        ((y - x) / s2, -1.0 / s2)
    }
}

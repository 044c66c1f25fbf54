//! Proposal kernels `R_k(x, ·)` and their density ratios `dQ/dR`.

use std::fmt;
use std::str::FromStr;

use super::laplace::laplace_kernel;
use crate::error::{Error, Result};
use crate::models::{normal_log_pdf, standard_normal, StateSpaceModel};
use crate::rng::RngStream;

/// Which proposal kernel propagates particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ProposalKind {
    /// `R = Q`: blind propagation through the state dynamics.
    #[default]
    Prior,
    /// The exact optimal kernel `N(μ_opt, σ_opt²)` of Gaussian-observation
    /// models with Gaussian transitions.
    Optimal,
    /// Gaussian fitted at the mode of `g(y | x') q(x, x')`.
    Laplace,
}

impl fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProposalKind::Prior => "prior",
            ProposalKind::Optimal => "optimal",
            ProposalKind::Laplace => "laplace",
        })
    }
}

impl FromStr for ProposalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(ProposalKind::Prior),
            "optimal" => Ok(ProposalKind::Optimal),
            "laplace" => Ok(ProposalKind::Laplace),
            other => Err(Error::InvalidConfig(format!("unknown proposal `{other}`"))),
        }
    }
}

/// `R(x, ·)` for one source particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelParams {
    Prior,
    Gaussian { mean: f64, std: f64 },
}

/// Mean and standard deviation of the optimal kernel
/// `p(x' | x, y) ∝ g(y | x') q(x, x')` for `y = x' + σ_v V`, `x' ~ N(m, σ_w²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOptimalKernel {
    pub mean: f64,
    pub std: f64,
}

impl GaussianOptimalKernel {
    pub fn new(m: f64, sigma_w: f64, sigma_v: f64, y: f64) -> Self {
        let (vw, vv) = (sigma_w * sigma_w, sigma_v * sigma_v);
        let var = vv * vw / (vv + vw);
        Self {
            mean: (y / vv + m / vw) * var,
            std: var.sqrt(),
        }
    }

    /// The optimal kernel for a model with Gaussian transitions and
    /// additive Gaussian observation noise.
    pub fn for_model(model: &dyn StateSpaceModel, x: f64, y: f64) -> Result<Self> {
        let sigma_v = gaussian_observation_std(model)?;
        Ok(Self::new(model.transition_mean(x), model.transition_std(x), sigma_v, y))
    }
}

pub(crate) fn gaussian_observation_std(model: &dyn StateSpaceModel) -> Result<f64> {
    match model.observation_noise_std() {
        Some(s) if model.gaussian_transition() => Ok(s),
        _ => Err(Error::Unsupported(format!(
            "the {} model has no Gaussian optimal kernel",
            model.name()
        ))),
    }
}

impl KernelParams {
    /// Builds `R(x, ·)` for source state `x` and the next observation `y`.
    /// A missing observation makes every kernel collapse to the prior.
    pub fn prepare(kind: ProposalKind, model: &dyn StateSpaceModel, x: f64, y: f64) -> Result<Self> {
        if y.is_nan() {
            return Ok(KernelParams::Prior);
        }
        match kind {
            ProposalKind::Prior => Ok(KernelParams::Prior),
            ProposalKind::Optimal => {
                let k = GaussianOptimalKernel::for_model(model, x, y)?;
                Ok(KernelParams::Gaussian {
                    mean: k.mean,
                    std: k.std,
                })
            }
            ProposalKind::Laplace => {
                let l = laplace_kernel(model, x, y)?;
                Ok(KernelParams::Gaussian {
                    mean: l.mode,
                    std: l.std,
                })
            }
        }
    }

    pub fn sample(&self, model: &dyn StateSpaceModel, x: f64, rng: &mut RngStream) -> f64 {
        match *self {
            KernelParams::Prior => model.sample_transition(x, rng),
            KernelParams::Gaussian { mean, std } => mean + std * standard_normal(rng),
        }
    }

    /// `ln r(x, x')`; for the prior this is the transition log-density.
    pub fn log_density(&self, model: &dyn StateSpaceModel, x: f64, x_next: f64) -> f64 {
        match *self {
            KernelParams::Prior => model.transition_log_density(x, x_next),
            KernelParams::Gaussian { mean, std } => normal_log_pdf(x_next, mean, std),
        }
    }

    /// `ln dQ(x, ·)/dR(x, ·)` at `x'`.
    pub fn log_ratio(&self, model: &dyn StateSpaceModel, x: f64, x_next: f64) -> f64 {
        match *self {
            KernelParams::Prior => 0.0,
            KernelParams::Gaussian { mean, std } => {
                model.transition_log_density(x, x_next) - normal_log_pdf(x_next, mean, std)
            }
        }
    }

    /// First and second derivatives of `x' ↦ ln r(x, x')`.
    pub(crate) fn log_density_derivatives(
        &self,
        model: &dyn StateSpaceModel,
        x: f64,
        x_next: f64,
    ) -> Option<(f64, f64)> {
        match *self {
            KernelParams::Prior => model.transition_log_density_derivatives(x, x_next),
            KernelParams::Gaussian { mean, std } => {
                let v = std * std;
                Some((-(x_next - mean) / v, -1.0 / v))
            }
        }
    }

    /// Mean and std of `R(x, ·)` when it is Gaussian.
    pub fn gaussian(&self, model: &dyn StateSpaceModel, x: f64) -> Option<(f64, f64)> {
        match *self {
            KernelParams::Prior => model
                .gaussian_transition()
                .then(|| (model.transition_mean(x), model.transition_std(x))),
            KernelParams::Gaussian { mean, std } => Some((mean, std)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearGaussianAR1, NoisyArch, StochasticVolatility};

    #[test]
    fn optimal_kernel_variance_bounds() {
        let k = GaussianOptimalKernel::new(0.3, 0.1, 0.1, 1.0);
        assert!((k.std * k.std - 0.005).abs() < 1e-15);
        assert!((k.mean - 0.65).abs() < 1e-12);
        for (sw, sv) in [(0.1, 1.0), (1.0, 0.1), (3.0, 3.0)] {
            let k = GaussianOptimalKernel::new(0.0, sw, sv, 0.0);
            let v = k.std * k.std;
            assert!(v > 0.0 && v < (sw * sw).min(sv * sv));
        }
    }

    #[test]
    fn laplace_equals_optimal_on_gaussian_models() {
        let lg = LinearGaussianAR1::new(0.9, 0.1, 1.0).unwrap();
        let arch = NoisyArch::new(9.0, 5.0, 1.0).unwrap();
        for model in [&lg as &dyn StateSpaceModel, &arch] {
            for (x, y) in [(0.0, 0.5), (2.0, -20.0), (-1.0, 3.0)] {
                let a = KernelParams::prepare(ProposalKind::Optimal, model, x, y).unwrap();
                let b = KernelParams::prepare(ProposalKind::Laplace, model, x, y).unwrap();
                let (KernelParams::Gaussian { mean: m1, std: s1 }, KernelParams::Gaussian { mean: m2, std: s2 }) =
                    (a, b)
                else {
                    panic!("expected Gaussian kernels")
                };
                assert!((m1 - m2).abs() < 1e-9 * (1.0 + m1.abs()));
                assert!((s1 - s2).abs() < 1e-12 * s1.max(1.0));
            }
        }
    }

    #[test]
    fn optimal_kernel_unavailable_for_sv() {
        let sv = StochasticVolatility::new(0.9, 0.2, 0.6).unwrap();
        assert!(matches!(
            KernelParams::prepare(ProposalKind::Optimal, &sv, 0.0, 0.3),
            Err(Error::Unsupported(_))
        ));
        assert!(KernelParams::prepare(ProposalKind::Laplace, &sv, 0.0, 0.3).is_ok());
    }

    #[test]
    fn prior_ratio_is_one() {
        let lg = LinearGaussianAR1::new(0.9, 0.1, 1.0).unwrap();
        assert_eq!(KernelParams::Prior.log_ratio(&lg, 0.2, 5.0), 0.0);
        assert_eq!(
            KernelParams::prepare(ProposalKind::Optimal, &lg, 0.2, f64::NAN).unwrap(),
            KernelParams::Prior
        );
    }

    #[test]
    fn names_round_trip() {
        for k in [ProposalKind::Prior, ProposalKind::Optimal, ProposalKind::Laplace] {
            assert_eq!(k.to_string().parse::<ProposalKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ProposalKind>().is_err());
    }
}

//! Stratified importance sampling of a Gaussian mixture `π = Σ w_i μ_i`
//! with per-component proposals `ν_i` and a stratum allocation `τ`.

use crate::adaptation::Target;
use crate::error::{Error, Result};
use crate::models::{normal_log_pdf, standard_normal};
use crate::quadrature::GaussHermite;
use crate::resample::ResamplingScheme;
use crate::rng::RngStream;
use crate::sample::{normalize, WeightedSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid Gaussian N({mean}, {std}²)")));
        }
        Ok(Self { mean, std })
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        normal_log_pdf(x, self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// Mixture weights `w_i`, summing to one.
    pub weights: Vec<f64>,
    /// Components `μ_i`.
    pub targets: Vec<Gaussian>,
    /// Proposals `ν_i`.
    pub proposals: Vec<Gaussian>,
    /// Allocation `τ_i`, summing to one.
    pub allocation: Vec<f64>,
}

fn check_simplex(name: &str, v: &[f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "{name} must be a probability vector, got {v:?}"
        )));
    }
    Ok(())
}

impl MixtureSpec {
    pub fn new(
        weights: Vec<f64>,
        targets: Vec<Gaussian>,
        proposals: Vec<Gaussian>,
        allocation: Vec<f64>,
    ) -> Result<Self> {
        let d = weights.len();
        if d == 0 || targets.len() != d || proposals.len() != d || allocation.len() != d {
            return Err(Error::InvalidConfig("mixture component lists differ in length".into()));
        }
        check_simplex("mixture weights", &weights)?;
        check_simplex("allocation", &allocation)?;
        if weights.iter().zip(&allocation).any(|(w, t)| *w > 0.0 && *t <= 0.0) {
            return Err(Error::InvalidConfig(
                "allocation must be positive on every weighted component".into(),
            ));
        }
        Ok(Self {
            weights,
            targets,
            proposals,
            allocation,
        })
    }

    pub fn with_allocation(&self, allocation: Vec<f64>) -> Result<Self> {
        Self::new(
            self.weights.clone(),
            self.targets.clone(),
            self.proposals.clone(),
            allocation,
        )
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `π f` by Gauss–Hermite quadrature on each component.
    pub fn expectation(&self, f: &Target) -> f64 {
        let gh = GaussHermite::cached(128);
        self.weights
            .iter()
            .zip(&self.targets)
            .map(|(w, c)| w * gh.normal_expectation(c.mean, c.std, |x| f.eval(x)))
            .sum()
    }

    /// `α_i(f) = ∫ (dμ_i/dν_i)² (f − πf)² dν_i`.
    ///
    /// `μ_i² / ν_i` is an unnormalized Gaussian, which exists only when
    /// `2 σ_ν² > σ_μ²`; otherwise `α_i` is infinite and an error is returned.
    pub fn alphas(&self, f: &Target) -> Result<Vec<f64>> {
        let pi_f = self.expectation(f);
        // Squared deviations at the rounding level of πf count as zero.
        let noise = (64.0 * f64::EPSILON * pi_f.abs()).powi(2);
        let gh = GaussHermite::cached(128);
        self.targets
            .iter()
            .zip(&self.proposals)
            .map(|(mu, nu)| {
                let precision = 2.0 / mu.std.powi(2) - 1.0 / nu.std.powi(2);
                if !(precision > 0.0) {
                    return Err(Error::Unsupported(format!(
                        "proposal N({}, {}²) too narrow for component N({}, {}²)",
                        nu.mean, nu.std, mu.mean, mu.std
                    )));
                }
                let var = 1.0 / precision;
                let mean = var * (2.0 * mu.mean / mu.std.powi(2) - nu.mean / nu.std.powi(2));
                let log_mass = 2.0 * mu.log_pdf(mean) - nu.log_pdf(mean) - normal_log_pdf(mean, mean, var.sqrt());
                let second = gh.normal_expectation(mean, var.sqrt(), |x| (f.eval(x) - pi_f).powi(2));
                Ok(if second <= noise { 0.0 } else { log_mass.exp() * second })
            })
            .collect()
    }
}

/// `Σ w_i² α_i / τ_i`, the asymptotic variance of the stratified estimator.
pub fn allocation_objective(weights: &[f64], alphas: &[f64], allocation: &[f64]) -> f64 {
    weights
        .iter()
        .zip(alphas)
        .zip(allocation)
        .filter(|((w, _), _)| **w > 0.0)
        .map(|((w, a), t)| w * w * a / t)
        .sum()
}

/// `τ*_i ∝ w_i √α_i(f)`, the allocation minimizing [`allocation_objective`].
pub fn optimal_allocation(spec: &MixtureSpec, f: &Target) -> Result<Vec<f64>> {
    let alphas = spec.alphas(f)?;
    allocation_from_alphas(&spec.weights, &alphas)
}

pub fn allocation_from_alphas(weights: &[f64], alphas: &[f64]) -> Result<Vec<f64>> {
    let raw: Vec<f64> = weights.iter().zip(alphas).map(|(w, a)| w * a.sqrt()).collect();
    let sum: f64 = raw.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::DegenerateTarget);
    }
    Ok(raw.iter().map(|r| r / sum).collect())
}

/// Draws `J ∝ τ`, `ξ ~ ν_J` and attaches `ω = (w_J / τ_J) dμ_J/dν_J(ξ)`.
pub fn stratified_sample(spec: &MixtureSpec, count: usize, rng: &mut RngStream) -> Result<WeightedSample> {
    let strata = ResamplingScheme::Multinomial.select(&spec.allocation, count, rng)?;
    let mut states = Vec::with_capacity(count);
    let mut log_weights = Vec::with_capacity(count);
    for j in strata {
        let nu = spec.proposals[j];
        let x = nu.mean + nu.std * standard_normal(rng);
        states.push(x);
        log_weights.push((spec.weights[j] / spec.allocation[j]).ln() + spec.targets[j].log_pdf(x) - nu.log_pdf(x));
    }
    WeightedSample::from_log(states, log_weights)
}

/// Plug-in estimate `n Σ ω̄_i² (f(ξ_i) − π̂f)²` of the asymptotic variance
/// of the self-normalized estimator, with normalized weights `ω̄`.
pub fn plug_in_variance(sample: &WeightedSample, f: &Target) -> Result<f64> {
    let w = normalize(sample)?;
    let est: f64 = w.iter().zip(sample.states()).map(|(w, &x)| w * f.eval(x)).sum();
    let n = sample.len() as f64;
    Ok(n * w
        .iter()
        .zip(sample.states())
        .map(|(w, &x)| w * w * (f.eval(x) - est).powi(2))
        .sum::<f64>())
}

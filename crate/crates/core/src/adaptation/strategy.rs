//! First-stage weight functions `ψ_k` and second-stage weights `Φ_{k+1}`.
//!
//! All weights are handled on the log scale.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::laplace::{find_mode, laplace_kernel};
use super::proposal::{gaussian_observation_std, GaussianOptimalKernel, KernelParams, ProposalKind};
use crate::error::{Error, Result};
use crate::models::{normal_log_pdf, StateSpaceModel, LN_SQRT_2PI};
use crate::quadrature::GaussHermite;

/// `ln 1e-300`: optimal weights are floored here so `Φ` never divides by zero.
pub const LOG_WEIGHT_FLOOR: f64 = -690.775_527_898_213_7;

/// The estimation target `f`.
#[derive(Clone, Default)]
pub enum Target {
    /// `f(x) = x`, the filter mean.
    #[default]
    Projection,
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Target {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Target::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Target::Projection => x,
            Target::Function(f) => f(x),
        }
    }

    pub fn is_projection(&self) -> bool {
        matches!(self, Target::Projection)
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Projection => f.write_str("Projection"),
            Target::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// First-stage weight strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightStrategy {
    /// `ψ ≡ 1`.
    #[default]
    Uniform,
    /// `ψ(x) = g(y | E[X' | X = x])`.
    PsGeneric,
    /// `ψ(x) = ∫ g(y | x') q(x, x') dx'` (exact or Laplace-approximated).
    FullyAdapted,
    /// `τ*` with the target mean taken from an exact oracle.
    OptimalExact,
    /// `τ*` with the target mean estimated by a pilot filter.
    OptimalPilot,
}

impl WeightStrategy {
    pub const ALL: [WeightStrategy; 5] = [
        WeightStrategy::Uniform,
        WeightStrategy::PsGeneric,
        WeightStrategy::FullyAdapted,
        WeightStrategy::OptimalExact,
        WeightStrategy::OptimalPilot,
    ];

    /// Whether the strategy needs `π_{k+1|k+1} f`.
    pub fn needs_target_mean(self) -> bool {
        matches!(self, WeightStrategy::OptimalExact | WeightStrategy::OptimalPilot)
    }
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightStrategy::Uniform => "uniform",
            WeightStrategy::PsGeneric => "ps-generic",
            WeightStrategy::FullyAdapted => "fully-adapted",
            WeightStrategy::OptimalExact => "optimal-exact",
            WeightStrategy::OptimalPilot => "optimal-pilot",
        })
    }
}

impl FromStr for WeightStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightStrategy::ALL
            .into_iter()
            .find(|w| w.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown weight strategy `{s}`")))
    }
}

/// Everything a first-stage weight may depend on at one step.
#[derive(Debug, Clone, Copy)]
pub struct FirstStageContext<'a> {
    pub model: &'a dyn StateSpaceModel,
    pub proposal: ProposalKind,
    /// The next observation `y_{k+1}`.
    pub y: f64,
    pub target: &'a Target,
    /// `π_{k+1|k+1} f`, required by the optimal strategies.
    pub target_mean: Option<f64>,
    pub quadrature: &'a GaussHermite,
}

/// `ln Φ = ln g(y | x') + ln dQ/dR(x') − ln ψ(x)`.
pub fn second_stage_weight(
    model: &dyn StateSpaceModel,
    params: &KernelParams,
    log_psi: f64,
    x: f64,
    x_next: f64,
    y: f64,
) -> Result<f64> {
    if !log_psi.is_finite() {
        return Err(Error::NonpositiveFirstStageWeight(log_psi.exp()));
    }
    Ok(model.observation_log_likelihood(y, x_next) + params.log_ratio(model, x, x_next) - log_psi)
}

/// `ln g(y | ∫ x' Q(x, dx'))`.
pub fn ps_generic_weight(model: &dyn StateSpaceModel, x: f64, y: f64) -> f64 {
    model.observation_log_likelihood(y, model.transition_mean(x))
}

/// `ln h(x)` for the Gaussian optimal kernel, up to an additive constant:
/// `ln(σ_opt/σ_w) − (y − m)² / (2(σ_v² + σ_w²))`.
///
/// This equals `ln(σ_opt/σ_w) + μ_opt²/(2σ_opt²) − m²/(2σ_w²) − y²/(2σ_v²)`
/// but avoids cancelling large terms when `σ_opt` is small.
pub fn fa_weight(model: &dyn StateSpaceModel, kernel: &GaussianOptimalKernel, x: f64, y: f64) -> Result<f64> {
    let sigma_v = gaussian_observation_std(model)?;
    if y.is_nan() {
        return Ok(0.0);
    }
    let m = model.transition_mean(x);
    let sw = model.transition_std(x);
    Ok((kernel.std / sw).ln() - (y - m).powi(2) / (2.0 * (sigma_v * sigma_v + sw * sw)))
}

/// Laplace estimate `ln(√(2π) σ̂ g(y | m̂) q(x, m̂))` of `ln ∫ g q`.
fn laplace_fa_weight(model: &dyn StateSpaceModel, x: f64, y: f64) -> Result<f64> {
    if y.is_nan() {
        return Ok(0.0);
    }
    Ok(laplace_kernel(model, x, y)?.log_normalizer())
}

/// `ln ψ(x)` of the fully adapted filter for the given proposal family.
pub fn fully_adapted_weight(model: &dyn StateSpaceModel, proposal: ProposalKind, x: f64, y: f64) -> Result<f64> {
    match proposal {
        ProposalKind::Laplace => laplace_fa_weight(model, x, y),
        ProposalKind::Optimal | ProposalKind::Prior if gaussian_observation_std(model).is_ok() => {
            let kernel = GaussianOptimalKernel::for_model(model, x, if y.is_nan() { 0.0 } else { y })?;
            fa_weight(model, &kernel, x, y)
        }
        _ => laplace_fa_weight(model, x, y),
    }
}

/// `ln τ*(x)` by Gauss–Hermite quadrature, where
/// `τ*(x)² = ∫ g(y|x')² (dQ/dR)²(x') (f(x') − m*)² R(x, dx')`.
///
/// The quadrature Gaussian is centred at the mode of the integrand's
/// Gaussian part, so peaked likelihoods are resolved whatever `R` is.
pub fn optimal_weight_quadrature(
    model: &dyn StateSpaceModel,
    params: &KernelParams,
    x: f64,
    y: f64,
    target: &Target,
    target_mean: f64,
    quadrature: &GaussHermite,
) -> Result<f64> {
    // ln of g² q² / r, whose mode and curvature place the nodes
    let derivs = |xp: f64| {
        let (g1, g2) = model.observation_log_likelihood_derivatives(y, xp)?;
        let (q1, q2) = model.transition_log_density_derivatives(x, xp)?;
        let (r1, r2) = params.log_density_derivatives(model, x, xp)?;
        Some((2.0 * (g1 + q1) - r1, 2.0 * (g2 + q2) - r2))
    };
    let fallback = params.gaussian(model, x);
    let (center, scale) = match find_mode(derivs, fallback.map_or(x, |g| g.0)) {
        Ok(mode) => {
            let (_, d2) = derivs(mode).expect("derivatives available at the mode");
            (mode, (-1.0 / d2).sqrt())
        }
        Err(_) => fallback.ok_or_else(|| {
            Error::Unsupported(format!(
                "optimal weights need a Gaussian proposal or transition ({} model)",
                model.name()
            ))
        })?,
    };
    let log_tau2 = quadrature.log_normal_expectation(center, scale, |xp| {
        let lg = model.observation_log_likelihood(y, xp);
        let lq = model.transition_log_density(x, xp);
        let lr = params.log_density(model, x, xp);
        let dev = (target.eval(xp) - target_mean).abs();
        2.0 * (lg + lq - lr) + lr - normal_log_pdf(xp, center, scale) + 2.0 * dev.ln()
    });
    if log_tau2 == f64::NEG_INFINITY {
        return Err(Error::DegenerateTarget);
    }
    if !log_tau2.is_finite() {
        return Err(Error::QuadratureNotConverged(format!(
            "optimal weight at x = {x} is {log_tau2}"
        )));
    }
    Ok(0.5 * log_tau2)
}

/// Closed form under full adaptation with the exact optimal kernel and the
/// projection target: `τ*(x) = h(x) sqrt(σ_opt² + (μ_opt − m*)²)`.
pub fn optimal_weight_fully_adapted(model: &dyn StateSpaceModel, x: f64, y: f64, target_mean: f64) -> Result<f64> {
    let kernel = GaussianOptimalKernel::for_model(model, x, y)?;
    let log_h = fa_weight(model, &kernel, x, y)?;
    let spread = kernel.std * kernel.std + (kernel.mean - target_mean).powi(2);
    Ok(log_h + 0.5 * spread.ln())
}

/// Closed form for the prior kernel on a Gaussian model with the
/// projection target. With `g² ∝ N(x'; y, σ_v²/2)` the integrand is Gaussian:
/// `τ*(x)² = N(y; m, σ_w² + σ_v²/2) / (2√π σ_v) · (s² + (μ − m*)²)`.
pub fn optimal_weight_prior_gaussian(model: &dyn StateSpaceModel, x: f64, y: f64, target_mean: f64) -> Result<f64> {
    let sigma_v = gaussian_observation_std(model)?;
    let half = 0.5 * sigma_v * sigma_v;
    let kernel = GaussianOptimalKernel::new(model.transition_mean(x), model.transition_std(x), half.sqrt(), y);
    let m = model.transition_mean(x);
    let sw = model.transition_std(x);
    let log_mass = normal_log_pdf(y, m, (sw * sw + half).sqrt()) - (2.0 * std::f64::consts::PI.sqrt() * sigma_v).ln();
    let spread = kernel.std * kernel.std + (kernel.mean - target_mean).powi(2);
    Ok(0.5 * (log_mass + spread.ln()))
}

/// Laplace approximation of `τ*` for the projection target:
/// `σ̂ g(y | m̂) q(x, m̂) sqrt(σ̂² + (m̂ − m*)²)`.
pub fn optimal_weight_sv(model: &dyn StateSpaceModel, x: f64, y: f64, target_mean: f64) -> Result<f64> {
    let l = laplace_kernel(model, x, y)?;
    let spread = l.std * l.std + (l.mode - target_mean).powi(2);
    Ok(l.log_height + l.std.ln() + 0.5 * spread.ln())
}

/// `ln τ*(x)`, choosing the closed form when one applies.
pub fn optimal_weight(ctx: &FirstStageContext<'_>, params: &KernelParams, x: f64) -> Result<f64> {
    let m_star = ctx
        .target_mean
        .ok_or_else(|| Error::InvalidConfig("optimal weights need the target mean".into()))?;
    if !has_closed_form(ctx) {
        return optimal_weight_quadrature(ctx.model, params, x, ctx.y, ctx.target, m_star, ctx.quadrature);
    }
    match ctx.proposal {
        ProposalKind::Optimal => optimal_weight_fully_adapted(ctx.model, x, ctx.y, m_star),
        ProposalKind::Laplace => optimal_weight_sv(ctx.model, x, ctx.y, m_star),
        ProposalKind::Prior => optimal_weight_prior_gaussian(ctx.model, x, ctx.y, m_star),
    }
}

/// Whether [`optimal_weight`] avoids quadrature for this context.
pub fn has_closed_form(ctx: &FirstStageContext<'_>) -> bool {
    if !ctx.target.is_projection() || ctx.y.is_nan() {
        return false;
    }
    match ctx.proposal {
        ProposalKind::Laplace => true,
        ProposalKind::Optimal | ProposalKind::Prior => gaussian_observation_std(ctx.model).is_ok(),
    }
}

/// Floors a degenerate optimal weight; other errors pass through.
pub(crate) fn floor_degenerate(w: Result<f64>) -> Result<f64> {
    match w {
        Ok(v) => Ok(v.max(LOG_WEIGHT_FLOOR)),
        Err(Error::DegenerateTarget) => Ok(LOG_WEIGHT_FLOOR),
        Err(e) => Err(e),
    }
}

/// `ln ψ(x)` for any strategy. `params` must be `R(x, ·)` for this step.
pub fn log_first_stage_weight(
    strategy: WeightStrategy,
    ctx: &FirstStageContext<'_>,
    params: &KernelParams,
    x: f64,
) -> Result<f64> {
    match strategy {
        WeightStrategy::Uniform => Ok(0.0),
        WeightStrategy::PsGeneric => Ok(ps_generic_weight(ctx.model, x, ctx.y)),
        WeightStrategy::FullyAdapted => fully_adapted_weight(ctx.model, ctx.proposal, x, ctx.y),
        WeightStrategy::OptimalExact | WeightStrategy::OptimalPilot => optimal_weight(ctx, params, x),
    }
}

/// Evaluates `τ*` with `n` and `2n` quadrature nodes and fails if they
/// disagree by more than `rel_tol` (relative, on the linear scale).
pub fn check_quadrature(ctx: &FirstStageContext<'_>, params: &KernelParams, x: f64, rel_tol: f64) -> Result<()> {
    if !has_closed_form(ctx) {
        let finer = GaussHermite::cached(2 * ctx.quadrature.len());
        let fine_ctx = FirstStageContext {
            quadrature: &finer,
            ..*ctx
        };
        let a = optimal_weight(ctx, params, x);
        let b = optimal_weight(&fine_ctx, params, x);
        if let (Ok(a), Ok(b)) = (a, b) {
            let rel = ((a - b).exp() - 1.0).abs();
            if !(rel <= rel_tol) {
                return Err(Error::QuadratureNotConverged(format!(
                    "optimal weight at x = {x}: {} nodes give {a}, {} give {b}",
                    ctx.quadrature.len(),
                    finer.len()
                )));
            }
        }
    }
    Ok(())
}

/// `ln` of the normal density constant, for callers reconstructing `∫ g q`
/// from [`fa_weight`]: `ln h_exact = fa_weight − ln(√(2π) σ_v)`.
pub fn fa_weight_offset(sigma_v: f64) -> f64 {
    -(LN_SQRT_2PI + sigma_v.ln())
}

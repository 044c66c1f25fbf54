//! Second-order (Laplace) approximation of `x' ↦ g(y | x') q(x, x')`.

use crate::error::{Error, Result};
use crate::models::StateSpaceModel;

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
const BISECTION_STEPS: usize = 20;

/// Gaussian approximation `N(mode, std²)` of an unnormalized log-concave
/// density, with `log_height` its log value at the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceApprox {
    pub mode: f64,
    pub std: f64,
    pub log_height: f64,
}

impl LaplaceApprox {
    /// `ln(√(2π) σ̂ · height)`, the Laplace estimate of the log integral.
    pub fn log_normalizer(&self) -> f64 {
        self.log_height + self.std.ln() + crate::models::LN_SQRT_2PI
    }
}

fn newton(derivs: &impl Fn(f64) -> Option<(f64, f64)>, start: f64) -> Option<f64> {
    let mut x = start;
    for _ in 0..NEWTON_MAX_ITER {
        let (d1, d2) = derivs(x)?;
        if !(d2 < 0.0) || !d1.is_finite() {
            return None;
        }
        let step = d1 / d2;
        x -= step;
        if !x.is_finite() {
            return None;
        }
        if step.abs() < NEWTON_TOL {
            return Some(x);
        }
    }
    None
}

/// Brackets the root of the (decreasing) first derivative and bisects.
fn bisect(derivs: &impl Fn(f64) -> Option<(f64, f64)>, start: f64) -> Option<f64> {
    let d1 = |x: f64| derivs(x).map(|d| d.0);
    let (mut lo, mut hi) = (start, start);
    let mut width = 1.0;
    let mut found = false;
    for _ in 0..60 {
        if d1(lo)? > 0.0 && d1(hi)? < 0.0 {
            found = true;
            break;
        }
        if d1(lo)? <= 0.0 {
            lo -= width;
        }
        if d1(hi)? >= 0.0 {
            hi += width;
        }
        width *= 2.0;
    }
    if !found {
        return None;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if d1(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Mode of a log-concave function given its first and second derivatives.
///
/// Newton iterations from `start`; if they fail to settle, 20 bisection
/// steps on the first derivative provide a new starting point.
pub fn find_mode(derivs: impl Fn(f64) -> Option<(f64, f64)>, start: f64) -> Result<f64> {
    if let Some(x) = newton(&derivs, start) {
        return Ok(x);
    }
    let restart = bisect(&derivs, start)
        .ok_or_else(|| Error::ModeSearchFailed(format!("could not bracket the mode from {start}")))?;
    newton(&derivs, restart)
        .ok_or_else(|| Error::ModeSearchFailed(format!("Newton failed after bisection near {restart}")))
}

/// Laplace approximation of `x' ↦ g(y | x') q(x, x')`, started at the prior mean.
pub fn laplace_kernel(model: &dyn StateSpaceModel, x: f64, y: f64) -> Result<LaplaceApprox> {
    let derivs = |xp: f64| {
        let (g1, g2) = model.observation_log_likelihood_derivatives(y, xp)?;
        let (q1, q2) = model.transition_log_density_derivatives(x, xp)?;
        Some((g1 + q1, g2 + q2))
    };
    if derivs(x).is_none() {
        return Err(Error::Unsupported(format!(
            "Laplace proposal needs likelihood and transition derivatives ({} model)",
            model.name()
        )));
    }
    let mode = find_mode(derivs, model.transition_mean(x))?;
    let (_, d2) = derivs(mode).expect("derivatives available");
    let std = (-1.0 / d2).sqrt();
    let log_height = model.observation_log_likelihood(y, mode) + model.transition_log_density(x, mode);
    Ok(LaplaceApprox { mode, std, log_height })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearGaussianAR1, StochasticVolatility};
    use crate::quadrature::GaussHermite;

    fn sv() -> StochasticVolatility {
        StochasticVolatility::new(0.9702, 0.178, 0.5992).unwrap()
    }

    #[test]
    fn first_order_condition_at_mode() {
        let m = sv();
        for (x, y) in [(0.0, 0.5), (2.19, -1.3), (-1.0, 0.01), (0.5, 4.0), (0.0, 0.0)] {
            let l = laplace_kernel(&m, x, y).unwrap();
            let (g1, _) = m.observation_log_likelihood_derivatives(y, l.mode).unwrap();
            let (q1, _) = m.transition_log_density_derivatives(x, l.mode).unwrap();
            assert!((g1 + q1).abs() < 1e-8, "x={x} y={y}");
            assert!(l.std > 0.0);
        }
    }

    #[test]
    fn normalizer_close_to_quadrature_on_sv() {
        let m = sv();
        let gh = GaussHermite::new(128);
        for y in [0.05, 0.6, 1.5, -2.5] {
            let l = laplace_kernel(&m, 0.0, y).unwrap();
            // ∫ g(y|x') q(0, x') dx' = E_{N(0, σ²)}[g(y | X')]
            let exact = gh.normal_expectation(0.0, m.sigma, |xp| m.observation_log_likelihood(y, xp).exp());
            let rel = (l.log_normalizer().exp() - exact).abs() / exact;
            assert!(rel < 0.05, "y={y}: relative error {rel}");
        }
    }

    #[test]
    fn exact_on_gaussian_model() {
        let m = LinearGaussianAR1::new(0.9, 1.0, 0.1).unwrap();
        let (x, y) = (0.4, 1.2);
        let l = laplace_kernel(&m, x, y).unwrap();
        let s2: f64 = 1.0 / (1.0 / 0.01 + 1.0);
        assert!((l.std - s2.sqrt()).abs() < 1e-12);
        assert!((l.mode - (y / 0.01 + 0.9 * x) * s2).abs() < 1e-10);
        // marginal N(y; φx, σ_v² + σ_w²)
        let exact = crate::models::normal_log_pdf(y, 0.9 * x, (1.01f64).sqrt());
        assert!((l.log_normalizer() - exact).abs() < 1e-10);
    }

    #[test]
    fn bisection_rescues_bad_start() {
        // log-density -cosh(x - 3): from far away Newton creeps one unit per step
        let derivs = |x: f64| Some((-(x - 3.0).sinh(), -(x - 3.0).cosh()));
        let m = find_mode(derivs, -60.0).unwrap();
        assert!((m - 3.0).abs() < 1e-9);
    }
}

//! Deterministic grid filter used as a numerical reference for models
//! without a closed-form filter.
//!
//! Densities live on uniform grids with trapezoid weights. The predictive
//! density at step `k` is `Σ_a W_a π_{k-1}(x_a) q(x_a, ·)` evaluated on the
//! step-`k` grid, so successive steps may use different grids.

use super::StateSpaceModel;
use crate::error::{Error, Result};

/// How grid bounds are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridBounds {
    /// The same interval at every step; widened if mass reaches an edge.
    Fixed { lower: f64, upper: f64 },
    /// The model's compact state support. Never widened.
    Support,
    /// `±std_multiple` marginal standard deviations around zero.
    Marginal { std_multiple: f64 },
    /// Per-step bounds from moment-matched approximations of the predictive
    /// and the likelihood. Suitable for non-stationary or explosive states.
    Adaptive { std_multiple: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nodes: usize,
    pub bounds: GridBounds,
    /// Each widening multiplies the half-width by 1.5.
    pub max_widenings: usize,
    /// Maximum allowed ratio of edge density to peak density.
    pub tail_tolerance: f64,
}

impl GridSpec {
    pub fn new(nodes: usize, bounds: GridBounds) -> Self {
        Self {
            nodes,
            bounds,
            max_widenings: 3,
            tail_tolerance: 1e-10,
        }
    }

    /// Compact support if the model has one, `±8` marginal standard
    /// deviations if the state is stationary, adaptive bounds otherwise.
    pub fn for_model(model: &dyn StateSpaceModel, nodes: usize) -> Self {
        let bounds = if model.state_bounds().is_some() {
            GridBounds::Support
        } else if model.marginal_std().is_some() {
            GridBounds::Marginal { std_multiple: 8.0 }
        } else {
            GridBounds::Adaptive { std_multiple: 12.0 }
        };
        Self::new(nodes, bounds)
    }

    pub fn with_nodes(self, nodes: usize) -> Self {
        Self { nodes, ..self }
    }
}

/// A density tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub nodes: Vec<f64>,
    /// Trapezoid quadrature weights.
    pub weights: Vec<f64>,
    /// Normalized filtering density at the nodes.
    pub density: Vec<f64>,
    /// Predictive density at the nodes (the initial density at step 0).
    pub predictive: Vec<f64>,
    /// `ln ∫ predictive(x) g(y | x) dx`.
    pub log_normalizer: f64,
}

impl GridDensity {
    /// Quadrature masses `W_b π(x_b)`, summing to one.
    pub fn masses(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.density).map(|(w, p)| w * p).collect()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter().zip(&self.density))
            .map(|(&x, (w, p))| w * p * f(x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expectation(|x| (x - m) * (x - m))
    }

    pub fn lower(&self) -> f64 {
        self.nodes[0]
    }

    pub fn upper(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
}

/// Filtering densities for every step of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFilter {
    pub steps: Vec<GridDensity>,
}

impl GridFilter {
    pub fn means(&self) -> Vec<f64> {
        self.steps.iter().map(GridDensity::mean).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn linspace(lower: f64, upper: f64, n: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let h = (upper - lower) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { upper } else { lower + h * i as f64 })
        .collect();
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    (nodes, weights, h)
}

/// Predictive density on `nodes` given the previous filter density.
fn predict(model: &dyn StateSpaceModel, prev: &GridDensity, nodes: &[f64], h: f64) -> Vec<f64> {
    let masses = prev.masses();
    let lower = nodes[0];
    let n = nodes.len();
    let mut pred = vec![0.0; n];
    let gaussian = model.gaussian_transition();
    for (&xa, &ma) in prev.nodes.iter().zip(&masses) {
        // tails matter: an outlying likelihood can amplify them enormously
        if !(ma > 0.0) {
            continue;
        }
        if gaussian {
            let m = model.transition_mean(xa);
            let s = model.transition_std(xa);
            let inv_s = 1.0 / s;
            let c = ma * inv_s / (2.0 * std::f64::consts::PI).sqrt();
            // only nodes within 38 standard deviations contribute
            let from = (((m - 38.0 * s) - lower) / h).floor().max(0.0) as usize;
            let to = ((((m + 38.0 * s) - lower) / h).ceil().max(-1.0) + 1.0).min(n as f64) as usize;
            for b in from.min(n)..to {
                let z = (nodes[b] - m) * inv_s;
                pred[b] += c * (-0.5 * z * z).exp();
            }
        } else {
            for (p, &xb) in pred.iter_mut().zip(nodes) {
                *p += ma * model.transition_log_density(xa, xb).exp();
            }
        }
    }
    pred
}

/// Moments of the predictive law of the next step.
fn predictive_moments(model: &dyn StateSpaceModel, prev: &GridDensity) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (&x, m) in prev.nodes.iter().zip(prev.masses()) {
        let mu = model.transition_mean(x);
        let s = model.transition_std(x);
        mean += m * mu;
        second += m * (s * s + mu * mu);
    }
    (mean, (second - mean * mean).max(0.0).sqrt())
}

/// Bounds for one step: the moment-matched posterior `±k` std, extended to
/// cover the likelihood peak in case the predictive is heavy-tailed.
fn adaptive_bounds(model: &dyn StateSpaceModel, pred_mean: f64, pred_std: f64, y: f64, k: f64) -> (f64, f64) {
    match model.likelihood_location(y) {
        Some((loc, scale)) if pred_std > 0.0 => {
            let prec = 1.0 / (pred_std * pred_std) + 1.0 / (scale * scale);
            let s = prec.recip().sqrt();
            let c = (pred_mean / (pred_std * pred_std) + loc / (scale * scale)) * s * s;
            let lower = (c - k * s).min(loc - 0.5 * k * scale);
            let upper = (c + k * s).max(loc + 0.5 * k * scale);
            (lower, upper)
        }
        _ => (pred_mean - k * pred_std, pred_mean + k * pred_std),
    }
}

struct StepOutcome {
    density: GridDensity,
    edge_ratio: f64,
}

fn filter_step(
    model: &dyn StateSpaceModel,
    prev: Option<&GridDensity>,
    y: f64,
    lower: f64,
    upper: f64,
    nodes: usize,
) -> StepOutcome {
    let (xs, ws, h) = linspace(lower, upper, nodes);
    let predictive = match prev {
        None => xs.iter().map(|&x| model.initial_log_density(x).exp()).collect(),
        Some(prev) => predict(model, prev, &xs, h),
    };
    let log_g: Vec<f64> = xs.iter().map(|&x| model.observation_log_likelihood(y, x)).collect();
    let g_max = log_g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = predictive
        .iter()
        .zip(&log_g)
        .map(|(p, lg)| p * (lg - g_max).exp())
        .collect();
    let z: f64 = density.iter().zip(&ws).map(|(p, w)| p * w).sum();
    if !(z > 0.0 && z.is_finite()) {
        return StepOutcome {
            density: GridDensity {
                nodes: xs,
                weights: ws,
                density,
                predictive,
                log_normalizer: f64::NEG_INFINITY,
            },
            edge_ratio: f64::INFINITY,
        };
    }
    density.iter_mut().for_each(|p| *p /= z);
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let edge_ratio = density[0].max(density[nodes - 1]) / peak;
    StepOutcome {
        density: GridDensity {
            nodes: xs,
            weights: ws,
            density,
            predictive,
            log_normalizer: z.ln() + g_max,
        },
        edge_ratio,
    }
}

fn widen(lower: f64, upper: f64) -> (f64, f64) {
    let c = 0.5 * (lower + upper);
    let half = 0.75 * (upper - lower);
    (c - half, c + half)
}

fn run_static(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    spec: &GridSpec,
    lower: f64,
    upper: f64,
    check_tails: bool,
) -> std::result::Result<GridFilter, Error> {
    let mut steps: Vec<GridDensity> = Vec::with_capacity(observations.len());
    for (k, &y) in observations.iter().enumerate() {
        let out = filter_step(model, steps.last(), y, lower, upper, spec.nodes);
        let bad = if check_tails {
            !(out.edge_ratio < spec.tail_tolerance)
        } else {
            !out.edge_ratio.is_finite()
        };
        if bad {
            return Err(Error::GridTooNarrow {
                step: k,
                ratio: out.edge_ratio,
            });
        }
        steps.push(out.density);
    }
    Ok(GridFilter { steps })
}

/// Runs the grid filter over a record.
///
/// Fails with [`Error::GridTooNarrow`] if the filtering mass still reaches
/// a grid edge after `spec.max_widenings` widenings.
pub fn grid_filter(model: &dyn StateSpaceModel, observations: &[f64], spec: &GridSpec) -> Result<GridFilter> {
    if spec.nodes < 3 {
        return Err(Error::InvalidConfig(format!(
            "grid needs at least 3 nodes, got {}",
            spec.nodes
        )));
    }
    let (mut lower, mut upper, check_tails) = match spec.bounds {
        GridBounds::Fixed { lower, upper } => (lower, upper, true),
        GridBounds::Support => {
            let (l, u) = model
                .state_bounds()
                .ok_or_else(|| Error::InvalidConfig("model has no compact support".into()))?;
            (l, u, false)
        }
        GridBounds::Marginal { std_multiple } => {
            let s = model
                .marginal_std()
                .ok_or_else(|| Error::InvalidConfig("model has no marginal standard deviation".into()))?;
            let (m0, s0) = model.initial_moments();
            let half = std_multiple * s.max(s0) + m0.abs();
            (-half, half, true)
        }
        GridBounds::Adaptive { std_multiple } => return adaptive_filter(model, observations, spec, std_multiple),
    };
    if !(lower < upper) {
        return Err(Error::InvalidConfig(format!("empty grid [{lower}, {upper}]")));
    }
    let mut attempt = 0;
    loop {
        match run_static(model, observations, spec, lower, upper, check_tails) {
            Ok(f) => return Ok(f),
            Err(Error::GridTooNarrow { step, ratio }) if check_tails && attempt < spec.max_widenings => {
                log::debug!("grid too narrow at step {step} (edge ratio {ratio:e}); widening");
                (lower, upper) = widen(lower, upper);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn adaptive_filter(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    spec: &GridSpec,
    std_multiple: f64,
) -> Result<GridFilter> {
    let mut steps: Vec<GridDensity> = Vec::with_capacity(observations.len());
    for (k, &y) in observations.iter().enumerate() {
        let (pm, ps) = match steps.last() {
            None => model.initial_moments(),
            Some(prev) => predictive_moments(model, prev),
        };
        let (mut lower, mut upper) = adaptive_bounds(model, pm, ps, y, std_multiple);
        let mut attempt = 0;
        loop {
            let out = filter_step(model, steps.last(), y, lower, upper, spec.nodes);
            if out.edge_ratio < spec.tail_tolerance {
                steps.push(out.density);
                break;
            }
            if attempt == spec.max_widenings {
                return Err(Error::GridTooNarrow {
                    step: k,
                    ratio: out.edge_ratio,
                });
            }
            (lower, upper) = widen(lower, upper);
            attempt += 1;
        }
    }
    Ok(GridFilter { steps })
}

/// Runs the grid filter with `spec.nodes` and `2 * spec.nodes` nodes and
/// checks that the filtering means agree within `tol` at every step.
/// Returns the finer filter.
pub fn grid_filter_converged(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    spec: &GridSpec,
    tol: f64,
) -> Result<GridFilter> {
    let coarse = grid_filter(model, observations, spec)?;
    let fine = grid_filter(model, observations, &spec.with_nodes(2 * spec.nodes))?;
    for (k, (a, b)) in coarse.means().iter().zip(fine.means()).enumerate() {
        if !((a - b).abs() < tol) {
            return Err(Error::QuadratureNotConverged(format!(
                "grid filter mean at step {k}: {a} with {} nodes vs {b} with {} nodes",
                spec.nodes,
                2 * spec.nodes
            )));
        }
    }
    Ok(fine)
}

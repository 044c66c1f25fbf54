use crate::adaptation::{
    check_quadrature, floor_degenerate, log_first_stage_weight, ps_generic_weight, second_stage_weight,
    FirstStageContext, KernelParams, Target, WeightStrategy, LOG_WEIGHT_FLOOR,
};
use crate::error::{Error, Result};
use crate::models::StateSpaceModel;
use crate::quadrature::{log_sum_exp, GaussHermite};
use crate::rng::RngStream;
use crate::sample::{ess_of_probabilities, estimate, normalize, normalize_log, WeightedSample};

use super::config::{FilterConfig, FilterVariant};

/// Particle system after step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub step: usize,
    pub sample: WeightedSample,
    /// Per-step estimates of `ln p(y_k | y_{0:k-1})`.
    pub log_likelihood_increments: Vec<f64>,
    /// Effective sample size of the second-stage weights at each step.
    pub ess_history: Vec<f64>,
}

impl FilterState {
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood_increments.iter().sum()
    }
}

/// What the first stage of one step needs besides the particles.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    /// `y_{k+1}`.
    pub y: f64,
    pub target: &'a Target,
    /// `π_{k+1|k+1} f` for the optimal strategies.
    pub target_mean: Option<f64>,
    /// Overrides the configured strategy for this step (pilot fallback).
    pub strategy: Option<WeightStrategy>,
}

impl<'a> StepInput<'a> {
    pub fn new(y: f64, target: &'a Target) -> Self {
        Self {
            y,
            target,
            target_mean: None,
            strategy: None,
        }
    }

    pub fn with_target_mean(self, m: f64) -> Self {
        Self {
            target_mean: Some(m),
            ..self
        }
    }
}

/// Draws `count` particles from the initial law, weighted by `g(y_0 | x)`.
fn initial_weighted(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    y0: f64,
    count: usize,
    rng: &mut RngStream,
) -> Result<(WeightedSample, f64)> {
    let states: Vec<f64> = (0..count).map(|_| model.sample_initial(rng)).collect();
    let log_w: Vec<f64> = states
        .iter()
        .map(|&x| model.observation_log_likelihood(y0, x))
        .collect();
    let increment = log_sum_exp(&log_w) - (count as f64).ln();
    let mut sample = WeightedSample::from_log(states, log_w)?;
    if config.store_paths {
        sample = sample.with_paths(vec![Vec::new(); count])?;
    }
    Ok((sample, increment))
}

/// Initial particle system: `ξ_0 ~ ν`, `ω_0 = g_0(ξ_0)`. The two-stage
/// filter draws `M_N` particles and resamples `N` of them with unit weights.
pub fn initialize(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    y0: f64,
    rng: &mut RngStream,
) -> Result<FilterState> {
    config.validate()?;
    let (sample, increment) = initial_weighted(config, model, y0, config.first_stage_count(), rng)?;
    let probs = normalize(&sample)?;
    let ess = ess_of_probabilities(&probs);
    let sample = match config.variant {
        FilterVariant::Tsspf => reselect(config, &sample, &probs, rng)?,
        _ => sample,
    };
    Ok(FilterState {
        step: 0,
        sample,
        log_likelihood_increments: vec![increment],
        ess_history: vec![ess],
    })
}

/// `N` multinomial (or configured-scheme) copies with unit weights.
fn reselect(
    config: &FilterConfig,
    sample: &WeightedSample,
    probs: &[f64],
    rng: &mut RngStream,
) -> Result<WeightedSample> {
    let idx = config.scheme.select(probs, config.particles, rng)?;
    let states = idx.iter().map(|&i| sample.states()[i]).collect();
    let mut out = WeightedSample::uniform(states)?;
    if let Some(paths) = sample.paths() {
        out = out.with_paths(idx.iter().map(|&i| paths[i].clone()).collect())?;
    }
    Ok(out)
}

/// Output of the shared weight → select → propagate stage.
struct Propagated {
    states: Vec<f64>,
    log_phi: Vec<f64>,
    paths: Option<Vec<Vec<f64>>>,
    log_likelihood_increment: f64,
}

fn propagate(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    state: &FilterState,
    input: &StepInput<'_>,
    count: usize,
    rng: &mut RngStream,
) -> Result<Propagated> {
    let strategy = input.strategy.unwrap_or_else(|| config.effective_strategy());
    let proposal = config.effective_proposal();
    let xs = state.sample.states();
    let y = input.y;

    let params: Vec<KernelParams> = config
        .particle_execution
        .map_slice(xs, |&x| KernelParams::prepare(proposal, model, x, y))
        .into_iter()
        .collect::<Result<_>>()?;

    let quadrature = GaussHermite::cached(config.quadrature_nodes.max(1));
    let ctx = FirstStageContext {
        model,
        proposal,
        y,
        target: input.target,
        target_mean: input.target_mean,
        quadrature: &quadrature,
    };
    let log_psi: Vec<f64> = match strategy {
        WeightStrategy::Uniform => vec![0.0; xs.len()],
        WeightStrategy::PsGeneric => xs.iter().map(|&x| ps_generic_weight(model, x, y)).collect(),
        _ => {
            let optimal = strategy.needs_target_mean();
            let indices: Vec<usize> = (0..xs.len()).collect();
            let raw = config.particle_execution.map_slice(&indices, |&i| {
                let w = log_first_stage_weight(strategy, &ctx, &params[i], xs[i]);
                if optimal {
                    floor_degenerate(w)
                } else {
                    w
                }
            });
            let log_psi = raw.into_iter().collect::<Result<Vec<f64>>>()?;
            if optimal && log_psi.iter().all(|&l| l <= LOG_WEIGHT_FLOOR) {
                return Err(Error::DegenerateTarget);
            }
            log_psi
        }
    };
    if let Some(bad) = log_psi.iter().find(|l| !l.is_finite()) {
        return Err(Error::NonpositiveFirstStageWeight(bad.exp()));
    }

    let log_w = state.sample.log_weights();
    if strategy.needs_target_mean() {
        // node-doubling check at the heaviest particle
        let heaviest = (0..xs.len())
            .max_by(|&a, &b| (log_w[a] + log_psi[a]).total_cmp(&(log_w[b] + log_psi[b])))
            .expect("non-empty sample");
        check_quadrature(&ctx, &params[heaviest], xs[heaviest], config.quadrature_tolerance)?;
    }

    let selection: Vec<f64> = log_w.iter().zip(&log_psi).map(|(w, p)| w + p).collect();
    let probs = normalize_log(&selection)?;
    let ancestors = config.scheme.select(&probs, count, rng)?;

    let mut states = Vec::with_capacity(count);
    let mut log_phi = Vec::with_capacity(count);
    for &a in &ancestors {
        let x = xs[a];
        let x_next = params[a].sample(model, x, rng);
        let w = second_stage_weight(model, &params[a], log_psi[a], x, x_next, y)?;
        states.push(x_next);
        log_phi.push(if w.is_nan() { f64::NEG_INFINITY } else { w });
    }

    // ln[(Σ ω ψ / Σ ω) · (Σ Φ / M)]
    let log_likelihood_increment =
        log_sum_exp(&selection) - log_sum_exp(&log_w) + log_sum_exp(&log_phi) - (count as f64).ln();

    let paths = state.sample.paths().map(|p| {
        ancestors
            .iter()
            .map(|&a| {
                let mut path = p[a].clone();
                path.push(xs[a]);
                path
            })
            .collect()
    });
    Ok(Propagated {
        states,
        log_phi,
        paths,
        log_likelihood_increment,
    })
}

fn advance(state: &FilterState, sample: WeightedSample, increment: f64, ess: f64) -> FilterState {
    let mut increments = state.log_likelihood_increments.clone();
    increments.push(increment);
    let mut ess_history = state.ess_history.clone();
    ess_history.push(ess);
    FilterState {
        step: state.step + 1,
        sample,
        log_likelihood_increments: increments,
        ess_history,
    }
}

fn into_sample(p: &mut Propagated) -> Result<WeightedSample> {
    let sample = WeightedSample::from_log(std::mem::take(&mut p.states), std::mem::take(&mut p.log_phi))?;
    match p.paths.take() {
        Some(paths) => sample.with_paths(paths),
        None => Ok(sample),
    }
}

/// One step of the single-stage auxiliary particle filter: select `N`
/// ancestors with probabilities `∝ ω ψ`, propagate through `R`, and keep
/// the second-stage weights `Φ` as the new importance weights.
pub fn ssapf_step(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    state: &FilterState,
    input: &StepInput<'_>,
    rng: &mut RngStream,
) -> Result<FilterState> {
    let mut p = propagate(config, model, state, input, config.particles, rng)?;
    let increment = p.log_likelihood_increment;
    let sample = into_sample(&mut p)?;
    let ess = ess_of_probabilities(&normalize(&sample)?);
    Ok(advance(state, sample, increment, ess))
}

/// One step of the two-stage sampling filter: `M_N` first-stage draws
/// weighted by `Φ`, then `N` draws from those with the weights reset to one.
pub fn tsspf_step(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    state: &FilterState,
    input: &StepInput<'_>,
    rng: &mut RngStream,
) -> Result<FilterState> {
    let mut p = propagate(config, model, state, input, config.first_stage_count(), rng)?;
    let increment = p.log_likelihood_increment;
    let first = into_sample(&mut p)?;
    let probs = normalize(&first)?;
    let ess = ess_of_probabilities(&probs);
    let sample = reselect(config, &first, &probs, rng)?;
    Ok(advance(state, sample, increment, ess))
}

/// Dispatches on the configured variant.
pub fn filter_step(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    state: &FilterState,
    input: &StepInput<'_>,
    rng: &mut RngStream,
) -> Result<FilterState> {
    match config.variant {
        FilterVariant::Bootstrap | FilterVariant::Ssapf => ssapf_step(config, model, state, input, rng),
        FilterVariant::Tsspf => tsspf_step(config, model, state, input, rng),
    }
}

/// Output of a complete filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    /// Estimates of `π_{k|k} f`, `k = 0..=n`.
    pub estimates: Vec<f64>,
    pub final_state: FilterState,
    /// Steps at which a degenerate pilot forced the ps-generic fallback.
    pub pilot_fallbacks: Vec<usize>,
}

fn degenerate_at(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::AllWeightsZero => Error::ReplicationDegenerate { step },
        other => other,
    }
}

/// Runs the filter over `observations`.
///
/// `target_means[k]` supplies `π_{k|k} f` to the optimal-exact strategy;
/// other strategies ignore it. Use [`run_with_pilot`] for optimal-pilot.
pub fn run_filter(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    observations: &[f64],
    target: &Target,
    target_means: Option<&[f64]>,
    rng: &mut RngStream,
) -> Result<FilterRun> {
    let strategy = config.effective_strategy();
    if strategy == WeightStrategy::OptimalPilot {
        return Err(Error::InvalidConfig(
            "optimal-pilot runs need a pilot stream; use run_with_pilot".into(),
        ));
    }
    if strategy == WeightStrategy::OptimalExact && target_means.is_none_or(|m| m.len() < observations.len()) {
        return Err(Error::InvalidConfig(
            "optimal-exact needs a target mean for every step".into(),
        ));
    }
    run_inner(
        config,
        model,
        observations,
        target,
        |k, _| Ok(target_means.map(|m| m[k])),
        rng,
    )
}

fn run_inner(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    observations: &[f64],
    target: &Target,
    mut target_mean: impl FnMut(usize, &FilterState) -> Result<Option<f64>>,
    rng: &mut RngStream,
) -> Result<FilterRun> {
    let (&y0, rest) = observations
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("empty observation record".into()))?;
    let mut state = initialize(config, model, y0, rng).map_err(degenerate_at(0))?;
    let mut estimates = Vec::with_capacity(observations.len());
    estimates.push(estimate(&state.sample, |x| target.eval(x)).map_err(degenerate_at(0))?);
    for (i, &y) in rest.iter().enumerate() {
        let k = i + 1;
        let input = StepInput {
            target_mean: target_mean(k, &state)?,
            ..StepInput::new(y, target)
        };
        state = filter_step(config, model, &state, &input, rng).map_err(degenerate_at(k))?;
        estimates.push(estimate(&state.sample, |x| target.eval(x)).map_err(degenerate_at(k))?);
    }
    Ok(FilterRun {
        estimates,
        final_state: state,
        pilot_fallbacks: Vec::new(),
    })
}

/// Runs the filter with a zero-stage bootstrap pilot of `config.pilot`
/// particles, advanced on `pilot_rng`, supplying `π_{k|k} f` to the
/// optimal-pilot strategy.
///
/// If the pilot degenerates at step `k`, that step falls back to
/// ps-generic first-stage weights and the pilot is re-seeded from the main
/// particle system.
pub fn run_with_pilot(
    config: &FilterConfig,
    model: &dyn StateSpaceModel,
    observations: &[f64],
    target: &Target,
    rng: &mut RngStream,
    pilot_rng: &mut RngStream,
) -> Result<FilterRun> {
    config.validate()?;
    if config.effective_strategy() != WeightStrategy::OptimalPilot {
        return Err(Error::InvalidConfig(format!(
            "run_with_pilot needs the optimal-pilot strategy, got {}",
            config.effective_strategy()
        )));
    }
    let (&y0, rest) = observations
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("empty observation record".into()))?;
    let pilot_config = FilterConfig {
        store_paths: false,
        ..FilterConfig::bootstrap(config.pilot)
    };

    let mut state = initialize(config, model, y0, rng).map_err(degenerate_at(0))?;
    let mut pilot = initialize(&pilot_config, model, y0, pilot_rng).ok();
    let mut estimates = vec![estimate(&state.sample, |x| target.eval(x)).map_err(degenerate_at(0))?];
    let mut fallbacks = Vec::new();

    for (i, &y) in rest.iter().enumerate() {
        let k = i + 1;
        let advanced = pilot.as_ref().and_then(|p| {
            let next = filter_step(&pilot_config, model, p, &StepInput::new(y, target), pilot_rng).ok()?;
            let m = estimate(&next.sample, |x| target.eval(x)).ok()?;
            Some((next, m))
        });
        let input = match &advanced {
            Some((_, m)) => StepInput::new(y, target).with_target_mean(*m),
            None => {
                log::info!("pilot degenerated at step {k}; using ps-generic first-stage weights");
                fallbacks.push(k);
                StepInput {
                    strategy: Some(WeightStrategy::PsGeneric),
                    ..StepInput::new(y, target)
                }
            }
        };
        state = filter_step(config, model, &state, &input, rng).map_err(degenerate_at(k))?;
        estimates.push(estimate(&state.sample, |x| target.eval(x)).map_err(degenerate_at(k))?);
        pilot = match advanced {
            Some((next, _)) => Some(next),
            None => reseed_pilot(&pilot_config, &state, pilot_rng),
        };
    }
    Ok(FilterRun {
        estimates,
        final_state: state,
        pilot_fallbacks: fallbacks,
    })
}

/// Pilot restarted from `R` draws of the main particle system.
fn reseed_pilot(pilot_config: &FilterConfig, main: &FilterState, rng: &mut RngStream) -> Option<FilterState> {
    let probs = normalize(&main.sample).ok()?;
    let idx = pilot_config.scheme.select(&probs, pilot_config.particles, rng).ok()?;
    let states = idx.iter().map(|&i| main.sample.states()[i]).collect();
    Some(FilterState {
        step: main.step,
        sample: WeightedSample::uniform(states).ok()?,
        log_likelihood_increments: Vec::new(),
        ess_history: Vec::new(),
    })
}

//! Asymptotic variances of the single-stage (`σ̃²_k`) and two-stage (`σ²_k`)
//! auxiliary filters, evaluated on grids.
//!
//! Both recursions are linear in a function of `x_k` only, so they are
//! evaluated by a backward sweep: starting from `h = f` at step `k`,
//!
//! ```text
//! u   = h − π_j h
//! σ̃² += S_j(u) / c_j²                  (single stage)
//! σ²  += π_j u² + β S_j(u) / c_j²       (two stage)
//! h   ← U_{j-1}(·, u) / c_j
//! ```
//!
//! down to the initial importance sampling term. Here `U_{j-1}(x, u) =
//! ∫ g(y_j | x') q(x, x') u(x') dx'`, `c_j = π_{j-1} U_{j-1}(·, 1)` and
//! `S_j(u) = π_{j-1}ψ · π_{j-1}[ψ^{-1} ∫ g² q² / r · u²]`.

use std::io::Write;

use crate::adaptation::{
    fully_adapted_weight, ps_generic_weight, KernelParams, ProposalKind, Target, WeightStrategy, LOG_WEIGHT_FLOOR,
};
use crate::error::{Error, Result};
use crate::models::{grid_filter, GridDensity, GridSpec, StateSpaceModel};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceOptions {
    pub grid: GridSpec,
    /// `β = N / M_N` of the two-stage filter.
    pub beta: f64,
    /// Relative change allowed when the grid is refined.
    pub tolerance: f64,
}

impl VarianceOptions {
    pub fn for_model(model: &dyn StateSpaceModel) -> Self {
        Self {
            grid: GridSpec::for_model(model, 1024),
            beta: 1.0,
            tolerance: 1e-5,
        }
    }
}

/// One transition `j − 1 → j` of the recursion, tabulated on the grids.
#[derive(Debug, Clone)]
struct Transition {
    /// `A[a][b] = W_b g̃(x_b) q(x_a, x_b)`, row-major, where `g̃` is `g`
    /// rescaled to a unit maximum.
    kernel: Vec<f64>,
    cols: usize,
    /// `K(x_b) = Σ_a μ_a g̃(x_b)² q(x_a, x_b)² / (ψ̂(x_a) r(x_a, x_b))`.
    second_moment: Vec<f64>,
    /// `π_{j-1} ψ̂`.
    mean_psi: f64,
    /// `c_j = Σ_a μ_a Σ_b A[a][b]`.
    normalizer: f64,
    /// `ln ψ̂` on the grid of step `j − 1`, maximum zero.
    log_psi: Vec<f64>,
    /// `τ*(x_a)²` for the target at step `j`, on the same scale as `K`.
    tau_sq: Vec<f64>,
}

impl Transition {
    /// `S_j(u) / c_j²`.
    fn second_stage_term(&self, weights: &[f64], u: &[f64]) -> f64 {
        let s: f64 = weights
            .iter()
            .zip(u)
            .zip(&self.second_moment)
            .map(|((w, u), k)| w * u * u * k)
            .sum();
        self.mean_psi * s / (self.normalizer * self.normalizer)
    }

    /// `U(·, u) / c_j` on the grid of step `j − 1`.
    fn propagate(&self, u: &[f64]) -> Vec<f64> {
        self.kernel
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(u).map(|(a, u)| a * u).sum::<f64>() / self.normalizer)
            .collect()
    }
}

/// The variance components of a target at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceTerms {
    /// `σ̃²_k(f)`.
    pub ssapf: f64,
    /// `σ²_k(f)`.
    pub tsspf: f64,
    /// `π_k Λ²f`, the selection penalty of the last two-stage step.
    pub last_variance: f64,
    /// `β S_k(Λf) / c_k²` (or `β σ̃²_0` at `k = 0`).
    pub last_second_stage: f64,
}

impl VarianceTerms {
    /// `σ²_k` for a two-stage step taken after single-stage history:
    /// equal to `σ̃²_k + π_k Λ²f` when `β = 1`.
    pub fn tsspf_one_step(&self, beta: f64) -> f64 {
        self.ssapf + self.last_variance + (beta - 1.0) * self.last_second_stage / beta
    }
}

/// Recursion state after step `k` for one first-stage weight strategy and
/// proposal kernel.
#[derive(Debug, Clone)]
pub struct VarianceRecursionState<'m> {
    model: &'m dyn StateSpaceModel,
    observations: Vec<f64>,
    strategy: WeightStrategy,
    proposal: ProposalKind,
    target: Target,
    beta: f64,
    grids: Vec<GridDensity>,
    transitions: Vec<Transition>,
    /// `g̃_0` on the first grid.
    initial_likelihood: Vec<f64>,
    ssapf: Vec<f64>,
    tsspf: Vec<f64>,
    terms: Vec<VarianceTerms>,
}

impl<'m> VarianceRecursionState<'m> {
    /// Runs the grid filter over the whole record and evaluates step 0.
    pub fn new(
        model: &'m dyn StateSpaceModel,
        observations: &[f64],
        strategy: WeightStrategy,
        proposal: ProposalKind,
        target: Target,
        options: &VarianceOptions,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidConfig("empty observation record".into()));
        }
        if !(options.beta > 0.0 && options.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "β must lie in (0, 1], got {}",
                options.beta
            )));
        }
        let grids = grid_filter(model, observations, &options.grid)?.steps;
        let first = &grids[0];
        let lg: Vec<f64> = first
            .nodes
            .iter()
            .map(|&x| model.observation_log_likelihood(observations[0], x))
            .collect();
        let lg_max = finite_max(&lg);
        let initial_likelihood = lg.iter().map(|l| (l - lg_max).exp()).collect();
        let mut state = Self {
            model,
            observations: observations.to_vec(),
            strategy,
            proposal,
            target,
            beta: options.beta,
            grids,
            transitions: Vec::new(),
            initial_likelihood,
            ssapf: Vec::new(),
            tsspf: Vec::new(),
            terms: Vec::new(),
        };
        state.record()?;
        Ok(state)
    }

    pub fn step(&self) -> usize {
        self.transitions.len()
    }

    /// Whether every observation has been processed.
    pub fn is_complete(&self) -> bool {
        self.step() + 1 == self.observations.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn strategy(&self) -> WeightStrategy {
        self.strategy
    }

    pub fn proposal(&self) -> ProposalKind {
        self.proposal
    }

    /// The filter density `π_{k|k}` on its grid.
    pub fn filter(&self) -> &GridDensity {
        &self.grids[self.step()]
    }

    /// `σ̃²_k(f)` for the target.
    pub fn sigma2_ssapf(&self) -> f64 {
        self.ssapf[self.step()]
    }

    /// `σ²_k(f)` for the target.
    pub fn sigma2_tsspf(&self) -> f64 {
        self.tsspf[self.step()]
    }

    /// `σ̃²_j(f)` for `j = 0..=k`.
    pub fn ssapf_history(&self) -> &[f64] {
        &self.ssapf
    }

    /// `σ²_j(f)` for `j = 0..=k`.
    pub fn tsspf_history(&self) -> &[f64] {
        &self.tsspf
    }

    /// Variance components of the target at the current step.
    pub fn terms(&self) -> VarianceTerms {
        self.terms[self.step()]
    }

    /// `ln τ*` on the grid of step `k − 1` for the last transition, with the
    /// same scale as the values accepted by [`Self::first_stage_functional`].
    pub fn optimal_log_weights(&self) -> Option<Vec<f64>> {
        self.transitions
            .last()
            .map(|t| t.tau_sq.iter().map(|s| 0.5 * s.ln()).collect())
    }

    /// The first-stage weights `ln ψ̂` used for the last transition.
    pub fn log_first_stage_weights(&self) -> Option<&[f64]> {
        self.transitions.last().map(|t| t.log_psi.as_slice())
    }

    /// `V(ψ) / c_k² = π_{k-1}ψ · π_{k-1}[τ*² / ψ] / c_k²`: the contribution of
    /// the last transition to `σ̃²_k(f)` had it used first-stage weights `ψ`
    /// (given on the grid of step `k − 1`, on the log scale).
    pub fn first_stage_functional(&self, log_psi: &[f64]) -> Result<f64> {
        let t = self
            .transitions
            .last()
            .ok_or_else(|| Error::InvalidConfig("no transition evaluated yet".into()))?;
        if log_psi.len() != t.tau_sq.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} first-stage weights, got {}",
                t.tau_sq.len(),
                log_psi.len()
            )));
        }
        let masses = self.grids[self.step() - 1].masses();
        let shift = finite_max(log_psi);
        let (mut mean_psi, mut inverse) = (0.0, 0.0);
        for ((m, lp), t2) in masses.iter().zip(log_psi).zip(&t.tau_sq) {
            if *m > 0.0 {
                let psi = (lp - shift).exp();
                mean_psi += m * psi;
                inverse += m * t2 / psi;
            }
        }
        Ok(mean_psi * inverse / (t.normalizer * t.normalizer))
    }

    /// Variance components of an arbitrary function `h` of `x_k` at the
    /// current step.
    pub fn evaluate(&self, h: impl Fn(f64) -> f64) -> VarianceTerms {
        let k = self.step();
        let values: Vec<f64> = self.grids[k].nodes.iter().map(|&x| h(x)).collect();
        self.sweep(k, values)
    }

    fn sweep(&self, k: usize, mut h: Vec<f64>) -> VarianceTerms {
        let (mut ssapf, mut tsspf) = (0.0, 0.0);
        let (mut last_variance, mut last_second_stage) = (None, None);
        for j in (1..=k).rev() {
            let grid = &self.grids[j];
            let (u, var) = centre(grid, &h);
            let t = &self.transitions[j - 1];
            let s = t.second_stage_term(&grid.weights, &u);
            ssapf += s;
            tsspf += var + self.beta * s;
            last_variance.get_or_insert(var);
            last_second_stage.get_or_insert(self.beta * s);
            h = t.propagate(&u);
        }
        let grid = &self.grids[0];
        let (u, var) = centre(grid, &h);
        let s0 = self.initial_term(&u);
        ssapf += s0;
        tsspf += var + self.beta * s0;
        VarianceTerms {
            ssapf,
            tsspf,
            last_variance: last_variance.unwrap_or(var),
            last_second_stage: last_second_stage.unwrap_or(self.beta * s0),
        }
    }

    /// `ν(g_0² u²) / (ν g_0)²`, the self-normalized importance sampling
    /// variance of the initial sample.
    fn initial_term(&self, u: &[f64]) -> f64 {
        let grid = &self.grids[0];
        let (mut num, mut den) = (0.0, 0.0);
        for (((w, p), g), u) in grid
            .weights
            .iter()
            .zip(&grid.predictive)
            .zip(&self.initial_likelihood)
            .zip(u)
        {
            num += w * p * g * g * u * u;
            den += w * p * g;
        }
        num / (den * den)
    }

    fn record(&mut self) -> Result<()> {
        let k = self.step();
        let target = self.target.clone();
        let terms = self.evaluate(|x| target.eval(x));
        if !(terms.ssapf >= 0.0 && terms.tsspf >= 0.0) {
            return Err(Error::QuadratureNotConverged(format!(
                "non-finite or negative variance at step {k}: {} / {}",
                terms.ssapf, terms.tsspf
            )));
        }
        self.ssapf.push(terms.ssapf);
        self.tsspf.push(terms.tsspf);
        self.terms.push(terms);
        Ok(())
    }

    /// Tabulates the next transition and evaluates the target there.
    fn advance(&mut self) -> Result<()> {
        let j = self.step() + 1;
        if j >= self.observations.len() {
            return Err(Error::InvalidConfig(format!(
                "record has only {} observations",
                self.observations.len()
            )));
        }
        let t = self.transition(j)?;
        self.transitions.push(t);
        self.record()
    }

    fn transition(&self, j: usize) -> Result<Transition> {
        let model = self.model;
        let y = self.observations[j];
        let prev = &self.grids[j - 1];
        let cur = &self.grids[j];
        let masses = prev.masses();
        let rows = prev.nodes.len();
        let cols = cur.nodes.len();

        let lg: Vec<f64> = cur
            .nodes
            .iter()
            .map(|&x| model.observation_log_likelihood(y, x))
            .collect();
        let lg_max = finite_max(&lg);
        let lg: Vec<f64> = lg.iter().map(|l| l - lg_max).collect();
        let m_star = cur.expectation(|x| self.target.eval(x));
        let dev_sq: Vec<f64> = cur
            .nodes
            .iter()
            .map(|&x| (self.target.eval(x) - m_star).powi(2))
            .collect();

        // Per row: A row, ln(g̃² q² / r) row and τ*².
        let rows_out = Execution::default().map_range(rows, |a| -> Result<(Vec<f64>, Vec<f64>, f64)> {
            let x = prev.nodes[a];
            let params = KernelParams::prepare(self.proposal, model, x, y)?;
            let mut kernel = Vec::with_capacity(cols);
            let mut log_t = Vec::with_capacity(cols);
            let mut tau_sq = 0.0;
            for b in 0..cols {
                let xb = cur.nodes[b];
                let lq = model.transition_log_density(x, xb);
                let lr = match params {
                    KernelParams::Prior => lq,
                    _ => params.log_density(model, x, xb),
                };
                kernel.push(cur.weights[b] * (lg[b] + lq).exp());
                let lt = 2.0 * (lg[b] + lq) - lr;
                let lt = if lt.is_nan() { f64::NEG_INFINITY } else { lt };
                tau_sq += cur.weights[b] * lt.exp() * dev_sq[b];
                log_t.push(lt);
            }
            Ok((kernel, log_t, tau_sq))
        });
        let mut kernel = Vec::with_capacity(rows * cols);
        let mut log_t = Vec::with_capacity(rows);
        let mut tau_sq = Vec::with_capacity(rows);
        for r in rows_out {
            let (k, lt, t2) = r?;
            kernel.extend(k);
            log_t.push(lt);
            tau_sq.push(t2);
        }

        let log_psi = self.log_first_stage(j, &masses, &tau_sq)?;
        let mean_psi: f64 = masses.iter().zip(&log_psi).map(|(m, lp)| m * lp.exp()).sum();
        let normalizer: f64 = kernel
            .chunks_exact(cols)
            .zip(&masses)
            .map(|(row, m)| m * row.iter().sum::<f64>())
            .sum();
        if !(normalizer > 0.0) {
            return Err(Error::QuadratureNotConverged(format!(
                "predictive likelihood vanishes at step {j}"
            )));
        }
        let mut second_moment = vec![0.0; cols];
        for ((m, lp), lt) in masses.iter().zip(&log_psi).zip(&log_t) {
            if *m > 0.0 {
                let offset = m.ln() - lp;
                for (k, l) in second_moment.iter_mut().zip(lt) {
                    *k += (offset + l).exp();
                }
            }
        }
        Ok(Transition {
            kernel,
            cols,
            second_moment,
            mean_psi,
            normalizer,
            log_psi,
            tau_sq,
        })
    }

    /// `ln ψ̂` on grid `j − 1` for the transition to `j`, shifted so that the
    /// largest value among nodes carrying mass is zero.
    fn log_first_stage(&self, j: usize, masses: &[f64], tau_sq: &[f64]) -> Result<Vec<f64>> {
        let model = self.model;
        let y = self.observations[j];
        let nodes = &self.grids[j - 1].nodes;
        let raw: Vec<f64> = match self.strategy {
            WeightStrategy::Uniform => vec![0.0; nodes.len()],
            WeightStrategy::PsGeneric => nodes.iter().map(|&x| ps_generic_weight(model, x, y)).collect(),
            WeightStrategy::FullyAdapted => nodes
                .iter()
                .map(|&x| fully_adapted_weight(model, self.proposal, x, y))
                .collect::<Result<_>>()?,
            WeightStrategy::OptimalExact | WeightStrategy::OptimalPilot => {
                let raw: Vec<f64> = tau_sq.iter().map(|t| 0.5 * t.ln()).collect();
                let shift = finite_max(&raw);
                let floored: Vec<f64> = raw.iter().map(|l| (l - shift).max(LOG_WEIGHT_FLOOR)).collect();
                if floored.iter().all(|&l| l == LOG_WEIGHT_FLOOR) || !shift.is_finite() {
                    return Err(Error::DegenerateTarget);
                }
                floored
            }
        };
        let shift = raw
            .iter()
            .zip(masses)
            .filter(|(_, m)| **m > 0.0)
            .map(|(l, _)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::NonpositiveFirstStageWeight(0.0));
        }
        Ok(raw.iter().map(|l| l - shift).collect())
    }
}

/// Advances the recursions by one step.
pub fn variance_recursion_step(mut state: VarianceRecursionState<'_>) -> Result<VarianceRecursionState<'_>> {
    state.advance()?;
    Ok(state)
}

/// `(u, π u²)` with `u = h − π h`.
fn centre(grid: &GridDensity, h: &[f64]) -> (Vec<f64>, f64) {
    let masses = grid.masses();
    let mean: f64 = masses.iter().zip(h).map(|(m, h)| m * h).sum();
    let u: Vec<f64> = h.iter().map(|h| h - mean).collect();
    let var = masses.iter().zip(&u).map(|(m, u)| m * u * u).sum();
    (u, var)
}

fn finite_max(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `σ̃²_k` and `σ²_k` at every step of the record.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    pub strategy: WeightStrategy,
    pub proposal: ProposalKind,
    pub ssapf: Vec<f64>,
    pub tsspf: Vec<f64>,
    /// `π_k Λ²f` at every step.
    pub filter_variance: Vec<f64>,
}

fn profile_once(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    strategy: WeightStrategy,
    proposal: ProposalKind,
    target: &Target,
    options: &VarianceOptions,
) -> Result<VarianceProfile> {
    let mut state = VarianceRecursionState::new(model, observations, strategy, proposal, target.clone(), options)?;
    let mut filter_variance = vec![state.terms().last_variance];
    while !state.is_complete() {
        state = variance_recursion_step(state)?;
        filter_variance.push(state.terms().last_variance);
    }
    Ok(VarianceProfile {
        strategy,
        proposal,
        ssapf: state.ssapf,
        tsspf: state.tsspf,
        filter_variance,
    })
}

/// Evaluates both recursions over the record, and again on a grid with
/// twice the nodes; fails with [`Error::QuadratureNotConverged`] if any
/// value moves by more than `options.tolerance` (relative). Returns the
/// finer evaluation.
pub fn variance_profile(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    strategy: WeightStrategy,
    proposal: ProposalKind,
    target: &Target,
    options: &VarianceOptions,
) -> Result<VarianceProfile> {
    let coarse = profile_once(model, observations, strategy, proposal, target, options)?;
    let fine_opts = VarianceOptions {
        grid: options.grid.with_nodes(2 * options.grid.nodes),
        ..*options
    };
    let fine = profile_once(model, observations, strategy, proposal, target, &fine_opts)?;
    let pairs = coarse
        .ssapf
        .iter()
        .zip(&fine.ssapf)
        .chain(coarse.tsspf.iter().zip(&fine.tsspf));
    for (k, (a, b)) in pairs.enumerate() {
        if !((a - b).abs() <= options.tolerance * b.abs()) {
            return Err(Error::QuadratureNotConverged(format!(
                "{strategy} variance at step {}: {a} with {} nodes vs {b} with {} nodes",
                k % coarse.ssapf.len(),
                options.grid.nodes,
                fine_opts.grid.nodes
            )));
        }
    }
    Ok(fine)
}

/// Label of a strategy/proposal pair: the strategy name, suffixed with the
/// proposal when it is not the prior kernel.
pub fn arm_label(strategy: WeightStrategy, proposal: ProposalKind) -> String {
    match proposal {
        ProposalKind::Prior => strategy.to_string(),
        p => format!("{strategy}/{p}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub k: usize,
    pub strategy: String,
    pub sigma2_ssapf: f64,
    pub sigma2_tsspf: f64,
}

/// A step at which an optimal strategy's `σ̃²_k` exceeded another
/// strategy's with the same proposal kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityViolation {
    pub k: usize,
    pub strategy: String,
    pub optimal: f64,
    pub other: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyComparison {
    pub profiles: Vec<VarianceProfile>,
    /// Rows ordered by step, then by strategy in input order.
    pub rows: Vec<VarianceRow>,
    pub violations: Vec<OptimalityViolation>,
}

/// Slack allowed before an optimal strategy is reported as beaten.
pub const OPTIMALITY_SLACK: f64 = 1e-9;

/// Evaluates each strategy and checks `σ̃²_k(optimal) ≤ σ̃²_k(other)` for
/// every other strategy sharing its proposal kernel.
///
/// The optimal weights minimize the contribution of each transition, not
/// the accumulated variance, so violations are reported rather than
/// treated as errors.
pub fn compare_strategies(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    arms: &[(WeightStrategy, ProposalKind)],
    target: &Target,
    options: &VarianceOptions,
) -> Result<StrategyComparison> {
    let profiles = Execution::default()
        .map_slice(arms, |&(s, p)| {
            variance_profile(model, observations, s, p, target, options)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for k in 0..observations.len() {
        for p in &profiles {
            rows.push(VarianceRow {
                k,
                strategy: arm_label(p.strategy, p.proposal),
                sigma2_ssapf: p.ssapf[k],
                sigma2_tsspf: p.tsspf[k],
            });
        }
        for opt in profiles.iter().filter(|p| p.strategy == WeightStrategy::OptimalExact) {
            for other in profiles
                .iter()
                .filter(|p| p.proposal == opt.proposal && p.strategy != opt.strategy)
            {
                if opt.ssapf[k] > other.ssapf[k] + OPTIMALITY_SLACK {
                    log::warn!(
                        "step {k}: optimal weights give {} > {} for {}",
                        opt.ssapf[k],
                        other.ssapf[k],
                        other.strategy
                    );
                    violations.push(OptimalityViolation {
                        k,
                        strategy: arm_label(other.strategy, other.proposal),
                        optimal: opt.ssapf[k],
                        other: other.ssapf[k],
                    });
                }
            }
        }
    }
    Ok(StrategyComparison {
        profiles,
        rows,
        violations,
    })
}

/// Writes `k,strategy,sigma2_ssapf,sigma2_tsspf` rows.
pub fn write_variance_csv(rows: &[VarianceRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "k,strategy,sigma2_ssapf,sigma2_tsspf")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.k,
            r.strategy,
            crate::format::fmt_g12(r.sigma2_ssapf),
            crate::format::fmt_g12(r.sigma2_tsspf)
        )?;
    }
    Ok(())
}

use std::fmt;
use std::str::FromStr;

use crate::adaptation::{ProposalKind, WeightStrategy};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::resample::ResamplingScheme;

/// Smallest pilot filter accepted for the optimal-pilot strategy.
pub const MIN_PILOT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FilterVariant {
    /// Single-stage filter with uniform first-stage weights and the prior kernel.
    #[default]
    Bootstrap,
    /// Single-stage auxiliary particle filter: second-stage weights are kept.
    Ssapf,
    /// Two-stage sampling filter: a concluding resampling pass resets weights.
    Tsspf,
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterVariant::Bootstrap => "bootstrap",
            FilterVariant::Ssapf => "ssapf",
            FilterVariant::Tsspf => "tsspf",
        })
    }
}

impl FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(FilterVariant::Bootstrap),
            "ssapf" => Ok(FilterVariant::Ssapf),
            "tsspf" => Ok(FilterVariant::Tsspf),
            other => Err(Error::InvalidConfig(format!("unknown filter variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub variant: FilterVariant,
    /// `N`, the number of particles carried between steps.
    pub particles: usize,
    /// `c` in `M_N = cN`, the first-stage sample size of the two-stage filter.
    pub first_stage_factor: usize,
    pub scheme: ResamplingScheme,
    pub proposal: ProposalKind,
    pub strategy: WeightStrategy,
    /// `R`, the pilot filter size; 0 disables the pilot.
    pub pilot: usize,
    /// Gauss–Hermite nodes for optimal first-stage weights.
    pub quadrature_nodes: usize,
    /// Relative tolerance of the per-step node-doubling check.
    pub quadrature_tolerance: f64,
    pub store_paths: bool,
    /// How per-particle work inside one step is scheduled.
    pub particle_execution: Execution,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            variant: FilterVariant::Bootstrap,
            particles: 1000,
            first_stage_factor: 1,
            scheme: ResamplingScheme::Multinomial,
            proposal: ProposalKind::Prior,
            strategy: WeightStrategy::Uniform,
            pilot: 0,
            quadrature_nodes: 64,
            quadrature_tolerance: 1e-6,
            store_paths: false,
            particle_execution: Execution::Sequential,
        }
    }
}

impl FilterConfig {
    pub fn bootstrap(particles: usize) -> Self {
        Self {
            particles,
            ..Self::default()
        }
    }

    pub fn ssapf(particles: usize, strategy: WeightStrategy, proposal: ProposalKind) -> Self {
        Self {
            variant: FilterVariant::Ssapf,
            particles,
            strategy,
            proposal,
            ..Self::default()
        }
    }

    pub fn tsspf(particles: usize, strategy: WeightStrategy, proposal: ProposalKind) -> Self {
        Self {
            variant: FilterVariant::Tsspf,
            ..Self::ssapf(particles, strategy, proposal)
        }
    }

    /// The bootstrap filter ignores any configured strategy and proposal.
    pub fn effective_strategy(&self) -> WeightStrategy {
        match self.variant {
            FilterVariant::Bootstrap => WeightStrategy::Uniform,
            _ => self.strategy,
        }
    }

    pub fn effective_proposal(&self) -> ProposalKind {
        match self.variant {
            FilterVariant::Bootstrap => ProposalKind::Prior,
            _ => self.proposal,
        }
    }

    /// `M_N`: first-stage draws per step (equal to `N` for single-stage filters).
    pub fn first_stage_count(&self) -> usize {
        match self.variant {
            FilterVariant::Tsspf => self.first_stage_factor * self.particles,
            _ => self.particles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 particles, got {}",
                self.particles
            )));
        }
        if self.first_stage_factor == 0 {
            return Err(Error::InvalidConfig("first-stage factor must be at least 1".into()));
        }
        if self.effective_strategy().needs_target_mean() && self.quadrature_nodes == 0 {
            return Err(Error::InvalidConfig("optimal weights need quadrature nodes".into()));
        }
        if self.effective_strategy() == WeightStrategy::OptimalPilot {
            if self.pilot < MIN_PILOT {
                return Err(Error::InvalidConfig(format!(
                    "pilot size must be at least {MIN_PILOT}, got {}",
                    self.pilot
                )));
            }
            if self.pilot > self.particles {
                return Err(Error::InvalidConfig(format!(
                    "pilot size {} exceeds the particle count {}",
                    self.pilot, self.particles
                )));
            }
        }
        Ok(())
    }
}

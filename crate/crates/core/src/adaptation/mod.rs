//! Proposal kernels and first-stage weight strategies.

mod laplace;
mod proposal;
mod strategy;

pub use laplace::{find_mode, laplace_kernel, LaplaceApprox};
pub use proposal::{GaussianOptimalKernel, KernelParams, ProposalKind};
pub(crate) use strategy::floor_degenerate;
pub use strategy::{
    check_quadrature, fa_weight, fa_weight_offset, fully_adapted_weight, has_closed_form, log_first_stage_weight,
    optimal_weight, optimal_weight_fully_adapted, optimal_weight_prior_gaussian, optimal_weight_quadrature,
    optimal_weight_sv, ps_generic_weight, second_stage_weight, FirstStageContext, Target, WeightStrategy,
    LOG_WEIGHT_FLOOR,
};

//! Replicated MSE experiments comparing filter arms against an exact or
//! grid-based oracle, and their CSV output.

mod config;
mod output;
mod run;

pub use config::{Arm, ExperimentConfig, ModelSpec, PilotSize, RecordSource, CONFIG_KEYS};
pub use output::{
    emit_plot_data, parse_plot_csv, write_degenerate_csv, write_mse_csv, write_outputs, write_plot_csv, PlotRow,
};
pub use run::{
    load_observations, oracle_means, run_experiment, run_replication, simulate_record, ArmReport, MseReport,
};

use crate::adaptation::{ProposalKind, WeightStrategy};
use crate::error::{Error, Result};
use crate::models::parse_record;

pub const EXPERIMENT_IDS: [&str; 7] = [
    "lingauss-basic",
    "outlier",
    "lingauss-fa-informative",
    "lingauss-fa-noninformative",
    "arch-informative",
    "arch-noninformative",
    "sv-pound",
];

/// Seeds and lengths of the shipped simulated records, so they can be
/// regenerated with `simulate`.
pub const RECORD_SEEDS: [(&str, u64, usize); 6] = [
    ("lingauss-basic", 101, 11),
    ("lingauss-fa-informative", 102, 11),
    ("lingauss-fa-noninformative", 103, 11),
    ("arch-informative", 104, 11),
    ("arch-noninformative", 105, 11),
    ("sv-pound", 106, 11),
];

const RECORDS: [(&str, &str); 7] = [
    ("lingauss-basic", include_str!("../../data/records/lingauss-basic.csv")),
    ("outlier", include_str!("../../data/records/outlier.csv")),
    (
        "lingauss-fa-informative",
        include_str!("../../data/records/lingauss-fa-informative.csv"),
    ),
    (
        "lingauss-fa-noninformative",
        include_str!("../../data/records/lingauss-fa-noninformative.csv"),
    ),
    (
        "arch-informative",
        include_str!("../../data/records/arch-informative.csv"),
    ),
    (
        "arch-noninformative",
        include_str!("../../data/records/arch-noninformative.csv"),
    ),
    ("sv-pound", include_str!("../../data/records/sv-pound.csv")),
];

/// A record shipped with the library.
pub fn builtin_record(name: &str) -> Result<Vec<f64>> {
    let (_, text) = RECORDS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown built-in record `{name}`")))?;
    parse_record(text)
}

/// One-line summary of a catalog entry.
pub fn describe(id: &str) -> Option<&'static str> {
    Some(match id {
        "lingauss-basic" => "AR(1), phi=0.9, sigma=sigma_v=0.1: bootstrap vs ps-generic vs optimal weights",
        "outlier" => "AR(1), sigma=0.1, sigma_v=1, record with an outlier y_5=20",
        "lingauss-fa-informative" => "AR(1), sigma=1, sigma_v=0.1: fully adapted vs optimal weights",
        "lingauss-fa-noninformative" => "AR(1), sigma=0.1, sigma_v=1: fully adapted vs optimal weights",
        "arch-informative" => "noisy ARCH(1), (beta0, beta1, sigma_v)=(9, 5, 1), pilot R=N/10",
        "arch-noninformative" => "noisy ARCH(1), (beta0, beta1, sigma_v)=(0.1, 1, 3), pilot R=N/10",
        "sv-pound" => "stochastic volatility, (phi, beta, sigma)=(0.9702, 0.5992, 0.178), x0=2.19, pilot R=N/5",
        _ => return None,
    })
}

/// The built-in configuration of an experiment.
pub fn catalog_entry(id: &str) -> Result<ExperimentConfig> {
    use ProposalKind::{Laplace, Optimal, Prior};
    use WeightStrategy::*;
    let lg = |sigma, sigma_v| ModelSpec::LinearGaussian {
        phi: 0.9,
        sigma,
        sigma_v,
    };
    let blind = vec![
        Arm::BOOTSTRAP,
        Arm::ssapf(PsGeneric, Prior),
        Arm::ssapf(OptimalExact, Prior),
    ];
    let fa = vec![
        Arm::BOOTSTRAP,
        Arm::ssapf(FullyAdapted, Optimal),
        Arm::ssapf(OptimalExact, Optimal),
    ];
    let (model, arms, pilot) = match id {
        "lingauss-basic" => (lg(0.1, 0.1), blind, PilotSize::Fraction(10)),
        "outlier" => (lg(0.1, 1.0), blind, PilotSize::Fraction(10)),
        "lingauss-fa-informative" => (lg(1.0, 0.1), fa, PilotSize::Fraction(10)),
        "lingauss-fa-noninformative" => (lg(0.1, 1.0), fa, PilotSize::Fraction(10)),
        "arch-informative" | "arch-noninformative" => {
            let (beta0, beta1, sigma_v) = if id == "arch-informative" {
                (9.0, 5.0, 1.0)
            } else {
                (0.1, 1.0, 3.0)
            };
            let arms = vec![
                Arm::BOOTSTRAP,
                Arm::ssapf(PsGeneric, Prior),
                Arm::ssapf(FullyAdapted, Optimal),
                Arm::ssapf(OptimalPilot, Optimal),
            ];
            (ModelSpec::Arch { beta0, beta1, sigma_v }, arms, PilotSize::Fraction(10))
        }
        "sv-pound" => {
            let model = ModelSpec::StochasticVolatility {
                phi: 0.9702,
                sigma: 0.178,
                beta: 0.5992,
                x0: Some(2.19),
            };
            let arms = vec![
                Arm::BOOTSTRAP,
                Arm::ssapf(PsGeneric, Prior),
                Arm::ssapf(FullyAdapted, Laplace),
                Arm::ssapf(OptimalPilot, Laplace),
            ];
            (model, arms, PilotSize::Fraction(5))
        }
        other => return Err(Error::InvalidConfig(format!("unknown experiment `{other}`"))),
    };
    Ok(ExperimentConfig {
        id: id.to_string(),
        model,
        record: RecordSource::Builtin(id.to_string()),
        arms,
        particles: 4000,
        first_stage: None,
        pilot,
        runs: 200,
        seed: 20_080_331,
        out: None,
        oracle_nodes: 2048,
    })
}

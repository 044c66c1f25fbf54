use std::time::{Duration, Instant};

use super::config::{Arm, ExperimentConfig, ModelSpec, RecordSource};
use crate::adaptation::{Target, WeightStrategy};
use crate::analysis::stats::{paired_less, TestOutcome};
use crate::error::{Error, Result};
use crate::filters::{run_filter, run_with_pilot, FilterRun};
use crate::models::{
    grid_filter_converged, kalman_filter, read_record, simulate, simulate_from, GridSpec, StateSpaceModel, Trajectory,
};
use crate::parallel::Execution;
use crate::rng::{RngStream, Stage, StreamKey};

/// Simulates a record of `len` observations from the model, starting from
/// its fixed initial state if it has one.
pub fn simulate_record(spec: &ModelSpec, seed: u64, len: usize) -> Result<Trajectory> {
    let model = spec.build()?;
    let mut rng = RngStream::for_replication(seed, 0, Stage::Simulate);
    Ok(match spec.simulation_start() {
        Some(x0) => simulate_from(model.as_ref(), x0, len, &mut rng),
        None => simulate(model.as_ref(), len, &mut rng),
    })
}

pub fn load_observations(config: &ExperimentConfig) -> Result<Vec<f64>> {
    let ys = match &config.record {
        RecordSource::Builtin(name) => super::builtin_record(name)?,
        RecordSource::File(path) => read_record(path)?,
        RecordSource::Simulate { seed, observations } => {
            simulate_record(&config.model, *seed, *observations)?.observations
        }
    };
    if ys.is_empty() {
        return Err(Error::InvalidConfig("empty observation record".into()));
    }
    Ok(ys)
}

/// Filter means `π_{k|k}(x)`: Kalman for linear-Gaussian models, otherwise a
/// grid filter checked against one with half the nodes.
pub fn oracle_means(spec: &ModelSpec, ys: &[f64], nodes: usize) -> Result<Vec<f64>> {
    if let Some(lg) = spec.linear_gaussian() {
        return Ok(kalman_filter(&lg, ys).iter().map(|g| g.mean).collect());
    }
    let model = spec.build()?;
    let grid = grid_filter_converged(model.as_ref(), ys, &GridSpec::for_model(model.as_ref(), nodes), 1e-6)?;
    Ok(grid.means())
}

/// Runs one replication of one arm on the streams of `replication`.
pub fn run_replication(
    config: &ExperimentConfig,
    model: &dyn StateSpaceModel,
    arm: &Arm,
    ys: &[f64],
    oracle: &[f64],
    replication: u64,
) -> Result<FilterRun> {
    let cfg = config.filter_config(arm)?;
    let key = StreamKey::new(config.seed, replication);
    let target = Target::Projection;
    let mut rng = key.stream(Stage::Filter);
    match cfg.effective_strategy() {
        WeightStrategy::OptimalPilot => {
            run_with_pilot(&cfg, model, ys, &target, &mut rng, &mut key.stream(Stage::Pilot))
        }
        WeightStrategy::OptimalExact => run_filter(&cfg, model, ys, &target, Some(oracle), &mut rng),
        _ => run_filter(&cfg, model, ys, &target, None, &mut rng),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub arm: Arm,
    /// Filter means per replication; `None` for degenerate replications.
    pub estimates: Vec<Option<Vec<f64>>>,
    /// `(1/runs) Σ (estimate_k − oracle_k)²` over completed replications.
    pub mse: Vec<f64>,
    /// Standard error of `mse`.
    pub stderr: Vec<f64>,
    pub degenerate: usize,
    /// Steps at which the pilot filter degenerated, summed over replications.
    pub pilot_fallbacks: usize,
    pub runtime: Duration,
}

impl ArmReport {
    pub fn label(&self) -> String {
        self.arm.to_string()
    }

    pub fn completed(&self) -> usize {
        self.estimates.len() - self.degenerate
    }

    /// `(estimate_k − oracle_k)²` per replication (`None` if degenerate).
    pub fn squared_errors(&self, oracle: &[f64], k: usize) -> Vec<Option<f64>> {
        self.estimates
            .iter()
            .map(|e| e.as_ref().map(|e| (e[k] - oracle[k]).powi(2)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub experiment: String,
    pub observations: Vec<f64>,
    pub oracle: Vec<f64>,
    pub arms: Vec<ArmReport>,
}

impl MseReport {
    pub fn arm(&self, label: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.label() == label)
    }

    /// Paired test of `MSE_k(a) < MSE_k(b)` over replications where both
    /// arms completed.
    pub fn compare(&self, a: &str, b: &str, k: usize) -> Result<TestOutcome> {
        let get = |l: &str| {
            self.arm(l)
                .ok_or_else(|| Error::InvalidConfig(format!("no arm `{l}` in report")))
        };
        let (ea, eb) = (
            get(a)?.squared_errors(&self.oracle, k),
            get(b)?.squared_errors(&self.oracle, k),
        );
        let (xa, xb): (Vec<f64>, Vec<f64>) = ea.iter().zip(&eb).filter_map(|(x, y)| Some(((*x)?, (*y)?))).unzip();
        paired_less(&xa, &xb)
    }

    /// Whether some arm lost every replication.
    pub fn any_arm_fully_degenerate(&self) -> bool {
        self.arms.iter().any(|a| a.completed() == 0)
    }
}

fn summarize(arm: Arm, runs: Vec<Result<FilterRun>>, oracle: &[f64], runtime: Duration) -> Result<ArmReport> {
    let mut estimates = Vec::with_capacity(runs.len());
    let mut degenerate = 0;
    let mut pilot_fallbacks = 0;
    for (rep, r) in runs.into_iter().enumerate() {
        match r {
            Ok(run) => {
                pilot_fallbacks += run.pilot_fallbacks.len();
                estimates.push(Some(run.estimates));
            }
            Err(Error::ReplicationDegenerate { step }) => {
                log::warn!("{arm}: replication {rep} degenerated at step {step}");
                degenerate += 1;
                estimates.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let n = oracle.len();
    let mut mse = vec![f64::NAN; n];
    let mut stderr = vec![f64::NAN; n];
    for k in 0..n {
        let sq: Vec<f64> = estimates.iter().flatten().map(|e| (e[k] - oracle[k]).powi(2)).collect();
        if sq.is_empty() {
            continue;
        }
        let m = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / m;
        mse[k] = mean;
        stderr[k] = if sq.len() > 1 {
            (sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            f64::NAN
        };
    }
    Ok(ArmReport {
        arm,
        estimates,
        mse,
        stderr,
        degenerate,
        pilot_fallbacks,
        runtime,
    })
}

/// Runs every arm for `config.runs` replications. Replications of an arm
/// run in parallel on their own streams; arms run one after another, and
/// replication `r` of every arm uses the same seed-derived streams.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MseReport> {
    config.validate()?;
    let model = config.model.build()?;
    let ys = load_observations(config)?;
    let oracle = oracle_means(&config.model, &ys, config.oracle_nodes)?;
    let mut arms = Vec::with_capacity(config.arms.len());
    for arm in &config.arms {
        let start = Instant::now();
        let runs = Execution::default().map_range(config.runs, |rep| {
            run_replication(config, model.as_ref(), arm, &ys, &oracle, rep as u64)
        });
        let report = summarize(*arm, runs, &oracle, start.elapsed())?;
        log::info!(
            "{}: {arm}: {} replications ({} degenerate) in {:.2?}",
            config.id,
            config.runs,
            report.degenerate,
            report.runtime
        );
        arms.push(report);
    }
    Ok(MseReport {
        experiment: config.id.clone(),
        observations: ys,
        oracle,
        arms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::catalog_entry;

    fn small(id: &str) -> ExperimentConfig {
        ExperimentConfig {
            particles: 200,
            runs: 6,
            ..catalog_entry(id).unwrap()
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let c = small("lingauss-basic");
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.arms.len(), 3);
        for (x, y) in a.arms.iter().zip(&b.arms) {
            assert_eq!(x.estimates, y.estimates);
            assert_eq!(x.mse.len(), 11);
        }
    }

    #[test]
    fn every_catalog_entry_runs() {
        for id in crate::experiment::EXPERIMENT_IDS {
            let c = ExperimentConfig {
                runs: 2,
                particles: if id == "sv-pound" { 300 } else { 500 },
                ..catalog_entry(id).unwrap()
            };
            let r = run_experiment(&c).unwrap();
            assert!(r.arms.iter().all(|a| a.mse.iter().all(|m| m.is_finite())), "{id}");
        }
    }

    #[test]
    fn simulated_record_source() {
        let c = ExperimentConfig {
            record: RecordSource::Simulate {
                seed: 4,
                observations: 5,
            },
            ..small("lingauss-basic")
        };
        assert_eq!(load_observations(&c).unwrap().len(), 5);
    }

    #[test]
    fn paired_comparison_uses_common_replications() {
        let r = run_experiment(&small("outlier")).unwrap();
        let t = r.compare("ssapf:optimal-exact", "bootstrap", 5).unwrap();
        assert!(t.p_value.is_finite());
        assert!(r.compare("nope", "bootstrap", 5).is_err());
    }
}

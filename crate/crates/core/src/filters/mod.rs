//! Bootstrap, single-stage and two-stage auxiliary particle filters.
//!
//! Each step weights the current particles by `ω ψ`, selects ancestors,
//! propagates them through the proposal and attaches second-stage weights
//! `Φ`. The two-stage filter adds a concluding selection by `Φ`.
//!
//! Draw order within a step is fixed (all selections, then propagation in
//! selection order), so results depend only on the seed and stream even
//! when first-stage weights are computed in parallel.

mod apf;
mod config;

pub use apf::{
    filter_step, initialize, run_filter, run_with_pilot, ssapf_step, tsspf_step, FilterRun, FilterState, StepInput,
};
pub use config::{FilterConfig, FilterVariant, MIN_PILOT};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::{ProposalKind, Target, WeightStrategy};
    use crate::models::{kalman_filter, simulate, LinearGaussianAR1, NoisyArch};
    use crate::parallel::Execution;
    use crate::rng::{RngStream, Stage, StreamKey};
    use crate::sample::WeightedSample;

    fn record(model: &LinearGaussianAR1, len: usize) -> Vec<f64> {
        simulate(model, len, &mut RngStream::for_replication(77, 0, Stage::Simulate)).observations
    }

    #[test]
    fn bootstrap_is_uniform_prior_ssapf() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let ys = record(&model, 8);
        let t = Target::Projection;
        let a = run_filter(
            &FilterConfig::bootstrap(300),
            &model,
            &ys,
            &t,
            None,
            &mut RngStream::new(1, 2),
        )
        .unwrap();
        let cfg = FilterConfig::ssapf(300, WeightStrategy::Uniform, ProposalKind::Prior);
        let b = run_filter(&cfg, &model, &ys, &t, None, &mut RngStream::new(1, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn arch_ps_generic_reproduces_bootstrap() {
        let model = NoisyArch::new(9.0, 5.0, 1.0).unwrap();
        let ys = simulate(&model, 8, &mut RngStream::new(3, 3)).observations;
        let t = Target::Projection;
        let a = run_filter(
            &FilterConfig::bootstrap(300),
            &model,
            &ys,
            &t,
            None,
            &mut RngStream::new(5, 1),
        )
        .unwrap();
        let cfg = FilterConfig::ssapf(300, WeightStrategy::PsGeneric, ProposalKind::Prior);
        let b = run_filter(&cfg, &model, &ys, &t, None, &mut RngStream::new(5, 1)).unwrap();
        assert_eq!(a.final_state.sample.states(), b.final_state.sample.states());
        for (x, y) in a.estimates.iter().zip(&b.estimates) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_adapted_keeps_full_ess() {
        let model = LinearGaussianAR1::new(0.9, 1.0, 0.1).unwrap();
        let ys = record(&model, 10);
        let cfg = FilterConfig::ssapf(500, WeightStrategy::FullyAdapted, ProposalKind::Optimal);
        let run = run_filter(&cfg, &model, &ys, &Target::Projection, None, &mut RngStream::new(2, 2)).unwrap();
        for ess in &run.final_state.ess_history[1..] {
            assert!((ess / 500.0 - 1.0).abs() < 1e-6, "ess {ess}");
        }
    }

    #[test]
    fn two_stage_weights_are_reset() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let ys = record(&model, 4);
        let cfg = FilterConfig {
            first_stage_factor: 2,
            ..FilterConfig::tsspf(200, WeightStrategy::PsGeneric, ProposalKind::Prior)
        };
        let run = run_filter(&cfg, &model, &ys, &Target::Projection, None, &mut RngStream::new(2, 9)).unwrap();
        assert_eq!(run.final_state.sample.len(), 200);
        assert!(run.final_state.sample.log_weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn zero_weight_particle_is_never_selected() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let sample = WeightedSample::from_linear(vec![0.3, -7.0], vec![1.0, 0.0])
            .unwrap()
            .with_paths(vec![vec![], vec![]])
            .unwrap();
        let state = FilterState {
            step: 0,
            sample,
            log_likelihood_increments: vec![],
            ess_history: vec![],
        };
        let cfg = FilterConfig {
            store_paths: true,
            ..FilterConfig::bootstrap(2)
        };
        let t = Target::Projection;
        let next = ssapf_step(
            &cfg,
            &model,
            &state,
            &StepInput::new(0.2, &t),
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        for i in 0..2 {
            assert_eq!(next.sample.trajectory(i).unwrap()[0], 0.3);
        }
    }

    #[test]
    fn optimal_exact_requires_means() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let cfg = FilterConfig::ssapf(100, WeightStrategy::OptimalExact, ProposalKind::Prior);
        let r = run_filter(
            &cfg,
            &model,
            &[0.1, 0.2],
            &Target::Projection,
            None,
            &mut RngStream::new(0, 0),
        );
        assert!(r.is_err());
    }

    /// AR(1) state seen through uniform noise on `[-1, 1]`.
    #[derive(Debug)]
    struct BoxedNoise(LinearGaussianAR1);

    impl crate::models::StateSpaceModel for BoxedNoise {
        fn name(&self) -> &'static str {
            "boxed-noise"
        }
        fn sample_initial(&self, rng: &mut RngStream) -> f64 {
            self.0.sample_initial(rng)
        }
        fn initial_log_density(&self, x: f64) -> f64 {
            self.0.initial_log_density(x)
        }
        fn initial_moments(&self) -> (f64, f64) {
            self.0.initial_moments()
        }
        fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64 {
            self.0.sample_transition(x, rng)
        }
        fn transition_log_density(&self, x: f64, x_next: f64) -> f64 {
            self.0.transition_log_density(x, x_next)
        }
        fn transition_mean(&self, x: f64) -> f64 {
            self.0.transition_mean(x)
        }
        fn transition_std(&self, x: f64) -> f64 {
            self.0.transition_std(x)
        }
        fn observation_log_likelihood(&self, y: f64, x: f64) -> f64 {
            if (y - x).abs() <= 1.0 {
                -std::f64::consts::LN_2
            } else {
                f64::NEG_INFINITY
            }
        }
        fn sample_observation(&self, x: f64, rng: &mut RngStream) -> f64 {
            use rand::Rng;
            x + rng.random_range(-1.0..1.0)
        }
        fn observation_log_likelihood_derivatives(&self, _y: f64, _x: f64) -> Option<(f64, f64)> {
            None
        }
        fn likelihood_location(&self, y: f64) -> Option<(f64, f64)> {
            Some((y, 1.0))
        }
        fn marginal_std(&self) -> Option<f64> {
            self.0.marginal_std()
        }
    }

    #[test]
    fn degenerate_replication_reports_step() {
        let model = BoxedNoise(LinearGaussianAR1::new(0.5, 0.1, 1.0).unwrap());
        let r = run_filter(
            &FilterConfig::bootstrap(50),
            &model,
            &[0.0, 0.0, 60.0],
            &Target::Projection,
            None,
            &mut RngStream::new(0, 0),
        );
        assert_eq!(r.unwrap_err(), crate::Error::ReplicationDegenerate { step: 2 });
    }

    #[test]
    fn particle_parallelism_is_bit_identical() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let ys = record(&model, 6);
        let means: Vec<f64> = kalman_filter(&model, &ys).iter().map(|g| g.mean).collect();
        let seq = FilterConfig::ssapf(400, WeightStrategy::OptimalExact, ProposalKind::Prior);
        let par = FilterConfig {
            particle_execution: Execution::Parallel,
            ..seq.clone()
        };
        let t = Target::Projection;
        let a = run_filter(&seq, &model, &ys, &t, Some(&means), &mut RngStream::new(8, 8)).unwrap();
        let b = run_filter(&par, &model, &ys, &t, Some(&means), &mut RngStream::new(8, 8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pilot_run_tracks_kalman() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap();
        let ys = record(&model, 10);
        let exact = kalman_filter(&model, &ys);
        let cfg = FilterConfig {
            pilot: 500,
            ..FilterConfig::ssapf(2000, WeightStrategy::OptimalPilot, ProposalKind::Prior)
        };
        let key = StreamKey::new(4, 0);
        let run = run_with_pilot(
            &cfg,
            &model,
            &ys,
            &Target::Projection,
            &mut key.stream(Stage::Filter),
            &mut key.stream(Stage::Pilot),
        )
        .unwrap();
        assert!(run.pilot_fallbacks.is_empty());
        for (e, k) in run.estimates.iter().zip(&exact) {
            assert!((e - k.mean).abs() < 0.03);
        }
    }
}

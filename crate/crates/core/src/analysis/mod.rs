//! Asymptotic-variance evaluation, stratified importance sampling and the
//! statistical tests used to check filters against those variances.

pub mod stats;
mod stratified;
mod variance;

pub use stratified::{
    allocation_from_alphas, allocation_objective, optimal_allocation, plug_in_variance, stratified_sample, Gaussian,
    MixtureSpec,
};
pub use variance::{
    arm_label, compare_strategies, variance_profile, variance_recursion_step, write_variance_csv, OptimalityViolation,
    StrategyComparison, VarianceOptions, VarianceProfile, VarianceRecursionState, VarianceRow, VarianceTerms,
    OPTIMALITY_SLACK,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::{ProposalKind, Target, WeightStrategy};
    use crate::models::{kalman_filter, normal_log_pdf, GridSpec, LinearGaussianAR1, StateSpaceModel};
    use crate::quadrature::GaussHermite;
    use proptest::prelude::*;

    const RECORD: [f64; 11] = [0.15, 0.3, 0.12, -0.05, 0.2, 0.41, 0.33, 0.1, -0.12, 0.02, 0.18];
    const OUTLIER: [f64; 6] = [-0.652, -0.345, -0.676, 1.142, 0.721, 20.0];

    fn lg() -> LinearGaussianAR1 {
        LinearGaussianAR1::new(0.9, 0.1, 0.1).unwrap()
    }

    fn options(model: &dyn StateSpaceModel, nodes: usize) -> VarianceOptions {
        VarianceOptions {
            grid: GridSpec::for_model(model, nodes),
            ..VarianceOptions::for_model(model)
        }
    }

    fn state<'m>(
        model: &'m dyn StateSpaceModel,
        ys: &[f64],
        s: WeightStrategy,
        p: ProposalKind,
        nodes: usize,
    ) -> VarianceRecursionState<'m> {
        VarianceRecursionState::new(model, ys, s, p, Target::Projection, &options(model, nodes)).unwrap()
    }

    fn npdf(x: f64, m: f64, v: f64) -> f64 {
        normal_log_pdf(x, m, v.sqrt()).exp()
    }

    /// `σ̃²_0` and `σ̃²_1` of the bootstrap filter from Gaussian integrals:
    /// inner integrals in closed form, the outer one by Gauss–Hermite over `π_0`.
    fn bootstrap_oracle(y0: f64, y1: f64) -> (f64, f64) {
        let (phi, sw, sv) = (0.9f64, 0.1f64, 0.1f64);
        let (s2w, s2v) = (sw * sw, sv * sv);
        let p0 = s2w / (1.0 - phi * phi);
        let m0 = p0 * y0 / (p0 + s2v);
        let v0 = p0 * s2v / (p0 + s2v);
        let z0 = npdf(y0, 0.0, p0 + s2v);
        let g0 = |x: f64| npdf(y0, x, s2v);
        let gh = GaussHermite::new(100);
        // σ̃²_0(h) = E_π0[g0 (h − π0 h)²] / ν g0
        let sigma0 = |h: &dyn Fn(f64) -> f64| {
            let c0 = gh.normal_expectation(m0, v0.sqrt(), h);
            gh.normal_expectation(m0, v0.sqrt(), |x| g0(x) * (h(x) - c0).powi(2)) / z0
        };
        let base = sigma0(&|x| x);

        let a = phi * m0;
        let s2 = phi * phi * v0 + s2w;
        let m1 = a + s2 / (s2 + s2v) * (y1 - a);
        let c = npdf(y1, a, s2 + s2v);
        let v = 1.0 / (1.0 / s2 + 2.0 / s2v);
        let mu = v * (a / s2 + 2.0 * y1 / s2v);
        let s = npdf(y1, a, s2 + s2v / 2.0) / (2.0 * std::f64::consts::PI.sqrt() * sv) * (v + (mu - m1).powi(2));
        let h = |x: f64| npdf(y1, phi * x, s2w + s2v) * ((phi * x * s2v + y1 * s2w) / (s2w + s2v) - m1) / c;
        (base, sigma0(&h) + s / (c * c))
    }

    #[test]
    fn bootstrap_matches_gaussian_oracle() {
        let model = lg();
        let (s0, s1) = bootstrap_oracle(RECORD[0], RECORD[1]);
        let st = state(&model, &RECORD[..2], WeightStrategy::Uniform, ProposalKind::Prior, 2048);
        assert!(
            (st.sigma2_ssapf() / s0 - 1.0).abs() < 1e-7,
            "{} vs {s0}",
            st.sigma2_ssapf()
        );
        let st = variance_recursion_step(st).unwrap();
        assert!(
            (st.sigma2_ssapf() / s1 - 1.0).abs() < 1e-7,
            "{} vs {s1}",
            st.sigma2_ssapf()
        );
        assert!(st.is_complete());
    }

    #[test]
    fn two_stage_gap_is_filter_variance() {
        let model = lg();
        let exact = kalman_filter(&model, &RECORD);
        let mut st = state(&model, &RECORD, WeightStrategy::OptimalExact, ProposalKind::Prior, 1024);
        loop {
            let k = st.step();
            let t = st.terms();
            let gap = t.tsspf_one_step(1.0) - t.ssapf;
            assert!((gap - exact[k].var).abs() < 1e-6, "k={k}: {gap} vs {}", exact[k].var);
            assert!(st.sigma2_tsspf() >= st.sigma2_ssapf() + t.last_variance);
            if st.is_complete() {
                break;
            }
            st = variance_recursion_step(st).unwrap();
        }
    }

    #[test]
    fn gap_identity_on_explicit_sweep() {
        // σ² − σ̃² = Σ_j π_j (h_j − π_j h_j)², checked for a two-step record
        // where h_0 = U(·, Λf)/c is available through `evaluate` at step 0.
        let model = lg();
        let st0 = state(
            &model,
            &RECORD[..2],
            WeightStrategy::PsGeneric,
            ProposalKind::Prior,
            1024,
        );
        let st1 = variance_recursion_step(st0.clone()).unwrap();
        let t1 = st1.terms();
        let m1 = st1.filter().mean();
        let (phi, sw2, sv2) = (0.9, 0.01, 0.01);
        let y1 = RECORD[1];
        let grid0 = st0.filter();
        let c: f64 = grid0.expectation(|x| npdf(y1, phi * x, sw2 + sv2));
        let h0 = |x: f64| npdf(y1, phi * x, sw2 + sv2) * ((phi * x * sv2 + y1 * sw2) / (sw2 + sv2) - m1) / c;
        let var0 = {
            let m = grid0.expectation(h0);
            grid0.expectation(|x| (h0(x) - m).powi(2))
        };
        let gap = st1.sigma2_tsspf() - st1.sigma2_ssapf();
        assert!(
            (gap - (t1.last_variance + var0)).abs() < 1e-8 * gap,
            "{gap} vs {}",
            t1.last_variance + var0
        );
    }

    #[test]
    fn optimal_weights_attain_the_single_step_bound() {
        let model = lg();
        let mut st = state(
            &model,
            &RECORD[..6],
            WeightStrategy::OptimalExact,
            ProposalKind::Prior,
            1024,
        );
        while !st.is_complete() {
            st = variance_recursion_step(st).unwrap();
            let tau = st.optimal_log_weights().unwrap();
            let v_opt = st.first_stage_functional(&tau).unwrap();
            assert!((v_opt - st.terms().last_second_stage).abs() < 1e-10 * v_opt);
            // Uniform and shifted weights never do better.
            let flat = vec![0.0; tau.len()];
            assert!(st.first_stage_functional(&flat).unwrap() >= v_opt - 1e-12);
            let shifted: Vec<f64> = tau.iter().map(|t| t + 5.0).collect();
            assert!((st.first_stage_functional(&shifted).unwrap() - v_opt).abs() < 1e-10 * v_opt);
        }
    }

    #[test]
    fn refinement_converges() {
        let model = lg();
        let p = variance_profile(
            &model,
            &RECORD,
            WeightStrategy::FullyAdapted,
            ProposalKind::Optimal,
            &Target::Projection,
            &options(&model, 512),
        )
        .unwrap();
        assert_eq!(p.ssapf.len(), RECORD.len());
        assert!(p.ssapf.iter().zip(&p.tsspf).all(|(a, b)| *a > 0.0 && b > a));
    }

    #[test]
    fn coarse_grid_fails_refinement() {
        let model = lg();
        let opts = VarianceOptions {
            tolerance: 1e-12,
            ..options(&model, 64)
        };
        let r = variance_profile(
            &model,
            &RECORD,
            WeightStrategy::Uniform,
            ProposalKind::Prior,
            &Target::Projection,
            &opts,
        );
        assert!(matches!(r, Err(crate::Error::QuadratureNotConverged(_))));
    }

    #[test]
    fn optimal_beats_uniform_on_outlier() {
        let model = LinearGaussianAR1::new(0.9, 0.1, 1.0).unwrap();
        let arms = [
            (WeightStrategy::Uniform, ProposalKind::Prior),
            (WeightStrategy::OptimalExact, ProposalKind::Prior),
        ];
        let cmp = compare_strategies(&model, &OUTLIER, &arms, &Target::Projection, &options(&model, 1024)).unwrap();
        let (u, o) = (&cmp.profiles[0], &cmp.profiles[1]);
        assert!(o.ssapf[5] < u.ssapf[5], "{} vs {}", o.ssapf[5], u.ssapf[5]);
        assert_eq!(cmp.rows.len(), 2 * OUTLIER.len());
        assert!(cmp.violations.is_empty(), "{:?}", cmp.violations);
    }

    #[test]
    fn single_strategy_table() {
        let model = lg();
        let arms = [(WeightStrategy::PsGeneric, ProposalKind::Prior)];
        let cmp = compare_strategies(&model, &RECORD[..3], &arms, &Target::Projection, &options(&model, 256)).unwrap();
        assert_eq!(cmp.rows.len(), 3);
        assert!(cmp.rows.iter().all(|r| r.strategy == "ps-generic"));
        let mut csv = Vec::new();
        write_variance_csv(&cmp.rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("k,strategy,sigma2_ssapf,sigma2_tsspf\n0,ps-generic,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn fully_adapted_close_to_optimal_when_informative() {
        let model = LinearGaussianAR1::new(0.9, 1.0, 0.1).unwrap();
        let arms = [
            (WeightStrategy::FullyAdapted, ProposalKind::Optimal),
            (WeightStrategy::OptimalExact, ProposalKind::Optimal),
        ];
        let cmp = compare_strategies(&model, &RECORD, &arms, &Target::Projection, &options(&model, 1024)).unwrap();
        for k in 0..RECORD.len() {
            let ratio = cmp.profiles[0].ssapf[k] / cmp.profiles[1].ssapf[k];
            assert!(ratio < 1.05, "k={k}: ratio {ratio}");
        }
    }

    #[test]
    fn invalid_beta() {
        let model = lg();
        let opts = VarianceOptions {
            beta: 0.0,
            ..options(&model, 64)
        };
        let r = VarianceRecursionState::new(
            &model,
            &RECORD,
            WeightStrategy::Uniform,
            ProposalKind::Prior,
            Target::Projection,
            &opts,
        );
        assert!(r.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        // Log-normal perturbations of τ* never lower the single-step variance.
        #[test]
        fn optimality_witness(seed in any::<u64>(), eps in prop_oneof![Just(0.1), Just(0.5)], k in 1usize..=5) {
            use rand::Rng;
            let model = lg();
            let mut st = state(&model, &RECORD[..=k], WeightStrategy::OptimalExact, ProposalKind::Prior, 256);
            while !st.is_complete() {
                st = variance_recursion_step(st).unwrap();
            }
            let tau = st.optimal_log_weights().unwrap();
            let v_opt = st.first_stage_functional(&tau).unwrap();
            let mut rng = crate::rng::RngStream::new(seed, 0);
            let psi: Vec<f64> = tau.iter().map(|t| t + eps * rng.random_range(-1.0..1.0)).collect();
            prop_assert!(st.first_stage_functional(&psi).unwrap() >= v_opt - 1e-9);
        }

        // Allocation optimality against random points of the simplex.
        #[test]
        fn allocation_is_minimal(w0 in 0.05f64..0.9, a in prop::array::uniform3(0.01f64..10.0), t in prop::array::uniform3(0.01f64..1.0)) {
            let w = [w0, (1.0 - w0) * 0.4, (1.0 - w0) * 0.6];
            let best = allocation_from_alphas(&w, &a).unwrap();
            let s: f64 = t.iter().sum();
            let other: Vec<f64> = t.iter().map(|x| x / s).collect();
            prop_assert!(allocation_objective(&w, &a, &best) <= allocation_objective(&w, &a, &other) + 1e-12);
        }
    }
}

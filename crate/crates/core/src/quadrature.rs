//! Gauss–Hermite quadrature against Gaussian measures.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights for `∫ e^{-t²} h(t) dt ≈ Σ w_i h(t_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    // ln(w_i / sqrt(pi)): weights of the standard normal expectation
    log_normal_weights: Vec<f64>,
}

impl GaussHermite {
    /// Rule with `n` nodes, computed by Newton iteration on the
    /// orthonormal Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        let log_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
        let log_normal_weights = weights.iter().map(|w| w.ln() - log_sqrt_pi).collect();
        Self {
            nodes,
            weights,
            log_normal_weights,
        }
    }

    /// Shared rule for `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussHermite::new(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Evaluation points of `E[h(X)]` for `X ~ N(mean, std²)`.
    pub fn normal_points(&self, mean: f64, std: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let scale = std::f64::consts::SQRT_2 * std;
        self.nodes
            .iter()
            .zip(&self.log_normal_weights)
            .map(move |(t, lw)| (mean + scale * t, *lw))
    }

    /// `E[h(X)]` for `X ~ N(mean, std²)`.
    pub fn normal_expectation<F: FnMut(f64) -> f64>(&self, mean: f64, std: f64, mut h: F) -> f64 {
        self.normal_points(mean, std).map(|(x, lw)| lw.exp() * h(x)).sum()
    }

    /// `ln E[exp(log_h(X))]` for `X ~ N(mean, std²)`, accumulated in log space.
    /// Returns `-inf` when every node contributes zero.
    pub fn log_normal_expectation<F: FnMut(f64) -> f64>(&self, mean: f64, std: f64, mut log_h: F) -> f64 {
        let terms: Vec<f64> = self.normal_points(mean, std).map(|(x, lw)| lw + log_h(x)).collect();
        log_sum_exp(&terms)
    }
}

/// `ln Σ exp(a_i)`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 16, 64, 128] {
            let gh = GaussHermite::new(n);
            let s: f64 = gh.weights().iter().sum();
            assert!((s - std::f64::consts::PI.sqrt()).abs() < 1e-12, "n={n}: {s}");
        }
    }

    #[test]
    fn small_rules_match_tables() {
        let gh = GaussHermite::new(2);
        assert!((gh.nodes()[0] - 0.5_f64.sqrt()).abs() < 1e-14);
        let gh = GaussHermite::new(3);
        let mut nodes = gh.nodes().to_vec();
        nodes.sort_by(f64::total_cmp);
        assert!((nodes[2] - 1.5_f64.sqrt()).abs() < 1e-14);
        assert!(nodes[1].abs() < 1e-14);
    }

    #[test]
    fn gaussian_moments_are_exact() {
        let gh = GaussHermite::new(64);
        let (m, s) = (1.3, 0.7);
        let mean = gh.normal_expectation(m, s, |x| x);
        let second = gh.normal_expectation(m, s, |x| (x - m).powi(2));
        let fourth = gh.normal_expectation(m, s, |x| (x - m).powi(4));
        assert!((mean - m).abs() < 1e-12);
        assert!((second - s * s).abs() < 1e-12);
        assert!((fourth - 3.0 * s.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn log_expectation_matches_linear() {
        let gh = GaussHermite::new(32);
        let lin = gh.normal_expectation(0.2, 1.1, |x| (-(x * x)).exp());
        let log = gh.log_normal_expectation(0.2, 1.1, |x| -(x * x));
        assert!((lin.ln() - log).abs() < 1e-12);
        assert_eq!(
            gh.log_normal_expectation(0.0, 1.0, |_| f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }
}

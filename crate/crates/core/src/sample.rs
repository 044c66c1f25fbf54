//! Weighted particle samples and self-normalized estimation.

use crate::error::{Error, Result};

/// Particles with unnormalized importance weights.
///
/// Weights are kept unnormalized; normalization happens on read. When
/// `log_scale` is set the stored values are log-weights and `-inf` marks a
/// zero weight. Optional `paths` hold the ancestral trajectory of each
/// particle, excluding the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    states: Vec<f64>,
    weights: Vec<f64>,
    log_scale: bool,
    paths: Option<Vec<Vec<f64>>>,
}

impl WeightedSample {
    /// Sample with linear-scale weights.
    pub fn from_linear(states: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_lengths(&states, &weights)?;
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weight {w} is not a finite non-negative number"
            )));
        }
        Ok(Self {
            states,
            weights,
            log_scale: false,
            paths: None,
        })
    }

    /// Sample with log-scale weights.
    pub fn from_log(states: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        check_lengths(&states, &log_weights)?;
        if let Some(w) = log_weights.iter().find(|w| w.is_nan() || **w == f64::INFINITY) {
            return Err(Error::InvalidWeights(format!("log-weight {w} is not finite or -inf")));
        }
        Ok(Self {
            states,
            weights: log_weights,
            log_scale: true,
            paths: None,
        })
    }

    /// Equally weighted sample (log-scale zeros).
    pub fn uniform(states: Vec<f64>) -> Result<Self> {
        let n = states.len();
        Self::from_log(states, vec![0.0; n])
    }

    pub fn with_paths(mut self, paths: Vec<Vec<f64>>) -> Result<Self> {
        if paths.len() != self.states.len() {
            return Err(Error::InvalidWeights(format!(
                "{} paths for {} particles",
                paths.len(),
                self.states.len()
            )));
        }
        self.paths = Some(paths);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Raw stored weights, in whichever scale the sample uses.
    pub fn raw_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_log_scale(&self) -> bool {
        self.log_scale
    }

    pub fn paths(&self) -> Option<&[Vec<f64>]> {
        self.paths.as_deref()
    }

    /// Log-weights regardless of the storage scale.
    pub fn log_weights(&self) -> Vec<f64> {
        if self.log_scale {
            self.weights.clone()
        } else {
            self.weights.iter().map(|w| w.ln()).collect()
        }
    }

    /// Full trajectory of particle `i` (ancestors followed by the current state).
    pub fn trajectory(&self, i: usize) -> Option<Vec<f64>> {
        self.paths.as_ref().map(|p| {
            let mut t = p[i].clone();
            t.push(self.states[i]);
            t
        })
    }
}

fn check_lengths(states: &[f64], weights: &[f64]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::InvalidWeights("empty sample".into()));
    }
    if states.len() != weights.len() {
        return Err(Error::InvalidWeights(format!(
            "{} states but {} weights",
            states.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Normalize log-weights to probabilities, subtracting the maximum first.
pub fn normalize_log(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() {
        return Err(Error::InvalidWeights("NaN log-weight".into()));
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::AllWeightsZero);
    }
    let mut probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Normalize non-negative linear weights to probabilities.
pub fn normalize_linear(weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() {
        return Err(Error::InvalidWeights("NaN weight".into()));
    }
    if total == 0.0 {
        return Err(Error::AllWeightsZero);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Normalized weights of a sample, in particle order.
pub fn normalize(sample: &WeightedSample) -> Result<Vec<f64>> {
    if sample.log_scale {
        normalize_log(&sample.weights)
    } else {
        normalize_linear(&sample.weights)
    }
}

/// Self-normalized estimate `sum_i wbar_i f(x_i)`.
pub fn estimate<F: Fn(f64) -> f64>(sample: &WeightedSample, f: F) -> Result<f64> {
    let probs = normalize(sample)?;
    Ok(probs
        .iter()
        .zip(&sample.states)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, x)| p * f(*x))
        .sum())
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(sample: &WeightedSample) -> Result<f64> {
    let probs = normalize(sample)?;
    Ok(ess_of_probabilities(&probs))
}

pub(crate) fn ess_of_probabilities(probs: &[f64]) -> f64 {
    1.0 / probs.iter().map(|p| p * p).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lin(w: &[f64]) -> WeightedSample {
        WeightedSample::from_linear(vec![0.0; w.len()], w.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&lin(&[2.0, 2.0])).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&lin(&[1.0, 0.0, 0.0])).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(normalize(&lin(&[1.0, 3.0])).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn all_zero_is_an_error() {
        assert_eq!(normalize(&lin(&[0.0, 0.0])), Err(Error::AllWeightsZero));
        let s = WeightedSample::from_log(vec![1.0, 2.0], vec![f64::NEG_INFINITY; 2]).unwrap();
        assert_eq!(normalize(&s), Err(Error::AllWeightsZero));
        assert_eq!(estimate(&s, |x| x), Err(Error::AllWeightsZero));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(WeightedSample::from_linear(vec![], vec![]).is_err());
        assert!(WeightedSample::from_linear(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(WeightedSample::from_linear(vec![1.0], vec![-1.0]).is_err());
        assert!(WeightedSample::from_linear(vec![1.0], vec![f64::NAN]).is_err());
        assert!(WeightedSample::from_log(vec![1.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn estimate_examples() {
        let s = WeightedSample::uniform(vec![1.0, 2.0, 3.0]).unwrap();
        assert!((estimate(&s, |x| x).unwrap() - 2.0).abs() < 1e-15);
        let s = WeightedSample::from_linear(vec![0.0, 4.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(estimate(&s, |x| x).unwrap(), 3.0);
        let a = 1.7_f64;
        let s = WeightedSample::from_linear(vec![a, a], vec![1.0, 1.0]).unwrap();
        assert_eq!(estimate(&s, |x| x.sin()).unwrap(), a.sin());
    }

    #[test]
    fn ess_examples() {
        let s = WeightedSample::uniform(vec![0.0; 7]).unwrap();
        assert!((ess(&s).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(ess(&lin(&[0.0, 5.0, 0.0])).unwrap(), 1.0);
        assert!((ess(&lin(&[1.0, 3.0])).unwrap() - 1.6).abs() < 1e-15);
    }

    #[test]
    fn trajectory_appends_current_state() {
        let s = WeightedSample::uniform(vec![3.0, 4.0])
            .unwrap()
            .with_paths(vec![vec![1.0, 2.0], vec![0.0, 0.5]])
            .unwrap();
        assert_eq!(s.trajectory(1), Some(vec![0.0, 0.5, 4.0]));
    }

    proptest! {
        #[test]
        fn estimate_invariant_under_rescaling(
            w in prop::collection::vec(0.01f64..10.0, 1..40),
            c in 1e-3f64..1e3,
        ) {
            let states: Vec<f64> = (0..w.len()).map(|i| i as f64 * 0.37 - 2.0).collect();
            let a = WeightedSample::from_linear(states.clone(), w.clone()).unwrap();
            let b = WeightedSample::from_linear(states, w.iter().map(|x| x * c).collect()).unwrap();
            let ea = estimate(&a, |x| x * x).unwrap();
            let eb = estimate(&b, |x| x * x).unwrap();
            prop_assert!((ea - eb).abs() <= 1e-13 * (1.0 + ea.abs()));
        }

        #[test]
        fn log_and_linear_paths_agree(lw in prop::collection::vec(-29.0f64..0.0, 1..50)) {
            let lin: Vec<f64> = lw.iter().map(|x| x.exp()).collect();
            let a = normalize_log(&lw).unwrap();
            let b = normalize_linear(&lin).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }

        #[test]
        fn normalized_weights_sum_to_one(lw in prop::collection::vec(-700.0f64..700.0, 1..60)) {
            let p = normalize_log(&lw).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            let e = ess_of_probabilities(&p);
            prop_assert!(e >= 1.0 - 1e-12 && e <= lw.len() as f64 + 1e-9);
        }
    }
}

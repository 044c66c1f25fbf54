//! Small hypothesis tests used to judge replication experiments.

use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{Error, Result};

/// 1% critical value of the Anderson–Darling statistic when the null law
/// is fully specified.
pub const AD_CRITICAL_1PCT: f64 = 3.857;

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn need(n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::InvalidConfig(format!(
            "need at least {min} observations, got {n}"
        )));
    }
    Ok(())
}

/// Anderson–Darling statistic `A²` of `z` against the standard normal law.
pub fn anderson_darling_normal(z: &[f64]) -> Result<f64> {
    need(z.len(), 2)?;
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let phi = Normal::standard();
    // ln Φ(z) and ln(1 − Φ(z)) = ln Φ(−z), accurate in both tails.
    let log_cdf = |x: f64| phi.cdf(x).ln();
    let sum: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (log_cdf(s[i]) + log_cdf(-s[n - 1 - i])))
        .sum();
    Ok(-(n as f64) - sum / n as f64)
}

/// One-sided test outcome; `p_value` is the probability of a statistic at
/// least as extreme in the direction of the alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub estimate: f64,
    pub stderr: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Least-squares slope of `ys` against `0, 1, …`, tested against the
/// alternative of a positive slope.
pub fn trend_test(ys: &[f64]) -> Result<TestOutcome> {
    need(ys.len(), 3)?;
    let n = ys.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = (0..ys.len()).map(|i| (i as f64 - xbar).powi(2)).sum();
    let sxy: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (y - intercept - slope * i as f64).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    let t = slope / stderr;
    let dist = StudentsT::new(0.0, 1.0, n - 2.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(TestOutcome {
        estimate: slope,
        stderr,
        statistic: t,
        p_value: dist.sf(t),
    })
}

/// Paired t-test of the alternative `mean(a − b) < 0`.
pub fn paired_less(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig(format!(
            "paired samples differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    need(a.len(), 2)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, var) = mean_var(&d);
    let stderr = (var / d.len() as f64).sqrt();
    let t = mean / stderr;
    let dist = StudentsT::new(0.0, 1.0, (d.len() - 1) as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(TestOutcome {
        estimate: mean,
        stderr,
        statistic: t,
        p_value: dist.cdf(t),
    })
}

/// F-test of the alternative `Var(a) > Var(b)` for independent samples.
/// The estimate is the variance ratio.
pub fn variance_greater(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    need(a.len(), 2)?;
    need(b.len(), 2)?;
    let (_, va) = mean_var(a);
    let (_, vb) = mean_var(b);
    let f = va / vb;
    let dist = FisherSnedecor::new((a.len() - 1) as f64, (b.len() - 1) as f64)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(TestOutcome {
        estimate: f,
        stderr: f64::NAN,
        statistic: f,
        p_value: dist.sf(f),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.stats.

    #[test]
    fn anderson_darling_reference() {
        let z = [0.3, -1.2, 0.8, 2.1, -0.4, 0.05, -0.9, 1.4, -2.2, 0.6];
        let a2 = anderson_darling_normal(&z).unwrap();
        assert!((a2 - 0.33848321938252823).abs() < 1e-9, "{a2}");
    }

    #[test]
    fn anderson_darling_rejects_shifted_sample() {
        let z: Vec<f64> = (0..200).map(|i| 1.0 + (i as f64 / 200.0 - 0.5)).collect();
        assert!(anderson_darling_normal(&z).unwrap() > AD_CRITICAL_1PCT);
    }

    #[test]
    fn trend_reference() {
        let y = [1.0, 1.3, 0.9, 1.6, 1.8, 1.5, 2.2, 2.0, 2.6, 2.4];
        let t = trend_test(&y).unwrap();
        assert!((t.estimate - 0.17393939393939398).abs() < 1e-12);
        assert!((t.stderr - 0.027107242042786386).abs() < 1e-12);
        assert!((t.p_value - 0.0001027222385893321).abs() < 1e-9);
    }

    #[test]
    fn paired_reference() {
        let a = [1.0, 0.8, 1.2, 0.7, 0.9, 1.1, 0.6, 0.95];
        let b = [1.1, 1.0, 1.1, 0.9, 1.2, 1.3, 0.9, 1.0];
        let t = paired_less(&a, &b).unwrap();
        assert!((t.statistic + 3.278625588472365).abs() < 1e-10);
        assert!((t.p_value - 0.006756317054766943).abs() < 1e-9);
    }

    #[test]
    fn f_reference() {
        let a = [2.1, -1.3, 0.4, 3.3, -2.8, 1.9, 0.2, -0.7];
        let b = [0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.0];
        let t = variance_greater(&a, &b).unwrap();
        assert!((t.estimate - 43.18878865979381).abs() < 1e-10);
        assert!((t.p_value - 0.00010256114974735611).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        assert!(trend_test(&[1.0, 2.0]).is_err());
        assert!(paired_less(&[1.0], &[2.0]).is_err());
    }
}

use super::LinearGaussianAR1;
use crate::error::{Error, Result};

/// Mean and variance of a Gaussian filtering distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub mean: f64,
    pub var: f64,
}

/// Exact filtering moments of `X_k | y_{0:k}` for the linear Gaussian model.
pub fn kalman_filter(model: &LinearGaussianAR1, observations: &[f64]) -> Vec<GaussianMoments> {
    let (m0, p0) = model.initial_mean_var();
    kalman_recursion(model.phi, model.sigma_w, model.sigma_v, m0, p0, observations)
        .expect("model parameters are validated at construction")
}

/// Scalar Kalman recursion with prior `X_0 ~ N(m0, p0)`.
///
/// Unlike the model constructor this accepts `sigma_w = 0` (a deterministic
/// state) and `p0 = 0`. Missing (`NaN`) observations skip the update.
pub fn kalman_recursion(
    phi: f64,
    sigma_w: f64,
    sigma_v: f64,
    m0: f64,
    p0: f64,
    observations: &[f64],
) -> Result<Vec<GaussianMoments>> {
    if !(sigma_w >= 0.0) || !(sigma_v > 0.0) || !(p0 >= 0.0) {
        return Err(Error::InvalidModel(format!(
            "Kalman recursion needs sigma_w >= 0, sigma_v > 0, p0 >= 0; got ({sigma_w}, {sigma_v}, {p0})"
        )));
    }
    let r = sigma_v * sigma_v;
    let mut out = Vec::with_capacity(observations.len());
    let (mut m, mut p) = (m0, p0);
    for (k, &y) in observations.iter().enumerate() {
        if k > 0 {
            m *= phi;
            p = phi * phi * p + sigma_w * sigma_w;
        }
        if !y.is_nan() {
            let gain = p / (p + r);
            m += gain * (y - m);
            p *= 1.0 - gain;
        }
        out.push(GaussianMoments { mean: m, var: p });
    }
    Ok(out)
}

//! Selection schemes returning ancestor indices.
//!
//! All schemes are unbiased: the expected number of copies of particle `i`
//! is `count * wbar_i`. Only multinomial selection is covered by the
//! asymptotic-variance evaluators in [`crate::analysis`]; systematic and
//! residual selection are offered as experimental alternatives.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::{normalize, WeightedSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    #[default]
    Multinomial,
    Systematic,
    Residual,
}

impl fmt::Display for ResamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResamplingScheme::Multinomial => "multinomial",
            ResamplingScheme::Systematic => "systematic",
            ResamplingScheme::Residual => "residual",
        })
    }
}

impl FromStr for ResamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "systematic" => Ok(Self::Systematic),
            "residual" => Ok(Self::Residual),
            other => Err(Error::Parse(format!("unknown resampling scheme `{other}`"))),
        }
    }
}

impl ResamplingScheme {
    /// Draw `count` ancestor indices from normalized probabilities.
    pub fn select(self, probs: &[f64], count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        if count == 0 {
            return Err(Error::InvalidConfig("resampling count must be at least 1".into()));
        }
        Ok(match self {
            ResamplingScheme::Multinomial => multinomial_indices(probs, count, rng),
            ResamplingScheme::Systematic => systematic_indices(probs, count, rng),
            ResamplingScheme::Residual => residual_indices(probs, count, rng),
        })
    }

    pub fn resample(self, sample: &WeightedSample, count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        let probs = normalize(sample)?;
        self.select(&probs, count, rng)
    }
}

pub fn resample_multinomial(sample: &WeightedSample, count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    ResamplingScheme::Multinomial.resample(sample, count, rng)
}

pub fn resample_systematic(sample: &WeightedSample, count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    ResamplingScheme::Systematic.resample(sample, count, rng)
}

pub fn resample_residual(sample: &WeightedSample, count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    ResamplingScheme::Residual.resample(sample, count, rng)
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// First index whose cumulative mass exceeds `u`, skipping zero-mass entries.
fn locate(cdf: &[f64], probs: &[f64], u: f64) -> usize {
    let mut i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    // rounding can leave u just above the last cumulative value
    while probs[i] == 0.0 && i > 0 {
        i -= 1;
    }
    i
}

/// i.i.d. draws, in draw order.
pub(crate) fn multinomial_indices(probs: &[f64], count: usize, rng: &mut RngStream) -> Vec<usize> {
    let cdf = cumulative(probs);
    let total = *cdf.last().expect("non-empty probabilities");
    (0..count)
        .map(|_| locate(&cdf, probs, rng.random::<f64>() * total))
        .collect()
}

fn systematic_indices(probs: &[f64], count: usize, rng: &mut RngStream) -> Vec<usize> {
    let cdf = cumulative(probs);
    let total = *cdf.last().expect("non-empty probabilities");
    let step = total / count as f64;
    let offset = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for i in 0..count {
        let u = offset + step * i as f64;
        while j < cdf.len() - 1 && cdf[j] <= u {
            j += 1;
        }
        let mut k = j;
        while probs[k] == 0.0 && k > 0 {
            k -= 1;
        }
        out.push(k);
    }
    out
}

fn residual_indices(probs: &[f64], count: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut residual = Vec::with_capacity(probs.len());
    for (i, p) in probs.iter().enumerate() {
        let expected = p * count as f64;
        let copies = expected.floor() as usize;
        out.extend(std::iter::repeat_n(i, copies));
        residual.push(expected - copies as f64);
    }
    // floors can overshoot by one when rounding pushes a product up to an integer
    out.truncate(count);
    let remaining = count - out.len();
    if remaining > 0 {
        let total: f64 = residual.iter().sum();
        if total > 0.0 {
            out.extend(multinomial_indices(&residual, remaining, rng));
        } else {
            out.extend(multinomial_indices(probs, remaining, rng));
        }
    }
    out
}

/// Number of copies of each index.
pub fn offspring_counts(indices: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &i in indices {
        counts[i] += 1;
    }
    counts
}

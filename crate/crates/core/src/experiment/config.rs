//! Experiment configuration: built-in catalog entries, flat `key = value`
//! files and command-line overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::adaptation::{ProposalKind, WeightStrategy};
use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterVariant, MIN_PILOT};
use crate::models::{
    InitialLaw, LinearGaussianAR1, NoisyArch, StateSpaceModel, StochasticVolatility, TruncatedLinearGaussian,
};

/// A model family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    LinearGaussian {
        phi: f64,
        sigma: f64,
        sigma_v: f64,
    },
    Arch {
        beta0: f64,
        beta1: f64,
        sigma_v: f64,
    },
    /// With `x0`, records are simulated from `X_0 = x0` and filters start
    /// from `N(x0, σ²)`; otherwise from the stationary law.
    StochasticVolatility {
        phi: f64,
        sigma: f64,
        beta: f64,
        x0: Option<f64>,
    },
    TruncatedGaussian {
        phi: f64,
        sigma: f64,
        sigma_v: f64,
        lower: f64,
        upper: f64,
    },
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::LinearGaussian { .. } => "linear-gaussian",
            ModelSpec::Arch { .. } => "arch",
            ModelSpec::StochasticVolatility { .. } => "sv",
            ModelSpec::TruncatedGaussian { .. } => "truncated-gaussian",
        }
    }

    pub fn build(&self) -> Result<Box<dyn StateSpaceModel>> {
        Ok(match *self {
            ModelSpec::LinearGaussian { phi, sigma, sigma_v } => Box::new(LinearGaussianAR1::new(phi, sigma, sigma_v)?),
            ModelSpec::Arch { beta0, beta1, sigma_v } => Box::new(NoisyArch::new(beta0, beta1, sigma_v)?),
            ModelSpec::StochasticVolatility { phi, sigma, beta, x0 } => {
                let initial = match x0 {
                    Some(mean) => InitialLaw::Normal { mean, std: sigma },
                    None => InitialLaw::Stationary,
                };
                Box::new(StochasticVolatility::with_initial(phi, sigma, beta, initial)?)
            }
            ModelSpec::TruncatedGaussian {
                phi,
                sigma,
                sigma_v,
                lower,
                upper,
            } => Box::new(TruncatedLinearGaussian::new(phi, sigma, sigma_v, lower, upper)?),
        })
    }

    /// Linear-Gaussian parameters, when the Kalman filter applies.
    pub fn linear_gaussian(&self) -> Option<LinearGaussianAR1> {
        match *self {
            ModelSpec::LinearGaussian { phi, sigma, sigma_v } => LinearGaussianAR1::new(phi, sigma, sigma_v).ok(),
            _ => None,
        }
    }

    /// Fixed initial state for simulated records, if any.
    pub fn simulation_start(&self) -> Option<f64> {
        match *self {
            ModelSpec::StochasticVolatility { x0, .. } => x0,
            _ => None,
        }
    }

    fn set(&mut self, key: &str, value: f64) -> Result<bool> {
        let slot = match (self, key) {
            (ModelSpec::LinearGaussian { phi, .. }, "phi")
            | (ModelSpec::StochasticVolatility { phi, .. }, "phi")
            | (ModelSpec::TruncatedGaussian { phi, .. }, "phi") => phi,
            (ModelSpec::LinearGaussian { sigma, .. }, "sigma")
            | (ModelSpec::StochasticVolatility { sigma, .. }, "sigma")
            | (ModelSpec::TruncatedGaussian { sigma, .. }, "sigma") => sigma,
            (ModelSpec::LinearGaussian { sigma_v, .. }, "sigma_v")
            | (ModelSpec::Arch { sigma_v, .. }, "sigma_v")
            | (ModelSpec::TruncatedGaussian { sigma_v, .. }, "sigma_v") => sigma_v,
            (ModelSpec::Arch { beta0, .. }, "beta0") => beta0,
            (ModelSpec::Arch { beta1, .. }, "beta1") => beta1,
            (ModelSpec::StochasticVolatility { beta, .. }, "beta") => beta,
            (ModelSpec::StochasticVolatility { x0, .. }, "x0") => {
                *x0 = Some(value);
                return Ok(true);
            }
            (ModelSpec::TruncatedGaussian { lower, .. }, "lower") => lower,
            (ModelSpec::TruncatedGaussian { upper, .. }, "upper") => upper,
            _ => return Ok(false),
        };
        *slot = value;
        Ok(true)
    }

    fn default_for(family: &str) -> Result<Self> {
        Ok(match family {
            "linear-gaussian" => ModelSpec::LinearGaussian {
                phi: 0.9,
                sigma: 0.1,
                sigma_v: 0.1,
            },
            "arch" => ModelSpec::Arch {
                beta0: 9.0,
                beta1: 5.0,
                sigma_v: 1.0,
            },
            "sv" => ModelSpec::StochasticVolatility {
                phi: 0.9702,
                sigma: 0.178,
                beta: 0.5992,
                x0: None,
            },
            "truncated-gaussian" => ModelSpec::TruncatedGaussian {
                phi: 0.9,
                sigma: 1.0,
                sigma_v: 1.0,
                lower: -5.0,
                upper: 5.0,
            },
            other => return Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        })
    }
}

/// Where the observation record comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordSource {
    /// A record shipped with the library (see [`super::builtin_record`]).
    Builtin(String),
    File(PathBuf),
    /// Simulated from the model with `observations` values.
    Simulate {
        seed: u64,
        observations: usize,
    },
}

impl FromStr for RecordSource {
    type Err = Error;

    /// `builtin:<name>`, `file:<path>` or `simulate:<seed>:<observations>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad record source `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "builtin" => Ok(RecordSource::Builtin(rest.to_string())),
            "file" => Ok(RecordSource::File(PathBuf::from(rest))),
            "simulate" => {
                let (seed, n) = rest.split_once(':').ok_or_else(bad)?;
                Ok(RecordSource::Simulate {
                    seed: seed.parse().map_err(|_| bad())?,
                    observations: n.parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for RecordSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordSource::Builtin(name) => write!(f, "builtin:{name}"),
            RecordSource::File(p) => write!(f, "file:{}", p.display()),
            RecordSource::Simulate { seed, observations } => write!(f, "simulate:{seed}:{observations}"),
        }
    }
}

/// One filter configuration compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Arm {
    pub variant: FilterVariant,
    pub strategy: WeightStrategy,
    pub proposal: ProposalKind,
}

impl Arm {
    pub const BOOTSTRAP: Arm = Arm {
        variant: FilterVariant::Bootstrap,
        strategy: WeightStrategy::Uniform,
        proposal: ProposalKind::Prior,
    };

    pub fn ssapf(strategy: WeightStrategy, proposal: ProposalKind) -> Self {
        Arm {
            variant: FilterVariant::Ssapf,
            strategy,
            proposal,
        }
    }

    pub fn tsspf(strategy: WeightStrategy, proposal: ProposalKind) -> Self {
        Arm {
            variant: FilterVariant::Tsspf,
            strategy,
            proposal,
        }
    }
}

impl fmt::Display for Arm {
    /// `bootstrap`, `ssapf:<strategy>` or `ssapf:<strategy>:<proposal>`
    /// (the proposal is omitted when it is the prior kernel).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.variant == FilterVariant::Bootstrap {
            return f.write_str("bootstrap");
        }
        write!(f, "{}:{}", self.variant, self.strategy)?;
        if self.proposal != ProposalKind::Prior {
            write!(f, ":{}", self.proposal)?;
        }
        Ok(())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let variant: FilterVariant = parts.next().unwrap_or_default().parse()?;
        if variant == FilterVariant::Bootstrap {
            return match parts.next() {
                None => Ok(Arm::BOOTSTRAP),
                Some(_) => Err(Error::InvalidConfig(format!("bootstrap arm takes no options: `{s}`"))),
            };
        }
        let strategy = match parts.next() {
            Some(p) => p.parse()?,
            None => return Err(Error::InvalidConfig(format!("arm `{s}` needs a strategy"))),
        };
        let proposal = match parts.next() {
            Some(p) => p.parse()?,
            None => ProposalKind::Prior,
        };
        if parts.next().is_some() {
            return Err(Error::InvalidConfig(format!("too many fields in arm `{s}`")));
        }
        Ok(Arm {
            variant,
            strategy,
            proposal,
        })
    }
}

/// Pilot filter size: absolute, or `N / d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotSize {
    Absolute(usize),
    Fraction(usize),
}

impl PilotSize {
    pub fn resolve(self, particles: usize) -> usize {
        match self {
            PilotSize::Absolute(r) => r,
            PilotSize::Fraction(d) => particles / d,
        }
    }
}

impl FromStr for PilotSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad pilot size `{s}` (expected R or N/d)"));
        match s.trim().strip_prefix("N/") {
            Some(d) => match d.parse() {
                Ok(0) | Err(_) => Err(bad()),
                Ok(d) => Ok(PilotSize::Fraction(d)),
            },
            None => s.trim().parse().map(PilotSize::Absolute).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for PilotSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PilotSize::Absolute(r) => write!(f, "{r}"),
            PilotSize::Fraction(d) => write!(f, "N/{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub model: ModelSpec,
    pub record: RecordSource,
    pub arms: Vec<Arm>,
    /// `N`.
    pub particles: usize,
    /// `M_N` for two-stage arms; `N` when unset.
    pub first_stage: Option<usize>,
    pub pilot: PilotSize,
    pub runs: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Nodes of the coarse oracle grid; the oracle uses twice as many.
    pub oracle_nodes: usize,
}

/// Keys accepted in configuration files.
pub const CONFIG_KEYS: [&str; 21] = [
    "experiment",
    "model",
    "phi",
    "sigma",
    "sigma_v",
    "beta0",
    "beta1",
    "beta",
    "x0",
    "lower",
    "upper",
    "record",
    "arms",
    "particles",
    "mn",
    "pilot",
    "runs",
    "seed",
    "out",
    "oracle_nodes",
    "id",
];

impl ExperimentConfig {
    /// Parses a flat `key = value` configuration. `#` starts a comment.
    /// An `experiment` key selects a catalog entry that the remaining
    /// keys override; without it, `model`, `record` and `arms` are required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !CONFIG_KEYS.contains(&k) {
                return Err(Error::InvalidConfig(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if pairs.iter().any(|(p, _)| p == k) {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let mut config = match get("experiment") {
            Some(id) => super::catalog_entry(id)?,
            None => {
                let family =
                    get("model").ok_or_else(|| Error::InvalidConfig("missing `experiment` or `model`".into()))?;
                let record = get("record").ok_or_else(|| Error::InvalidConfig("missing `record`".into()))?;
                ExperimentConfig {
                    id: "custom".into(),
                    model: ModelSpec::default_for(family)?,
                    record: record.parse()?,
                    arms: Vec::new(),
                    particles: 4000,
                    first_stage: None,
                    pilot: PilotSize::Fraction(10),
                    runs: 200,
                    seed: 1,
                    out: None,
                    oracle_nodes: 2048,
                }
            }
        };
        // The model family goes first so parameters apply to it.
        if let Some(family) = get("model") {
            config.set("model", family)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "model") {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "experiment" => {}
            "id" => self.id = value.to_string(),
            "model" => {
                if value != self.model.family() {
                    self.model = ModelSpec::default_for(value)?;
                }
            }
            "record" => self.record = value.parse()?,
            "arms" => {
                self.arms = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "particles" => self.particles = num(key, value)?,
            "mn" => self.first_stage = Some(num(key, value)?),
            "pilot" => self.pilot = value.parse()?,
            "runs" => self.runs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "oracle_nodes" => self.oracle_nodes = num(key, value)?,
            param => {
                let v: f64 = num(param, value)?;
                if !self.model.set(param, v)? {
                    return Err(Error::InvalidConfig(format!(
                        "`{param}` is not a parameter of the {} model",
                        self.model.family()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 replications, got {}",
                self.runs
            )));
        }
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig("no arms configured".into()));
        }
        if self.oracle_nodes < 16 {
            return Err(Error::InvalidConfig(format!(
                "oracle grid too small: {}",
                self.oracle_nodes
            )));
        }
        self.model.build()?;
        for arm in &self.arms {
            self.filter_config(arm)?.validate()?;
        }
        Ok(())
    }

    /// `M_N / N`, required to be a whole number.
    pub fn first_stage_factor(&self) -> Result<usize> {
        let m = self.first_stage.unwrap_or(self.particles);
        if self.particles == 0 || m < self.particles || !m.is_multiple_of(self.particles) {
            return Err(Error::InvalidConfig(format!(
                "M_N = {m} must be a positive multiple of N = {}",
                self.particles
            )));
        }
        Ok(m / self.particles)
    }

    pub fn filter_config(&self, arm: &Arm) -> Result<FilterConfig> {
        let mut cfg = FilterConfig {
            variant: arm.variant,
            particles: self.particles,
            strategy: arm.strategy,
            proposal: arm.proposal,
            first_stage_factor: self.first_stage_factor()?,
            ..FilterConfig::default()
        };
        if arm.strategy == WeightStrategy::OptimalPilot {
            cfg.pilot = self.pilot.resolve(self.particles);
            if cfg.pilot < MIN_PILOT {
                return Err(Error::InvalidConfig(format!(
                    "pilot size {} (from {}) is below {MIN_PILOT}",
                    cfg.pilot, self.pilot
                )));
            }
        }
        Ok(cfg)
    }

    /// The configuration as `key = value` lines that [`Self::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("id", self.id.clone());
        line("model", self.model.family().to_string());
        match self.model {
            ModelSpec::LinearGaussian { phi, sigma, sigma_v } => {
                line("phi", format!("{phi:?}"));
                line("sigma", format!("{sigma:?}"));
                line("sigma_v", format!("{sigma_v:?}"));
            }
            ModelSpec::Arch { beta0, beta1, sigma_v } => {
                line("beta0", format!("{beta0:?}"));
                line("beta1", format!("{beta1:?}"));
                line("sigma_v", format!("{sigma_v:?}"));
            }
            ModelSpec::StochasticVolatility { phi, sigma, beta, x0 } => {
                line("phi", format!("{phi:?}"));
                line("sigma", format!("{sigma:?}"));
                line("beta", format!("{beta:?}"));
                if let Some(x0) = x0 {
                    line("x0", format!("{x0:?}"));
                }
            }
            ModelSpec::TruncatedGaussian {
                phi,
                sigma,
                sigma_v,
                lower,
                upper,
            } => {
                line("phi", format!("{phi:?}"));
                line("sigma", format!("{sigma:?}"));
                line("sigma_v", format!("{sigma_v:?}"));
                line("lower", format!("{lower:?}"));
                line("upper", format!("{upper:?}"));
            }
        }
        line("record", self.record.to_string());
        line(
            "arms",
            self.arms.iter().map(Arm::to_string).collect::<Vec<_>>().join(", "),
        );
        line("particles", self.particles.to_string());
        if let Some(m) = self.first_stage {
            line("mn", m.to_string());
        }
        line("pilot", self.pilot.to_string());
        line("runs", self.runs.to_string());
        line("seed", self.seed.to_string());
        if let Some(out) = &self.out {
            line("out", out.display().to_string());
        }
        line("oracle_nodes", self.oracle_nodes.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_names_round_trip() {
        for s in [
            "bootstrap",
            "ssapf:ps-generic",
            "ssapf:fully-adapted:optimal",
            "tsspf:optimal-pilot:laplace",
        ] {
            assert_eq!(s.parse::<Arm>().unwrap().to_string(), s);
        }
        assert_eq!(
            "ssapf:uniform:prior".parse::<Arm>().unwrap().to_string(),
            "ssapf:uniform"
        );
        assert!("bootstrap:uniform".parse::<Arm>().is_err());
        assert!("ssapf".parse::<Arm>().is_err());
        assert!("ssapf:best".parse::<Arm>().is_err());
    }

    #[test]
    fn pilot_sizes() {
        assert_eq!("N/10".parse::<PilotSize>().unwrap().resolve(4000), 400);
        assert_eq!("300".parse::<PilotSize>().unwrap().resolve(4000), 300);
        assert!("N/0".parse::<PilotSize>().is_err());
    }

    #[test]
    fn catalog_overrides() {
        let c =
            ExperimentConfig::parse("experiment = outlier\nparticles = 500 # small\nruns=4\nsigma_v = 2\n").unwrap();
        assert_eq!(c.particles, 500);
        assert_eq!(c.runs, 4);
        assert_eq!(
            c.model,
            ModelSpec::LinearGaussian {
                phi: 0.9,
                sigma: 0.1,
                sigma_v: 2.0
            }
        );
    }

    #[test]
    fn text_round_trip() {
        for id in super::super::EXPERIMENT_IDS {
            let c = super::super::catalog_entry(id).unwrap();
            assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::parse("experiment = nope").is_err());
        assert!(ExperimentConfig::parse("experiment = outlier\nruns = 0").is_err());
        assert!(ExperimentConfig::parse("experiment = outlier\nruns = 1").is_err());
        assert!(ExperimentConfig::parse("experiment = outlier\ncolour = red").is_err());
        assert!(ExperimentConfig::parse("experiment = outlier\nbeta0 = 1").is_err());
        assert!(ExperimentConfig::parse("experiment = outlier\nmn = 6000").is_err());
        assert!(ExperimentConfig::parse("experiment = arch-informative\npilot = 10").is_err());
        assert!(ExperimentConfig::parse("model = arch\narms = bootstrap").is_err());
        assert!(ExperimentConfig::parse("experiment = outlier\nruns = 3\nruns = 4").is_err());
    }
}

//! Latent autoregressive chain `X_i = f(X_{i-1}) + xi_i` and its noisy
//! observations `Z_i = X_i + eps_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{ErrorKind, ErrorModel, InnovationModel};

/// Chains whose state exceeds this magnitude are reported as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Parametric regression family, without its parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `f(x) = a x + b`, parameter `(a, b)`.
    Linear,
    /// `f(x) = theta / (1 + x^2)`, parameter `theta`.
    Cauchy,
}

impl Family {
    pub fn dim(self) -> usize {
        match self {
            Family::Linear => 2,
            Family::Cauchy => 1,
        }
    }

    pub fn coordinate_names(self) -> &'static [&'static str] {
        match self {
            Family::Linear => &["a", "b"],
            Family::Cauchy => &["theta"],
        }
    }

    /// Evaluates `f_theta(x)`.
    pub fn eval(self, theta: &[f64], x: f64) -> f64 {
        match self {
            Family::Linear => theta[0] * x + theta[1],
            Family::Cauchy => theta[0] / (1.0 + x * x),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Family::Linear),
            "cauchy" => Ok(Family::Cauchy),
            other => Err(format!("unknown family '{other}' (expected linear|cauchy)")),
        }
    }
}

/// Regression function with its true parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionModel {
    Linear { a: f64, b: f64 },
    Cauchy { theta: f64 },
}

impl RegressionModel {
    pub fn family(&self) -> Family {
        match self {
            RegressionModel::Linear { .. } => Family::Linear,
            RegressionModel::Cauchy { .. } => Family::Cauchy,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            RegressionModel::Linear { a, b } => vec![a, b],
            RegressionModel::Cauchy { theta } => vec![theta],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RegressionModel::Linear { a, b } => a * x + b,
            RegressionModel::Cauchy { theta } => theta / (1.0 + x * x),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.params().iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(invalid("regression parameters must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `X_0 ~ U[0, 1]`.
    UniformUnit,
    FixedValue { value: f64 },
}

/// Complete generative description of one simulated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub regression: RegressionModel,
    pub innovation: InnovationModel,
    pub error: ErrorModel,
    pub init: Init,
    /// Steps run from the initial state and discarded.
    pub burn_in: usize,
    /// Number of transitions; `n + 1` states are emitted.
    pub n: usize,
}

/// Latent states `x[0..=n]` and their observations `z[0..=n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.regression.validate()?;
        self.innovation.validate()?;
        self.error.validate()?;
        if self.n < 2 {
            return Err(invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if let Init::FixedValue { value } = self.init {
            if !value.is_finite() {
                return Err(invalid("initial value must be finite"));
            }
        }
        Ok(())
    }

    /// Simulates one trajectory.
    ///
    /// Draw order is fixed: the initial state, then `burn_in + n`
    /// innovations, then `n + 1` observation errors.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TrajectoryPair> {
        self.validate()?;
        let mut state = match self.init {
            Init::UniformUnit => rng.random::<f64>(),
            Init::FixedValue { value } => value,
        };
        let innovations = self.innovation.sample(rng, self.burn_in + self.n);
        let mut x = Vec::with_capacity(self.n + 1);
        for (step, xi) in innovations.iter().enumerate() {
            if step >= self.burn_in {
                x.push(state);
            }
            state = self.regression.eval(state) + xi;
            if !(state.abs() <= DIVERGENCE_LIMIT) {
                return Err(Error::Divergence { step: step + 1, value: state.abs() });
            }
        }
        x.push(state);
        let z = x
            .iter()
            .zip(self.error.sample(rng, self.n + 1))
            .map(|(xi, e)| xi + e)
            .collect();
        Ok(TrajectoryPair { x, z })
    }
}

/// The three simulation designs used to benchmark the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `X_i = 1/4 + X_{i-1}/2 + xi_i`, `xi = +-1/4`; stationary law U[0,1].
    CaseA,
    /// `X_i = 1/3 + X_{i-1}/3 + xi_i`, `xi = +-1/3`; stationary law on the Cantor set.
    CaseB,
    /// `X_i = 1.5 / (1 + X_{i-1}^2) + xi_i`, `xi ~ N(0, 0.01)`.
    Cauchy,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "case-a" | "a" => Ok(Preset::CaseA),
            "case-b" | "b" => Ok(Preset::CaseB),
            "cauchy" => Ok(Preset::Cauchy),
            other => Err(format!("unknown preset '{other}' (expected case-a|case-b|cauchy)")),
        }
    }
}

impl Preset {
    /// Stationary variance of the latent chain used to turn a noise ratio
    /// into `sigma_eps`. The Cauchy value is an empirical approximation.
    pub fn latent_variance(self) -> f64 {
        match self {
            Preset::CaseA => 1.0 / 12.0,
            Preset::CaseB => 1.0 / 8.0,
            Preset::Cauchy => 0.1,
        }
    }

    pub fn regression(self) -> RegressionModel {
        match self {
            Preset::CaseA => RegressionModel::Linear { a: 0.5, b: 0.25 },
            Preset::CaseB => RegressionModel::Linear { a: 1.0 / 3.0, b: 1.0 / 3.0 },
            Preset::Cauchy => RegressionModel::Cauchy { theta: 1.5 },
        }
    }

    pub fn family(self) -> Family {
        self.regression().family()
    }

    /// `sigma_eps` for the noise ratio `s2n = sigma_eps^2 / Var(X)`.
    pub fn sigma_eps(self, s2n: f64) -> Result<f64> {
        if !(s2n.is_finite() && s2n > 0.0) {
            return Err(invalid(format!("s2n must be positive, got {s2n}")));
        }
        Ok((s2n * self.latent_variance()).sqrt())
    }

    pub fn scenario(self, n: usize, s2n: f64, error: ErrorKind) -> Result<Scenario> {
        let error = ErrorModel::new(error, self.sigma_eps(s2n)?)?;
        let (innovation, burn_in) = match self {
            // Uniform start is exactly stationary.
            Preset::CaseA => (InnovationModel::TwoPoint { c: 0.25 }, 0),
            Preset::CaseB => (InnovationModel::TwoPoint { c: 1.0 / 3.0 }, 1000),
            Preset::Cauchy => (InnovationModel::Gaussian { sigma_xi: 0.1 }, 1000),
        };
        let s = Scenario {
            regression: self.regression(),
            innovation,
            error,
            init: Init::UniformUnit,
            burn_in,
            n,
        };
        s.validate()?;
        Ok(s)
    }
}

pub fn preset_case_a(n: usize, s2n: f64, error: ErrorKind) -> Result<Scenario> {
    Preset::CaseA.scenario(n, s2n, error)
}

pub fn preset_case_b(n: usize, s2n: f64, error: ErrorKind) -> Result<Scenario> {
    Preset::CaseB.scenario(n, s2n, error)
}

pub fn preset_cauchy(n: usize, s2n: f64, error: ErrorKind) -> Result<Scenario> {
    Preset::Cauchy.scenario(n, s2n, error)
}

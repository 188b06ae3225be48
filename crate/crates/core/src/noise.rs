//! Measurement-error and innovation laws.
//!
//! Both supported measurement-error laws are symmetric, so their
//! characteristic functions are real, even and strictly positive. They are
//! returned as plain `f64` values.

use std::f64::consts::{PI, SQRT_2};

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Double-exponential law with variance `sigma_eps^2`.
    Laplace,
    Gaussian,
}

impl std::str::FromStr for ErrorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" => Ok(ErrorKind::Laplace),
            "gaussian" | "normal" => Ok(ErrorKind::Gaussian),
            other => Err(format!("unknown error law '{other}' (expected laplace|gaussian)")),
        }
    }
}

/// Known law of the additive observation noise `Z = X + eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    /// Standard deviation of the noise.
    pub sigma_eps: f64,
}

impl ErrorModel {
    pub fn new(kind: ErrorKind, sigma_eps: f64) -> Result<Self> {
        let m = ErrorModel { kind, sigma_eps };
        m.validate()?;
        Ok(m)
    }

    pub fn laplace(sigma_eps: f64) -> Result<Self> {
        Self::new(ErrorKind::Laplace, sigma_eps)
    }

    pub fn gaussian(sigma_eps: f64) -> Result<Self> {
        Self::new(ErrorKind::Gaussian, sigma_eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps.is_finite() && self.sigma_eps > 0.0) {
            return Err(invalid(format!(
                "sigma_eps must be positive and finite, got {}",
                self.sigma_eps
            )));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma_eps * self.sigma_eps
    }

    /// Density of the noise at `x`.
    pub fn density(&self, x: f64) -> f64 {
        let s = self.sigma_eps;
        match self.kind {
            ErrorKind::Laplace => (-SQRT_2 * x.abs() / s).exp() / (s * SQRT_2),
            ErrorKind::Gaussian => (-x * x / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt()),
        }
    }

    /// Characteristic function `E[exp(i t eps)]`.
    pub fn cf(&self, t: f64) -> f64 {
        let s2 = self.variance();
        match self.kind {
            ErrorKind::Laplace => 1.0 / (1.0 + s2 * t * t / 2.0),
            ErrorKind::Gaussian => (-s2 * t * t / 2.0).exp(),
        }
    }

    /// Draws a single noise value. Laplace draws use the inverse CDF.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            ErrorKind::Laplace => {
                let scale = self.sigma_eps / SQRT_2;
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            ErrorKind::Gaussian => {
                let g: f64 = rng.sample(StandardNormal);
                self.sigma_eps * g
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Law of the i.i.d. innovations driving the latent chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationModel {
    /// `+c` or `-c` with probability one half each.
    TwoPoint { c: f64 },
    Gaussian { sigma_xi: f64 },
}

impl InnovationModel {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            InnovationModel::TwoPoint { c } => c,
            InnovationModel::Gaussian { sigma_xi } => sigma_xi,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("innovation scale must be positive, got {v}")));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InnovationModel::TwoPoint { c } => c * c,
            InnovationModel::Gaussian { sigma_xi } => sigma_xi * sigma_xi,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InnovationModel::TwoPoint { c } => {
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            }
            InnovationModel::Gaussian { sigma_xi } => {
                let g: f64 = rng.sample(StandardNormal);
                sigma_xi * g
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

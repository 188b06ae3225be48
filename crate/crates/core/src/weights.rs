//! Weight functions and the Fourier transforms of their products with the
//! monomials and with the Cauchy regression function.
//!
//! Fourier transforms follow the convention `phi*(t) = ∫ e^{itx} phi(x) dx`.
//! The `(1 + x^2)^2` factor of the Cauchy weights is reduced algebraically
//! before transforming: `(1+x^2)^2 f = 1 + x^2` and `(1+x^2)^2 f^2 = 1`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{ErrorKind, ErrorModel};
use crate::process::RegressionModel;

/// Tail mass below which a Gaussian-type integrand is considered negligible.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightBase {
    /// `N(x) = exp(-x^2 / (4 sigma^2))`.
    N,
    /// `SC(x) = (2 sin(x) / x)^4 / (2 pi)`, whose transform lives on `[-4, 4]`.
    SC,
}

impl std::str::FromStr for WeightBase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(WeightBase::N),
            "sc" => Ok(WeightBase::SC),
            other => Err(format!("unknown weight '{other}' (expected n|sc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub base: WeightBase,
    /// Multiplies the base weight by `(1 + x^2)^2` (the `N_c` / `SC_c` weights).
    pub cauchy_factor: bool,
    /// Width parameter of `N`; ignored by `SC`.
    pub sigma_eps: f64,
}

/// Function multiplying the weight inside a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Product {
    /// The weight alone (`p_0`).
    One,
    /// `p_1(x) = x`.
    X,
    /// `p_2(x) = x^2`.
    X2,
    /// `f(x) = 1 / (1 + x^2)`.
    CauchyF,
    /// `f(x)^2`.
    CauchyF2,
}

impl WeightSpec {
    pub fn n(sigma_eps: f64) -> Self {
        WeightSpec { base: WeightBase::N, cauchy_factor: false, sigma_eps }
    }

    pub fn sc() -> Self {
        WeightSpec { base: WeightBase::SC, cauchy_factor: false, sigma_eps: 1.0 }
    }

    pub fn n_c(sigma_eps: f64) -> Self {
        WeightSpec { cauchy_factor: true, ..Self::n(sigma_eps) }
    }

    pub fn sc_c() -> Self {
        WeightSpec { cauchy_factor: true, ..Self::sc() }
    }

    /// The weight a deconvolution estimator uses for a family: `N`/`SC` for
    /// the linear family and their Cauchy-factor variants otherwise.
    pub fn for_family(base: WeightBase, family: crate::process::Family, sigma_eps: f64) -> Self {
        let cauchy_factor = family == crate::process::Family::Cauchy;
        WeightSpec { base, cauchy_factor, sigma_eps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base == WeightBase::N && !(self.sigma_eps.is_finite() && self.sigma_eps > 0.0) {
            return Err(invalid(format!("N weight needs sigma_eps > 0, got {}", self.sigma_eps)));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match (self.base, self.cauchy_factor) {
            (WeightBase::N, false) => "N",
            (WeightBase::SC, false) => "SC",
            (WeightBase::N, true) => "N_c",
            (WeightBase::SC, true) => "SC_c",
        }
    }

    /// Pointwise value `w(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let base = match self.base {
            WeightBase::N => (-x * x / (4.0 * self.sigma_eps * self.sigma_eps)).exp(),
            WeightBase::SC => sc_weight(x),
        };
        if self.cauchy_factor {
            let q = 1.0 + x * x;
            base * q * q
        } else {
            base
        }
    }

    /// Checks that `(g w)*` is available and returns an evaluator for it.
    pub fn product_transform(&self, g: Product) -> Result<ProductTransform> {
        self.validate()?;
        use Product::*;
        let ok = match (self.base, self.cauchy_factor, g) {
            (_, false, One | X | X2) => true,
            (_, true, CauchyF | CauchyF2) => true,
            // (1+x^2)^2 N is integrable; (1+x^2)^2 SC is not.
            (WeightBase::N, true, One) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Unsupported(format!(
                "no transform for weight {} times {:?}",
                self.label(),
                g
            )));
        }
        Ok(ProductTransform { weight: *self, product: g })
    }

    /// Cutoff beyond which the deconvolution integrand for this weight is
    /// negligible under `err`. `None` when the integrand does not decay.
    pub fn natural_cutoff(&self, err: &ErrorModel) -> Option<f64> {
        match self.base {
            WeightBase::SC => Some(4.0),
            WeightBase::N => {
                let s2 = self.sigma_eps * self.sigma_eps;
                let rate = match err.kind {
                    ErrorKind::Laplace => s2,
                    ErrorKind::Gaussian => s2 - err.variance() / 2.0,
                };
                (rate > 0.0).then(|| ((1.0 / TAIL_TOLERANCE).ln() / rate).sqrt())
            }
        }
    }
}

/// `(g w)*` for a validated weight/product pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductTransform {
    weight: WeightSpec,
    product: Product,
}

impl ProductTransform {
    pub fn weight(&self) -> WeightSpec {
        self.weight
    }

    pub fn product(&self) -> Product {
        self.product
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        use Product::*;
        let w = &self.weight;
        match w.base {
            WeightBase::N => {
                let s2 = w.sigma_eps * w.sigma_eps;
                let base = (2.0 * PI).sqrt() * (2.0 * s2).sqrt() * (-s2 * t * t).exp();
                let p2 = base * (2.0 * s2 - 4.0 * s2 * s2 * t * t);
                match (w.cauchy_factor, self.product) {
                    (false, One) | (true, CauchyF2) => Complex64::new(base, 0.0),
                    (false, X) => Complex64::new(0.0, 2.0 * s2 * t * base),
                    (false, X2) => Complex64::new(p2, 0.0),
                    (true, CauchyF) => Complex64::new(base + p2, 0.0),
                    (true, One) => {
                        let a = s2;
                        let p4 = base
                            * (16.0 * a.powi(4) * t.powi(4) - 48.0 * a.powi(3) * t * t
                                + 12.0 * a * a);
                        Complex64::new(base + 2.0 * p2 + p4, 0.0)
                    }
                    _ => unreachable!("validated in product_transform"),
                }
            }
            WeightBase::SC => match (w.cauchy_factor, self.product) {
                (false, One) | (true, CauchyF2) => Complex64::new(sc_fourier(t), 0.0),
                (false, X) => Complex64::new(0.0, -sc_fourier_d1(t)),
                (false, X2) => Complex64::new(-sc_fourier_d2(t), 0.0),
                (true, CauchyF) => Complex64::new(sc_fourier(t) - sc_fourier_d2(t), 0.0),
                _ => unreachable!("validated in product_transform"),
            },
        }
    }
}

/// `(g w)*(t)`.
pub fn weighted_product_fourier(w: &WeightSpec, g: Product, t: f64) -> Result<Complex64> {
    Ok(w.product_transform(g)?.eval(t))
}

fn sc_weight(x: f64) -> f64 {
    let s = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    (2.0 * s).powi(4) / (2.0 * PI)
}

/// Transform of `SC`: a piecewise cubic on `[-4, 4]`, zero outside.
pub fn sc_fourier(t: f64) -> f64 {
    let u = t.abs();
    if u <= 2.0 {
        u * u * u / 2.0 - 2.0 * u * u + 16.0 / 3.0
    } else if u <= 4.0 {
        let v = 4.0 - u;
        v * v * v / 6.0
    } else {
        0.0
    }
}

/// First derivative of [`sc_fourier`].
pub fn sc_fourier_d1(t: f64) -> f64 {
    let u = t.abs();
    let g = if u <= 2.0 {
        1.5 * u * u - 4.0 * u
    } else if u <= 4.0 {
        -(4.0 - u) * (4.0 - u) / 2.0
    } else {
        0.0
    };
    t.signum() * g
}

/// Second derivative of [`sc_fourier`].
pub fn sc_fourier_d2(t: f64) -> f64 {
    let u = t.abs();
    if u <= 2.0 {
        3.0 * u - 4.0
    } else if u <= 4.0 {
        4.0 - u
    } else {
        0.0
    }
}

/// One integral of the integrability diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C11Entry {
    pub label: String,
    /// Integral over the largest window examined.
    pub value: f64,
    pub converged: bool,
}

/// Numerical check that `|phi*| / f_eps*` is integrable for the transforms
/// the contrast needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C11Report {
    pub weight: String,
    pub error: ErrorModel,
    pub entries: Vec<C11Entry>,
    pub converged: bool,
}

/// Builds the integrability report for `w` under `err` with regression `reg`.
///
/// Each integral is evaluated by the trapezoid rule on `[-T, T]` for a
/// doubling sequence of windows; it converges when the last doubling moves
/// the value by less than `1e-6` relative.
pub fn condition_c11_report(
    w: &WeightSpec,
    err: &ErrorModel,
    reg: &RegressionModel,
) -> Result<C11Report> {
    err.validate()?;
    type Combo = Vec<(Product, Complex64)>;
    let mut integrands: Vec<(String, Combo)> = Vec::new();
    match (*reg, w.cauchy_factor) {
        (RegressionModel::Linear { a, b }, false) => {
            let (a, b) = (Complex64::from(a), Complex64::from(b));
            integrands.push(("w*".into(), vec![(Product::One, 1.0.into())]));
            integrands.push(("(f w)*".into(), vec![(Product::X, a), (Product::One, b)]));
            integrands.push((
                "(f^2 w)*".into(),
                vec![(Product::X2, a * a), (Product::X, 2.0 * a * b), (Product::One, b * b)],
            ));
        }
        (RegressionModel::Cauchy { theta }, true) => {
            if w.product_transform(Product::One).is_ok() {
                integrands.push(("w*".into(), vec![(Product::One, 1.0.into())]));
            }
            integrands.push(("(f w)*".into(), vec![(Product::CauchyF, theta.into())]));
            integrands.push(("(f^2 w)*".into(), vec![(Product::CauchyF2, (theta * theta).into())]));
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "weight {} is not paired with the {:?} family",
                w.label(),
                reg.family()
            )))
        }
    }

    let start = w.natural_cutoff(err).unwrap_or(8.0 / err.sigma_eps);
    let mut entries = Vec::new();
    for (label, combo) in integrands {
        let parts = combo
            .iter()
            .map(|(g, c)| Ok((w.product_transform(*g)?, *c)))
            .collect::<Result<Vec<_>>>()?;
        let integrand = |t: f64| {
            let v: Complex64 = parts.iter().map(|(pt, c)| c * pt.eval(t)).sum();
            let num = v.norm();
            // Both factors underflow far out; a vanishing numerator wins.
            if num == 0.0 {
                0.0
            } else {
                num / err.cf(-t)
            }
        };
        let mut prev = f64::NAN;
        let mut value = f64::NAN;
        let mut converged = false;
        for k in 0..5 {
            let t_max = start * f64::from(1u32 << k);
            let points = 4096usize << k;
            value = trapezoid(&integrand, -t_max, t_max, points);
            if k > 0 {
                converged = value.is_finite() && (value - prev).abs() <= 1e-6 * value.abs().max(1.0);
            }
            prev = value;
        }
        entries.push(C11Entry { label, value, converged });
    }
    let converged = entries.iter().all(|e| e.converged);
    Ok(C11Report { weight: w.label().to_string(), error: *err, entries, converged })
}

fn trapezoid(f: &impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let h = (b - a) / points as f64;
    let inner: f64 = (1..points).map(|m| f(a + m as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

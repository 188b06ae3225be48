//! Deconvolution integrals
//!
//! ```text
//! I_phi(Z) = (1/2pi) Re ∫ phi*(t) e^{-itZ} / f_eps*(-t) dt
//! ```
//!
//! `E[I_phi(Z)] = E[phi(X)]` when `Z = X + eps` with `eps` independent of
//! `X`, so `I_phi(Z)` is an observable, unbiased proxy for `phi(X)`.
//!
//! For the `N` family of weights the integral has a closed form under both
//! supported noise laws. Everything else goes through a trapezoid rule on a
//! uniform grid over `[-t_max, t_max]`. Evaluating many points either runs
//! the grid sum directly (Horner in `e^{-ihZ}`) or tabulates the sum and its
//! derivative on a fine `Z` grid with one FFT each and interpolates with
//! cubic Hermite polynomials.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{ErrorKind, ErrorModel};
use crate::weights::{Product, ProductTransform, WeightBase, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Use a closed form where one exists, the grid otherwise.
    ClosedForm,
    /// Always use the grid.
    NumericGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStrategy {
    /// Direct sums for small batches, the FFT table for large ones.
    Auto,
    Direct,
    Fft,
}

/// Grid and truncation plan for numerical Fourier inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionPlan {
    /// Truncation point. `None` picks the weight's natural cutoff: 4 for
    /// `SC`, and for `N` the point where the integrand falls below 1e-12.
    #[serde(default)]
    pub t_max: Option<f64>,
    /// Grid intervals; a power of two, at least 256.
    pub points: usize,
    pub mode: EvalMode,
    #[serde(default = "default_batch")]
    pub batch: BatchStrategy,
}

fn default_batch() -> BatchStrategy {
    BatchStrategy::Auto
}

impl Default for InversionPlan {
    fn default() -> Self {
        InversionPlan { t_max: None, points: 4096, mode: EvalMode::ClosedForm, batch: BatchStrategy::Auto }
    }
}

/// Direct sums are used while `batch size * grid size` stays below this.
const DIRECT_WORK_LIMIT: usize = 1 << 18;

impl InversionPlan {
    pub fn with_points(points: usize) -> Self {
        InversionPlan { points, ..Default::default() }
    }

    pub fn numeric(t_max: Option<f64>, points: usize) -> Self {
        InversionPlan { t_max, points, mode: EvalMode::NumericGrid, batch: BatchStrategy::Auto }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 256 || !self.points.is_power_of_two() {
            return Err(invalid(format!(
                "grid points must be a power of two >= 256, got {}",
                self.points
            )));
        }
        if let Some(t) = self.t_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid(format!("t_max must be positive, got {t}")));
            }
        }
        Ok(())
    }

    /// Truncation point for weight `w` under `err`.
    pub fn resolve_t_max(&self, w: &WeightSpec, err: &ErrorModel) -> Result<f64> {
        self.validate()?;
        match self.t_max {
            Some(t) => Ok(t),
            None => w.natural_cutoff(err).ok_or_else(|| {
                Error::Unsupported(format!(
                    "weight {} does not make the integrand decay under {:?} noise with sigma {}",
                    w.label(),
                    err.kind,
                    err.sigma_eps
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    Finite(f64),
    Infinite,
}

/// Fourier-domain kernel `K*(t / C_n)` multiplying the deconvolution integrand.
///
/// `K*(u)` is 1 for `|u| <= 1 - taper`, 0 for `|u| > 1`, and a raised
/// cosine in between. With `taper = 0` it is the indicator of `[-1, 1]`,
/// taking the value 1/2 exactly at `|u| = 1` so that truncating a grid at a
/// node reproduces the trapezoid rule on the shorter interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub cutoff: Cutoff,
    #[serde(default)]
    pub taper: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { cutoff: Cutoff::Infinite, taper: 0.0 }
    }
}

impl KernelSpec {
    pub fn indicator(cutoff: Cutoff) -> Self {
        KernelSpec { cutoff, taper: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Cutoff::Finite(c) = self.cutoff {
            if !(c.is_finite() && c > 0.0) {
                return Err(invalid(format!("kernel cutoff must be positive, got {c}")));
            }
        }
        if !(0.0..1.0).contains(&self.taper) {
            return Err(invalid(format!("kernel taper must lie in [0, 1), got {}", self.taper)));
        }
        Ok(())
    }

    pub fn is_inert(&self) -> bool {
        self.cutoff == Cutoff::Infinite
    }

    pub fn multiplier(&self, t: f64) -> f64 {
        let c = match self.cutoff {
            Cutoff::Infinite => return 1.0,
            Cutoff::Finite(c) => c,
        };
        let u = t.abs() / c;
        let inner = 1.0 - self.taper;
        if u > 1.0 {
            0.0
        } else if u == 1.0 && self.taper == 0.0 {
            0.5
        } else if u <= inner {
            1.0
        } else {
            0.5 * (1.0 + (PI * (u - inner) / self.taper).cos())
        }
    }
}

/// Trapezoid-rule coefficients of one deconvolution integrand on a uniform grid.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    t_min: f64,
    step: f64,
    coeffs: Vec<Complex64>,
    /// The integrand came from a real function, so the imaginary part of
    /// the sum must vanish.
    hermitian: bool,
}

impl SpectralGrid {
    pub fn new(
        phi_star: impl Fn(f64) -> Complex64,
        err: &ErrorModel,
        t_max: f64,
        points: usize,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        err.validate()?;
        kernel.validate()?;
        if !(t_max.is_finite() && t_max > 0.0) || points == 0 {
            return Err(invalid("grid needs t_max > 0 and at least one interval"));
        }
        let step = 2.0 * t_max / points as f64;
        let scale = step / (2.0 * PI);
        let mut coeffs = Vec::with_capacity(points + 1);
        for m in 0..=points {
            let t = -t_max + m as f64 * step;
            let k = kernel.multiplier(t);
            if k == 0.0 {
                coeffs.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let v = phi_star(t) * k / err.cf(-t);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFiniteIntegrand { t });
            }
            let end = if m == 0 || m == points { 0.5 } else { 1.0 };
            coeffs.push(v * (end * scale));
        }
        Ok(SpectralGrid { t_min: -t_max, step, coeffs, hermitian: false })
    }

    fn from_transform(
        pt: &ProductTransform,
        err: &ErrorModel,
        t_max: f64,
        points: usize,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        let mut g = Self::new(|t| pt.eval(t), err, t_max, points, kernel)?;
        g.hermitian = true;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn horner(coeffs: &[Complex64], r: Complex64) -> Complex64 {
        coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * r + c)
    }

    /// Grid approximation of `I(Z)`.
    pub fn eval(&self, z: f64) -> f64 {
        let r = Complex64::from_polar(1.0, -self.step * z);
        let v = Self::horner(&self.coeffs, r) * Complex64::from_polar(1.0, -self.t_min * z);
        debug_assert!(
            !self.hermitian
                || v.im.abs() <= 1e-8 * self.coeffs.iter().map(|c| c.norm()).sum::<f64>().max(1.0),
            "imaginary residue {} at Z = {z}",
            v.im
        );
        v.re
    }

    /// `I(Z)` and `dI/dZ`.
    fn eval_with_derivative(&self, z: f64) -> (f64, f64) {
        let r = Complex64::from_polar(1.0, -self.step * z);
        let phase = Complex64::from_polar(1.0, -self.t_min * z);
        let v = Self::horner(&self.coeffs, r) * phase;
        let dc: Vec<Complex64> = self.derivative_coeffs();
        let d = Self::horner(&dc, r) * phase;
        (v.re, d.re)
    }

    fn derivative_coeffs(&self) -> Vec<Complex64> {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| c * Complex64::new(0.0, -(self.t_min + m as f64 * self.step)))
            .collect()
    }
}

/// `I(Z)` and `I'(Z)` tabulated on a uniform `Z` grid by FFT.
#[derive(Debug, Clone)]
pub struct InversionTable {
    z_min: f64,
    dz: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

/// Half-width of the tabulated `Z` window; points outside use direct sums.
pub const TABLE_HALF_WIDTH: f64 = 60.0;

impl InversionTable {
    pub fn build(grid: &SpectralGrid) -> Self {
        let t_max = -grid.t_min;
        let target_dz = (0.05 / t_max).min(0.01);
        let period = 2.0 * PI / grid.step;
        let mut size = (period / target_dz).ceil() as usize;
        size = size.max(grid.len()).next_power_of_two();
        let dz = period / size as f64;
        let z_min = -TABLE_HALF_WIDTH;
        let count = (2.0 * TABLE_HALF_WIDTH / dz).ceil() as usize + 1;

        let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
        let run = |coeffs: &[Complex64]| -> Vec<f64> {
            let mut buf = vec![Complex64::new(0.0, 0.0); size];
            for (m, c) in coeffs.iter().enumerate() {
                buf[m] = c * Complex64::from_polar(1.0, -(m as f64) * grid.step * z_min);
            }
            fft.process(&mut buf);
            (0..count)
                .map(|l| {
                    let z = z_min + l as f64 * dz;
                    (buf[l] * Complex64::from_polar(1.0, -grid.t_min * z)).re
                })
                .collect()
        };
        let values = run(&grid.coeffs);
        let derivs = run(&grid.derivative_coeffs());
        InversionTable { z_min, dz, values, derivs }
    }

    /// Interpolated value, or `None` outside the tabulated window.
    pub fn eval(&self, z: f64) -> Option<f64> {
        let pos = (z - self.z_min) / self.dz;
        if !(pos >= 0.0) {
            return None;
        }
        let l = pos.floor() as usize;
        if l + 1 >= self.values.len() {
            return None;
        }
        let s = pos - l as f64;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(
            h00 * self.values[l]
                + h10 * self.dz * self.derivs[l]
                + h01 * self.values[l + 1]
                + h11 * self.dz * self.derivs[l + 1],
        )
    }
}

/// Closed-form `I(Z)` for the `N`-based weights.
///
/// The weight's width must equal the noise standard deviation, which is the
/// setting the formulas are derived for.
pub fn deconv_closed(w: &WeightSpec, err: &ErrorModel, g: Product, z: f64) -> Result<f64> {
    check_closed(w, err, g)?;
    let s2 = err.variance();
    Ok(match err.kind {
        ErrorKind::Laplace => {
            let e = (-z * z / (4.0 * s2)).exp();
            let z2 = z * z;
            let i0 = (1.25 - z2 / (8.0 * s2)) * e;
            let i1 = (1.75 * z - z2 * z / (8.0 * s2)) * e;
            let i2 = (-s2 + 2.25 * z2 - z2 * z2 / (8.0 * s2)) * e;
            match (w.cauchy_factor, g) {
                (false, Product::One) | (true, Product::CauchyF2) => i0,
                (false, Product::X) => i1,
                (false, Product::X2) => i2,
                (true, Product::CauchyF) => i0 + i2,
                (true, Product::One) => {
                    let i4 = (3.25 * z2 * z2 - 6.0 * s2 * z2 - z2 * z2 * z2 / (8.0 * s2)) * e;
                    i0 + 2.0 * i2 + i4
                }
                _ => unreachable!("checked"),
            }
        }
        ErrorKind::Gaussian => {
            let e = SQRT_2 * (-z * z / (2.0 * s2)).exp();
            let q2 = 4.0 * z * z - 2.0 * s2;
            match (w.cauchy_factor, g) {
                (false, Product::One) | (true, Product::CauchyF2) => e,
                (false, Product::X) => 2.0 * z * e,
                (false, Product::X2) => q2 * e,
                (true, Product::CauchyF) => (1.0 + q2) * e,
                (true, Product::One) => {
                    let z2 = z * z;
                    let q4 = 16.0 * z2 * z2 - 48.0 * s2 * z2 + 12.0 * s2 * s2;
                    (1.0 + 2.0 * q2 + q4) * e
                }
                _ => unreachable!("checked"),
            }
        }
    })
}

fn check_closed(w: &WeightSpec, err: &ErrorModel, g: Product) -> Result<()> {
    err.validate()?;
    w.product_transform(g)?;
    if w.base != WeightBase::N {
        return Err(Error::Unsupported(format!(
            "no closed form for weight {}; use the numeric inversion",
            w.label()
        )));
    }
    if (w.sigma_eps - err.sigma_eps).abs() > 1e-12 * err.sigma_eps {
        return Err(Error::Unsupported(format!(
            "closed forms need the N width ({}) to equal sigma_eps ({}); use the numeric inversion",
            w.sigma_eps, err.sigma_eps
        )));
    }
    Ok(())
}

/// Trapezoid evaluation of `I(Z)` for an arbitrary transform.
pub fn deconv_numeric(
    phi_star: impl Fn(f64) -> Complex64,
    err: &ErrorModel,
    z: f64,
    plan: &InversionPlan,
) -> Result<f64> {
    kernel_deconv(phi_star, err, z, &KernelSpec::default(), plan)
}

/// Batched [`deconv_numeric`]: one grid shared by all points.
pub fn deconv_numeric_batch(
    phi_star: impl Fn(f64) -> Complex64,
    err: &ErrorModel,
    zs: &[f64],
    plan: &InversionPlan,
) -> Result<Vec<f64>> {
    let grid = plan_grid(phi_star, err, plan, &KernelSpec::default())?;
    Ok(NumericIntegral::new(grid, plan.batch).eval_many(zs))
}

/// `I(Z)` with the integrand multiplied by the kernel `K*(t / C_n)`.
pub fn kernel_deconv(
    phi_star: impl Fn(f64) -> Complex64,
    err: &ErrorModel,
    z: f64,
    kernel: &KernelSpec,
    plan: &InversionPlan,
) -> Result<f64> {
    Ok(plan_grid(phi_star, err, plan, kernel)?.eval(z))
}

fn plan_grid(
    phi_star: impl Fn(f64) -> Complex64,
    err: &ErrorModel,
    plan: &InversionPlan,
    kernel: &KernelSpec,
) -> Result<SpectralGrid> {
    plan.validate()?;
    let t_max = plan
        .t_max
        .ok_or_else(|| invalid("an explicit t_max is needed for an arbitrary transform"))?;
    SpectralGrid::new(phi_star, err, t_max, plan.points, kernel)
}

/// `phi(Z) - (sigma^2 / 2) phi''(Z)`: the exact deconvolution under Laplace
/// noise, where `1 / f_eps*(-t) = 1 + sigma^2 t^2 / 2`.
pub fn laplace_shortcut(
    phi: impl Fn(f64) -> f64,
    phi_second: impl Fn(f64) -> f64,
    err: &ErrorModel,
    z: f64,
) -> Result<f64> {
    if err.kind != ErrorKind::Laplace {
        return Err(Error::Unsupported("the shortcut holds for Laplace noise only".into()));
    }
    Ok(phi(z) - err.variance() / 2.0 * phi_second(z))
}

/// Grid half-width for a weight under a kernel. A finite cutoff `C` below
/// the weight's natural one is placed on the second and second-to-last
/// nodes, so the sum is the trapezoid rule on `[-C, C]`.
fn grid_extent(plan: &InversionPlan, kernel: &KernelSpec, w: &WeightSpec, err: &ErrorModel) -> Result<f64> {
    if plan.t_max.is_some() {
        return plan.resolve_t_max(w, err);
    }
    match (kernel.cutoff, w.natural_cutoff(err)) {
        (Cutoff::Finite(c), natural) if natural.is_none_or(|t| c < t) => {
            let p = plan.points as f64;
            Ok(c * p / (p - 2.0))
        }
        _ => plan.resolve_t_max(w, err),
    }
}

/// Grid-based integral with the batch strategy of its plan.
#[derive(Debug)]
pub struct NumericIntegral {
    grid: SpectralGrid,
    strategy: BatchStrategy,
    table: OnceLock<InversionTable>,
}

impl NumericIntegral {
    pub fn new(grid: SpectralGrid, strategy: BatchStrategy) -> Self {
        NumericIntegral { grid, strategy, table: OnceLock::new() }
    }

    fn use_table(&self, batch: usize) -> bool {
        match self.strategy {
            BatchStrategy::Direct => false,
            BatchStrategy::Fft => true,
            BatchStrategy::Auto => batch.saturating_mul(self.grid.len()) > DIRECT_WORK_LIMIT,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.grid.eval(z)
    }

    pub fn eval_many(&self, zs: &[f64]) -> Vec<f64> {
        if self.use_table(zs.len()) {
            let table = self.table.get_or_init(|| InversionTable::build(&self.grid));
            zs.iter().map(|&z| table.eval(z).unwrap_or_else(|| self.grid.eval(z))).collect()
        } else {
            zs.iter().map(|&z| self.grid.eval(z)).collect()
        }
    }

    #[doc(hidden)]
    pub fn eval_with_derivative(&self, z: f64) -> (f64, f64) {
        self.grid.eval_with_derivative(z)
    }
}

/// `I_{g w}(Z)` for one weight/product pair, closed-form or numeric.
#[derive(Debug)]
pub enum DeconvIntegral {
    Closed { weight: WeightSpec, error: ErrorModel, product: Product },
    Numeric(NumericIntegral),
}

impl DeconvIntegral {
    pub fn new(
        w: &WeightSpec,
        err: &ErrorModel,
        g: Product,
        plan: &InversionPlan,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        plan.validate()?;
        kernel.validate()?;
        let pt = w.product_transform(g)?;
        if plan.mode == EvalMode::ClosedForm && kernel.is_inert() && check_closed(w, err, g).is_ok() {
            return Ok(DeconvIntegral::Closed { weight: *w, error: *err, product: g });
        }
        let t_max = grid_extent(plan, kernel, w, err)?;
        let grid = SpectralGrid::from_transform(&pt, err, t_max, plan.points, kernel)?;
        Ok(DeconvIntegral::Numeric(NumericIntegral::new(grid, plan.batch)))
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, DeconvIntegral::Closed { .. })
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            DeconvIntegral::Closed { weight, error, product } => {
                deconv_closed(weight, error, *product, z).expect("checked at construction")
            }
            DeconvIntegral::Numeric(n) => n.eval(z),
        }
    }

    pub fn eval_many(&self, zs: &[f64]) -> Vec<f64> {
        match self {
            DeconvIntegral::Closed { .. } => zs.iter().map(|&z| self.eval(z)).collect(),
            DeconvIntegral::Numeric(n) => n.eval_many(zs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{sc_fourier, weighted_product_fourier};

    fn sc_t(g: Product) -> impl Fn(f64) -> Complex64 {
        move |t| weighted_product_fourier(&WeightSpec::sc(), g, t).unwrap()
    }

    #[test]
    fn closed_reference_values() {
        let g = ErrorModel::gaussian(1.0).unwrap();
        let v = deconv_closed(&WeightSpec::n(1.0), &g, Product::One, 0.0).unwrap();
        assert!((v - SQRT_2).abs() < 1e-15);
        assert_eq!(deconv_closed(&WeightSpec::n(1.0), &g, Product::X, 0.0).unwrap(), 0.0);
        for s in [0.2, 1.0, 3.0] {
            let l = ErrorModel::laplace(s).unwrap();
            assert!((deconv_closed(&WeightSpec::n(s), &l, Product::One, 0.0).unwrap() - 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_forms_match_numeric_inversion() {
        let pairs = [
            (false, Product::One),
            (false, Product::X),
            (false, Product::X2),
            (true, Product::One),
            (true, Product::CauchyF),
            (true, Product::CauchyF2),
        ];
        for s in [0.2, 0.5, 1.0] {
            for err in [ErrorModel::laplace(s).unwrap(), ErrorModel::gaussian(s).unwrap()] {
                for (cf, g) in pairs {
                    let w = if cf { WeightSpec::n_c(s) } else { WeightSpec::n(s) };
                    let plan = InversionPlan::numeric(None, 1 << 14);
                    let num = DeconvIntegral::new(&w, &err, g, &plan, &KernelSpec::default()).unwrap();
                    assert!(!num.is_closed());
                    for k in 0..=60 {
                        let z = -3.0 + 0.1 * k as f64;
                        let c = deconv_closed(&w, &err, g, z).unwrap();
                        let n = num.eval(z);
                        assert!((c - n).abs() < 1e-6, "{} {:?} {g:?} s={s} z={z}: {c} vs {n}", w.label(), err.kind);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_rejects_unsupported() {
        let g = ErrorModel::gaussian(1.0).unwrap();
        assert!(matches!(
            deconv_closed(&WeightSpec::sc(), &g, Product::One, 0.0),
            Err(Error::Unsupported(_))
        ));
        assert!(deconv_closed(&WeightSpec::n(0.5), &g, Product::One, 0.0).is_err());
    }

    #[test]
    fn numeric_matches_closed_gaussian_n() {
        let g = ErrorModel::gaussian(1.0).unwrap();
        let w = WeightSpec::n(1.0);
        let plan = InversionPlan::numeric(Some(8.0), 4096);
        let v = deconv_numeric(|t| weighted_product_fourier(&w, Product::One, t).unwrap(), &g, 0.0, &plan)
            .unwrap();
        assert!((v - SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn unit_cf_recovers_weight() {
        // Laplace noise with a vanishing scale has f_eps* ≡ 1 to machine precision on [-4, 4].
        let tiny = ErrorModel::laplace(1e-12).unwrap();
        let plan = InversionPlan::numeric(Some(4.0), 16384);
        let v = deconv_numeric(sc_t(Product::One), &tiny, 1.0, &plan).unwrap();
        let expect = (2.0 * 1f64.sin()).powi(4) / (2.0 * PI);
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
    }

    #[test]
    fn odd_product_vanishes_at_origin() {
        let plan = InversionPlan::numeric(Some(4.0), 4096);
        for err in [ErrorModel::laplace(0.5).unwrap(), ErrorModel::gaussian(0.5).unwrap()] {
            let v = deconv_numeric(sc_t(Product::X), &err, 0.0, &plan).unwrap();
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let g = ErrorModel::gaussian(50.0).unwrap();
        let plan = InversionPlan::numeric(Some(4.0), 256);
        assert!(matches!(
            deconv_numeric(sc_t(Product::One), &g, 0.0, &plan),
            Err(Error::NonFiniteIntegrand { .. })
        ));
    }

    #[test]
    fn plan_validation() {
        assert!(InversionPlan::with_points(100).validate().is_err());
        assert!(InversionPlan::with_points(3000).validate().is_err());
        assert!(InversionPlan::numeric(Some(-1.0), 1024).validate().is_err());
        assert!(InversionPlan::with_points(256).validate().is_ok());
        let g = ErrorModel::gaussian(1.0).unwrap();
        assert!(deconv_numeric(sc_t(Product::One), &g, 0.0, &InversionPlan::with_points(512)).is_err());
    }

    /// `SC''` by differentiating `(8/pi) s^4` with `s = sin x / x`.
    fn sc_second(x: f64) -> f64 {
        let s = x.sin() / x;
        let s1 = (x * x.cos() - x.sin()) / (x * x);
        let s2 = -s - 2.0 * s1 / x;
        8.0 / PI * (12.0 * s * s * s1 * s1 + 4.0 * s.powi(3) * s2)
    }

    #[test]
    fn laplace_shortcut_cross_checks() {
        let l = ErrorModel::laplace(1.0).unwrap();
        let n = WeightSpec::n(1.0);
        let nd2 = |x: f64| (x * x / 4.0 - 0.5) * n.eval(x);
        assert!((laplace_shortcut(|x| n.eval(x), nd2, &l, 0.0).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(laplace_shortcut(|_| 3.0, |_| 0.0, &l, 0.4).unwrap(), 3.0);

        let l = ErrorModel::laplace(0.6).unwrap();
        let sc = WeightSpec::sc();
        let short = laplace_shortcut(|x| sc.eval(x), sc_second, &l, 0.7).unwrap();
        let plan = InversionPlan::numeric(Some(4.0), 16384);
        let grid = deconv_numeric(sc_t(Product::One), &l, 0.7, &plan).unwrap();
        assert!((short - grid).abs() < 1e-6, "{short} vs {grid}");

        assert!(laplace_shortcut(|x| x, |_| 0.0, &ErrorModel::gaussian(1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn kernel_variants() {
        let err = ErrorModel::laplace(0.4).unwrap();
        let plan = InversionPlan::numeric(Some(4.0), 4096);
        for z in [-1.3, 0.0, 0.8] {
            let base = deconv_numeric(sc_t(Product::X2), &err, z, &plan).unwrap();
            let inf = kernel_deconv(sc_t(Product::X2), &err, z, &KernelSpec::default(), &plan).unwrap();
            assert_eq!(base.to_bits(), inf.to_bits());
        }
        let cut = kernel_deconv(
            sc_t(Product::One),
            &err,
            0.0,
            &KernelSpec::indicator(Cutoff::Finite(2.0)),
            &plan,
        )
        .unwrap();
        let short = deconv_numeric(sc_t(Product::One), &err, 0.0, &InversionPlan::numeric(Some(2.0), 2048))
            .unwrap();
        assert!((cut - short).abs() < 1e-12, "{cut} vs {short}");
        assert!(KernelSpec::indicator(Cutoff::Finite(0.0)).validate().is_err());
        assert!(kernel_deconv(
            sc_t(Product::One),
            &err,
            0.0,
            &KernelSpec::indicator(Cutoff::Finite(0.0)),
            &plan
        )
        .is_err());
    }

    #[test]
    fn tapered_kernel_shape() {
        let k = KernelSpec { cutoff: Cutoff::Finite(2.0), taper: 0.5 };
        assert_eq!(k.multiplier(0.9), 1.0);
        assert_eq!(k.multiplier(2.1), 0.0);
        assert!((k.multiplier(1.5) - 0.5).abs() < 1e-15);
        assert!(k.multiplier(1.99) < 1e-3);
        let ind = KernelSpec::indicator(Cutoff::Finite(2.0));
        assert_eq!(ind.multiplier(2.0), 0.5);
        assert_eq!(ind.multiplier(-1.999), 1.0);
    }

    #[test]
    fn fft_table_agrees_with_direct_sums() {
        for err in [ErrorModel::laplace(0.3).unwrap(), ErrorModel::gaussian(0.45).unwrap()] {
            for g in [Product::One, Product::X, Product::X2] {
                let grid = SpectralGrid::from_transform(
                    &WeightSpec::sc().product_transform(g).unwrap(),
                    &err,
                    4.0,
                    4096,
                    &KernelSpec::default(),
                )
                .unwrap();
                let table = InversionTable::build(&grid);
                for k in 0..400 {
                    let z = -7.0 + k as f64 * 0.0371;
                    let d = grid.eval(z);
                    let t = table.eval(z).unwrap();
                    assert!((d - t).abs() < 1e-7, "{g:?} z={z}: {d} vs {t}");
                }
                assert!(table.eval(TABLE_HALF_WIDTH + 1.0).is_none());
                assert!(table.eval(-TABLE_HALF_WIDTH - 1.0).is_none());
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let err = ErrorModel::laplace(0.5).unwrap();
        let grid = SpectralGrid::from_transform(
            &WeightSpec::sc().product_transform(Product::X).unwrap(),
            &err,
            4.0,
            2048,
            &KernelSpec::default(),
        )
        .unwrap();
        let h = 1e-5;
        for z in [-2.0, 0.1, 1.4] {
            let (_, d) = grid.eval_with_derivative(z);
            let fd = (grid.eval(z + h) - grid.eval(z - h)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_refinement_converges() {
        let err = ErrorModel::gaussian(0.3).unwrap();
        let w = WeightSpec::sc();
        let eval = |points| {
            deconv_numeric(|t| weighted_product_fourier(&w, Product::X2, t).unwrap(), &err, 0.37,
                &InversionPlan::numeric(Some(4.0), points)).unwrap()
        };
        let mut prev = eval(1 << 14);
        let cur = eval(1 << 15);
        // O(h^2) convergence from the kinks of (SC p2)*; it settles below 1e-8 at this size.
        assert!((cur - prev).abs() < 1e-8, "{}", (cur - prev).abs());
        prev = cur;
        assert!((eval(1 << 16) - prev).abs() < 1e-8);
        let _ = sc_fourier(0.0);
    }

    #[test]
    fn continuity_in_z() {
        let err = ErrorModel::laplace(0.5).unwrap();
        let w = WeightSpec::sc();
        let pt = w.product_transform(Product::One).unwrap();
        let plan = InversionPlan::numeric(Some(4.0), 4096);
        // Lipschitz bound (1/2pi) ∫ |t phi*(t)| / f*(t) dt by trapezoid.
        let h = 8.0 / 4096.0;
        let bound: f64 = (0..=4096)
            .map(|m| {
                let t = -4.0 + m as f64 * h;
                (t * pt.eval(t)).norm() / err.cf(t) * h
            })
            .sum::<f64>()
            / (2.0 * PI);
        let dz = 1e-3;
        for k in 0..50 {
            let z = -2.5 + 0.1 * k as f64;
            let a = deconv_numeric(|t| pt.eval(t), &err, z, &plan).unwrap();
            let b = deconv_numeric(|t| pt.eval(t), &err, z + dz, &plan).unwrap();
            assert!((a - b).abs() <= bound * dz * 1.0001);
        }
    }
}

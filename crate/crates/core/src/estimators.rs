//! Parameter estimators: the deconvolution contrast minimisers and the
//! naive, oracle and ARMA(1,1) baselines.
//!
//! For both regression families the contrast is a quadratic in the
//! parameter whose coefficients are sums of deconvolution integrals at the
//! lagged observations. Those sums are computed once per series
//! ([`ContrastTerms`]) and reused for every parameter value.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::deconv::{DeconvIntegral, InversionPlan, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::noise::ErrorModel;
use crate::optim::{grid_scan, nelder_mead, NmOptions, ParamBox};
use crate::process::Family;
use crate::weights::{Product, WeightBase, WeightSpec};

/// Relative tolerance for near-singular normal equations.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Grid points per axis for the argmin start.
pub const GRID_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    DeconvN,
    DeconvSc,
    Oracle,
    Naive,
    Arma,
    DeconvGeneral,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 6] = [
        EstimatorTag::DeconvN,
        EstimatorTag::DeconvSc,
        EstimatorTag::Oracle,
        EstimatorTag::Naive,
        EstimatorTag::Arma,
        EstimatorTag::DeconvGeneral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::DeconvN => "deconv-n",
            EstimatorTag::DeconvSc => "deconv-sc",
            EstimatorTag::Oracle => "oracle",
            EstimatorTag::Naive => "naive",
            EstimatorTag::Arma => "arma",
            EstimatorTag::DeconvGeneral => "deconv-general",
        }
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        EstimatorTag::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| format!("unknown estimator '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub tag: EstimatorTag,
    pub theta_hat: Vec<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateRecord {
    fn new(tag: EstimatorTag, theta_hat: Vec<f64>) -> Self {
        EstimateRecord { tag, theta_hat, diagnostics: BTreeMap::new() }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// Default parameter box: `[-0.99, 0.99] x [-5, 5]` (linear), `[-10, 10]` (Cauchy).
pub fn default_box(family: Family) -> ParamBox {
    match family {
        Family::Linear => ParamBox { lower: vec![-0.99, -5.0], upper: vec![0.99, 5.0] },
        Family::Cauchy => ParamBox { lower: vec![-10.0], upper: vec![10.0] },
    }
}

/// θ-free sums making up the contrast of one series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContrastTerms {
    /// Sums over `k` of `Z_k^2 I0`, `Z_k I0`, `Z_k I1`, `I0`, `I1`, `I2`
    /// with the integrals at `Z_{k-1}`.
    Linear { n: usize, zz0: f64, z0: f64, z1: f64, s0: f64, s1: f64, s2: f64, spread: f64 },
    /// Sums of `Z_k^2 I_w` (when the weight allows it), `Z_k I_wf` and `I_wf2`.
    Cauchy { n: usize, zzw: Option<f64>, zwf: f64, wf2: f64, wf2_abs: f64 },
}

impl ContrastTerms {
    pub fn family(&self) -> Family {
        match self {
            ContrastTerms::Linear { .. } => Family::Linear,
            ContrastTerms::Cauchy { .. } => Family::Cauchy,
        }
    }

    /// `S_n(theta)`. For a Cauchy weight without an integrable `w*` the
    /// θ-free term is left out; the minimiser is unchanged.
    pub fn contrast(&self, theta: &[f64]) -> f64 {
        match *self {
            ContrastTerms::Linear { n, zz0, z0, z1, s0, s1, s2, .. } => {
                let (a, b) = (theta[0], theta[1]);
                (zz0 - 2.0 * b * z0 + b * b * s0 + a * a * s2 - 2.0 * a * z1 + 2.0 * a * b * s1) / n as f64
            }
            ContrastTerms::Cauchy { n, zzw, zwf, wf2, .. } => {
                let t = theta[0];
                (zzw.unwrap_or(0.0) + t * t * wf2 - 2.0 * t * zwf) / n as f64
            }
        }
    }

    /// Hessian diagonal, used as the curvature scale.
    pub fn curvature(&self) -> f64 {
        match *self {
            ContrastTerms::Linear { n, s0, s2, .. } => 2.0 * s0.abs().max(s2.abs()) / n as f64,
            ContrastTerms::Cauchy { n, wf2, .. } => 2.0 * wf2.abs() / n as f64,
        }
    }

    /// Stationary point of the quadratic contrast.
    pub fn closed_form(&self) -> Result<Vec<f64>> {
        match *self {
            ContrastTerms::Linear { z0, z1, s0, s1, s2, spread, .. } => {
                if !(spread > 0.0) {
                    return Err(Error::DegenerateDesign("lagged observations are constant".into()));
                }
                let den = s2 * s0 - s1 * s1;
                if !(den.abs() > DEGENERACY_TOL * (s2 * s0).abs()) {
                    return Err(Error::DegenerateDesign(format!("normal equations are singular (det {den:e})")));
                }
                let a = (z1 * s0 - z0 * s1) / den;
                let b = z0 / s0 - a * s1 / s0;
                Ok(vec![a, b])
            }
            ContrastTerms::Cauchy { zwf, wf2, wf2_abs, .. } => {
                if !(wf2.abs() > DEGENERACY_TOL * wf2_abs) {
                    return Err(Error::DegenerateDesign(format!("sum of I_wf2 vanishes ({wf2:e})")));
                }
                Ok(vec![zwf / wf2])
            }
        }
    }

    /// Central-difference gradient norm of the contrast.
    pub fn gradient_norm(&self, theta: &[f64]) -> f64 {
        let mut g2 = 0.0;
        for k in 0..theta.len() {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let mut p = theta.to_vec();
            p[k] = theta[k] + h;
            let fp = self.contrast(&p);
            p[k] = theta[k] - h;
            let fm = self.contrast(&p);
            g2 += ((fp - fm) / (2.0 * h)).powi(2);
        }
        g2.sqrt()
    }
}

/// Deconvolution integrals for one weight, prepared once and applied to many series.
#[derive(Debug)]
pub struct DeconvEngine {
    family: Family,
    weight: WeightSpec,
    integrals: Vec<(Product, DeconvIntegral)>,
}

impl DeconvEngine {
    pub fn new(
        family: Family,
        weight: WeightSpec,
        err: &ErrorModel,
        plan: &InversionPlan,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        weight.validate()?;
        if weight.cauchy_factor != (family == Family::Cauchy) {
            return Err(Error::Unsupported(format!(
                "weight {} does not belong to the {family:?} family",
                weight.label()
            )));
        }
        let products: Vec<Product> = match family {
            Family::Linear => vec![Product::One, Product::X, Product::X2],
            Family::Cauchy => {
                let mut p = vec![Product::CauchyF, Product::CauchyF2];
                if weight.product_transform(Product::One).is_ok() {
                    p.push(Product::One);
                }
                p
            }
        };
        let integrals = products
            .into_iter()
            .map(|g| Ok((g, DeconvIntegral::new(&weight, err, g, plan, kernel)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DeconvEngine { family, weight, integrals })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    fn values(&self, g: Product, zs: &[f64]) -> Option<Vec<f64>> {
        self.integrals.iter().find(|(p, _)| *p == g).map(|(_, i)| i.eval_many(zs))
    }

    pub fn terms(&self, z: &[f64]) -> Result<ContrastTerms> {
        if z.len() < 2 {
            return Err(invalid("the contrast needs at least two observations"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("observations must be finite"));
        }
        let (lag, resp) = (&z[..z.len() - 1], &z[1..]);
        let n = lag.len();
        let get = |g| self.values(g, lag).expect("prepared product");
        Ok(match self.family {
            Family::Linear => {
                let (i0, i1, i2) = (get(Product::One), get(Product::X), get(Product::X2));
                let mut t = [0.0; 6];
                for k in 0..n {
                    let y = resp[k];
                    t[0] += y * y * i0[k];
                    t[1] += y * i0[k];
                    t[2] += y * i1[k];
                    t[3] += i0[k];
                    t[4] += i1[k];
                    t[5] += i2[k];
                }
                let (lo, hi) = lag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                ContrastTerms::Linear { n, zz0: t[0], z0: t[1], z1: t[2], s0: t[3], s1: t[4], s2: t[5], spread: hi - lo }
            }
            Family::Cauchy => {
                let (wf, wf2) = (get(Product::CauchyF), get(Product::CauchyF2));
                let w = self.values(Product::One, lag);
                let zwf = resp.iter().zip(&wf).map(|(y, v)| y * v).sum();
                let zzw = w.map(|w| resp.iter().zip(&w).map(|(y, v)| y * y * v).sum());
                ContrastTerms::Cauchy {
                    n,
                    zzw,
                    zwf,
                    wf2: wf2.iter().sum(),
                    wf2_abs: wf2.iter().map(|v| v.abs()).sum(),
                }
            }
        })
    }
}

fn family_of(w: &WeightSpec) -> Family {
    if w.cauchy_factor {
        Family::Cauchy
    } else {
        Family::Linear
    }
}

fn deconv_tag(w: &WeightSpec) -> EstimatorTag {
    match w.base {
        WeightBase::N => EstimatorTag::DeconvN,
        WeightBase::SC => EstimatorTag::DeconvSc,
    }
}

/// `S_n(theta)` for the series `z`; the family follows from the weight.
pub fn contrast(theta: &[f64], z: &[f64], w: &WeightSpec, err: &ErrorModel, plan: &InversionPlan) -> Result<f64> {
    let family = family_of(w);
    if theta.len() != family.dim() {
        return Err(invalid(format!("expected {} parameters, got {}", family.dim(), theta.len())));
    }
    let terms = DeconvEngine::new(family, *w, err, plan, &KernelSpec::default())?.terms(z)?;
    Ok(terms.contrast(theta))
}

fn closed_record(tag: EstimatorTag, terms: &ContrastTerms) -> Result<EstimateRecord> {
    let theta = terms.closed_form()?;
    let c = terms.contrast(&theta);
    let g = terms.gradient_norm(&theta);
    Ok(EstimateRecord::new(tag, theta).with("iterations", 0.0).with("contrast", c).with("gradient_norm", g))
}

/// Closed-form minimiser of the linear-family contrast.
pub fn estimate_linear_closed(z: &[f64], w: &WeightSpec, err: &ErrorModel, plan: &InversionPlan) -> Result<EstimateRecord> {
    let engine = DeconvEngine::new(Family::Linear, *w, err, plan, &KernelSpec::default())?;
    closed_record(deconv_tag(w), &engine.terms(z)?)
}

/// Closed-form minimiser of the Cauchy-family contrast.
pub fn estimate_cauchy_closed(z: &[f64], w: &WeightSpec, err: &ErrorModel, plan: &InversionPlan) -> Result<EstimateRecord> {
    let engine = DeconvEngine::new(Family::Cauchy, *w, err, plan, &KernelSpec::default())?;
    closed_record(deconv_tag(w), &engine.terms(z)?)
}

/// Grid scan plus bounded Nelder-Mead on precomputed contrast terms.
pub fn argmin_terms(tag: EstimatorTag, terms: &ContrastTerms, bx: &ParamBox) -> Result<EstimateRecord> {
    bx.validate()?;
    if bx.dim() != terms.family().dim() {
        return Err(invalid(format!("box has {} sides, the family needs {}", bx.dim(), terms.family().dim())));
    }
    let f = |p: &[f64]| terms.contrast(p);
    let (start, _) = grid_scan(f, bx, GRID_POINTS);
    let r = nelder_mead(f, &start, bx, &NmOptions::default());
    let g = terms.gradient_norm(&r.theta);
    let on_boundary = bx.on_boundary(&r.theta, 1e-6);
    Ok(EstimateRecord::new(tag, r.theta)
        .with("iterations", r.iterations as f64)
        .with("contrast", r.value)
        .with("gradient_norm", g)
        .with("on_boundary", f64::from(u8::from(on_boundary)))
        .with("converged", f64::from(u8::from(r.converged))))
}

/// Numerical argmin of the contrast over `bx`.
pub fn estimate_argmin(
    z: &[f64],
    bx: &ParamBox,
    w: &WeightSpec,
    err: &ErrorModel,
    plan: &InversionPlan,
) -> Result<EstimateRecord> {
    let engine = DeconvEngine::new(family_of(w), *w, err, plan, &KernelSpec::default())?;
    argmin_terms(deconv_tag(w), &engine.terms(z)?, bx)
}

/// Argmin of the contrast built from kernel-truncated integrals.
pub fn estimate_general(
    z: &[f64],
    bx: &ParamBox,
    w: &WeightSpec,
    err: &ErrorModel,
    kernel: &KernelSpec,
    plan: &InversionPlan,
) -> Result<EstimateRecord> {
    let engine = DeconvEngine::new(family_of(w), *w, err, plan, kernel)?;
    argmin_terms(EstimatorTag::DeconvGeneral, &engine.terms(z)?, bx)
}

fn least_squares(tag: EstimatorTag, s: &[f64], family: Family) -> Result<EstimateRecord> {
    if s.len() < 2 {
        return Err(invalid("least squares needs at least two observations"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(invalid("observations must be finite"));
    }
    let (lag, resp) = (&s[..s.len() - 1], &s[1..]);
    let n = lag.len() as f64;
    let scale2 = lag.iter().fold(0.0f64, |m, v| m.max(v * v));
    let theta = match family {
        Family::Linear => {
            let mx = lag.iter().sum::<f64>() / n;
            let my = resp.iter().sum::<f64>() / n;
            let sxx: f64 = lag.iter().map(|x| (x - mx) * (x - mx)).sum();
            let sxy: f64 = lag.iter().zip(resp).map(|(x, y)| (x - mx) * (y - my)).sum();
            if !(sxx > DEGENERACY_TOL * n * scale2) {
                return Err(Error::DegenerateDesign("lagged series has no spread".into()));
            }
            let a = sxy / sxx;
            vec![a, my - a * mx]
        }
        Family::Cauchy => {
            let f = |x: f64| 1.0 / (1.0 + x * x);
            let sff: f64 = lag.iter().map(|&x| f(x) * f(x)).sum();
            let syf: f64 = lag.iter().zip(resp).map(|(&x, y)| y * f(x)).sum();
            vec![syf / sff]
        }
    };
    Ok(EstimateRecord::new(tag, theta))
}

/// Least squares with the observations standing in for the latent states.
pub fn estimate_naive(z: &[f64], family: Family) -> Result<EstimateRecord> {
    least_squares(EstimatorTag::Naive, z, family)
}

/// Least squares on the latent series.
pub fn estimate_oracle(x: &[f64], family: Family) -> Result<EstimateRecord> {
    least_squares(EstimatorTag::Oracle, x, family)
}

/// `|a - beta|` below this flags weak identification of the ARMA fit.
pub const ARMA_WEAK_GAP: f64 = 0.1;
const ARMA_BOUND: f64 = 0.999;

fn autocov(y: &[f64], lag: usize) -> f64 {
    let n = y.len();
    let m = y.iter().sum::<f64>() / n as f64;
    (0..n - lag).map(|i| (y[i] - m) * (y[i + lag] - m)).sum::<f64>() / n as f64
}

/// MA coefficient of `Y = c + eta - beta eta_{-1}` with lag-one autocorrelation `rho`.
fn ma_from_rho(rho: f64) -> f64 {
    let r = (-rho).clamp(-0.499, 0.499);
    if r.abs() < 1e-12 {
        0.0
    } else {
        (1.0 - (1.0 - 4.0 * r * r).sqrt()) / (2.0 * r)
    }
}

/// Conditional sum of squares ARMA(1,1) fit of
/// `Z_i - a Z_{i-1} = b + eta_i - beta eta_{i-1}`.
pub fn estimate_arma(z: &[f64]) -> Result<EstimateRecord> {
    if z.len() < 20 {
        return Err(invalid("the ARMA fit needs at least 20 observations"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(invalid("observations must be finite"));
    }
    let g1 = autocov(z, 1);
    let g0 = autocov(z, 0);
    let scale2 = z.iter().fold(0.0f64, |m, v| m.max(v * v));
    if !(g0 > DEGENERACY_TOL * scale2) {
        return Err(Error::DegenerateDesign("series has no spread".into()));
    }
    let a0 = if g1.abs() > 1e-12 * g0 { (autocov(z, 2) / g1).clamp(-0.95, 0.95) } else { 0.0 };
    let y: Vec<f64> = z.windows(2).map(|p| p[1] - a0 * p[0]).collect();
    let beta0 = ma_from_rho(autocov(&y, 1) / autocov(&y, 0).max(f64::MIN_POSITIVE));
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let b0 = mean * (1.0 - a0);
    let span = 10.0 * (mean.abs() + g0.sqrt() + 1.0);

    let n = (z.len() - 1) as f64;
    let css = |p: &[f64]| {
        let (a, b, beta) = (p[0], p[1], p[2]);
        let mut eta = 0.0;
        let mut ss = 0.0;
        for w in z.windows(2) {
            eta = w[1] - a * w[0] - b + beta * eta;
            ss += eta * eta;
        }
        ss / n
    };
    let bx = ParamBox {
        lower: vec![-ARMA_BOUND, b0 - span, -ARMA_BOUND],
        upper: vec![ARMA_BOUND, b0 + span, ARMA_BOUND],
    };
    let opts = NmOptions { max_iter: 2000, f_tol: 1e-12 * g0.max(1e-300), x_tol: 1e-7, initial_step: 0.02 };
    let r = nelder_mead(css, &[a0, b0, beta0], &bx, &opts);
    let weak = (r.theta[0] - r.theta[2]).abs() < ARMA_WEAK_GAP;
    Ok(EstimateRecord::new(EstimatorTag::Arma, vec![r.theta[0], r.theta[1]])
        .with("beta", r.theta[2])
        .with("iterations", r.iterations as f64)
        .with("contrast", r.value)
        .with("converged", f64::from(u8::from(r.converged)))
        .with("weak_identification", f64::from(u8::from(weak))))
}

/// Estimator settings shared by every replication of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    #[serde(default)]
    pub plan: InversionPlan,
    /// Kernel for the general estimator.
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Base weight for the general estimator.
    #[serde(default = "default_general_weight")]
    pub general_weight: WeightBase,
    /// Parameter box for argmin-based estimators; the family default when absent.
    #[serde(default)]
    pub theta_box: Option<ParamBox>,
}

fn default_general_weight() -> WeightBase {
    WeightBase::SC
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            plan: InversionPlan::default(),
            kernel: KernelSpec::default(),
            general_weight: WeightBase::SC,
            theta_box: None,
        }
    }
}

/// Estimators with their deconvolution integrals prepared for one noise law.
#[derive(Debug)]
pub struct EstimatorSuite {
    family: Family,
    theta_box: ParamBox,
    engines: BTreeMap<EstimatorTag, DeconvEngine>,
}

impl EstimatorSuite {
    pub fn new(family: Family, err: &ErrorModel, tags: &[EstimatorTag], settings: &EstimatorSettings) -> Result<Self> {
        err.validate()?;
        let theta_box = settings.theta_box.clone().unwrap_or_else(|| default_box(family));
        theta_box.validate()?;
        if theta_box.dim() != family.dim() {
            return Err(invalid(format!("box has {} sides, the family needs {}", theta_box.dim(), family.dim())));
        }
        let mut engines = BTreeMap::new();
        for &tag in tags {
            let (base, kernel) = match tag {
                EstimatorTag::DeconvN => (WeightBase::N, KernelSpec::default()),
                EstimatorTag::DeconvSc => (WeightBase::SC, KernelSpec::default()),
                EstimatorTag::DeconvGeneral => (settings.general_weight, settings.kernel),
                EstimatorTag::Arma if family != Family::Linear => {
                    return Err(Error::Unsupported("the ARMA baseline applies to the linear family only".into()))
                }
                _ => continue,
            };
            if engines.contains_key(&tag) {
                continue;
            }
            let w = WeightSpec::for_family(base, family, err.sigma_eps);
            engines.insert(tag, DeconvEngine::new(family, w, err, &settings.plan, &kernel)?);
        }
        Ok(EstimatorSuite { family, theta_box, engines })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Runs one estimator. `x` is needed by the oracle only.
    pub fn run(&self, tag: EstimatorTag, z: &[f64], x: Option<&[f64]>) -> Result<EstimateRecord> {
        match tag {
            EstimatorTag::Naive => estimate_naive(z, self.family),
            EstimatorTag::Oracle => {
                let x = x.ok_or_else(|| invalid("the oracle estimator needs the latent series"))?;
                estimate_oracle(x, self.family)
            }
            EstimatorTag::Arma => estimate_arma(z),
            EstimatorTag::DeconvN | EstimatorTag::DeconvSc => {
                closed_record(tag, &self.engine(tag)?.terms(z)?)
            }
            EstimatorTag::DeconvGeneral => argmin_terms(tag, &self.engine(tag)?.terms(z)?, &self.theta_box),
        }
    }

    fn engine(&self, tag: EstimatorTag) -> Result<&DeconvEngine> {
        self.engines
            .get(&tag)
            .ok_or_else(|| invalid(format!("estimator {tag} was not prepared")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deconv::Cutoff;
    use crate::noise::ErrorKind;
    use crate::process::{preset_case_a, preset_cauchy};
    use crate::rng::{split_stream, stream};

    fn case_a(n: usize, s2n: f64, kind: ErrorKind, seed: u64) -> (crate::process::TrajectoryPair, ErrorModel) {
        let s = preset_case_a(n, s2n, kind).unwrap();
        (s.simulate(&mut stream(seed)).unwrap(), s.error)
    }

    #[test]
    fn tag_names_round_trip() {
        for t in EstimatorTag::ALL {
            assert_eq!(t.as_str().parse::<EstimatorTag>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert!("deconv".parse::<EstimatorTag>().is_err());
        assert_eq!("DECONV_SC".parse::<EstimatorTag>().unwrap(), EstimatorTag::DeconvSc);
    }

    #[test]
    fn contrast_at_origin_reduces() {
        let (t, err) = case_a(300, 1.0, ErrorKind::Laplace, 1);
        let w = WeightSpec::n(err.sigma_eps);
        let plan = InversionPlan::default();
        let s = contrast(&[0.0, 0.0], &t.z, &w, &err, &plan).unwrap();
        let expect: f64 = (1..t.z.len())
            .map(|k| t.z[k] * t.z[k] * crate::deconv::deconv_closed(&w, &err, Product::One, t.z[k - 1]).unwrap())
            .sum::<f64>()
            / (t.z.len() - 1) as f64;
        assert!((s - expect).abs() < 1e-12 * expect.abs());
        assert!(contrast(&[0.0], &t.z, &w, &err, &plan).is_err());
        assert!(contrast(&[0.0, 0.0], &t.z[..1], &w, &err, &plan).is_err());
    }

    #[test]
    fn cauchy_contrast_is_quadratic() {
        let s = preset_cauchy(400, 1.5, ErrorKind::Gaussian).unwrap();
        let t = s.simulate(&mut stream(3)).unwrap();
        let w = WeightSpec::n_c(s.error.sigma_eps);
        let engine = DeconvEngine::new(Family::Cauchy, w, &s.error, &InversionPlan::default(), &KernelSpec::default()).unwrap();
        let terms = engine.terms(&t.z).unwrap();
        let lead = match terms {
            ContrastTerms::Cauchy { n, wf2, .. } => wf2 / n as f64,
            _ => unreachable!(),
        };
        let f = |x: f64| terms.contrast(&[x]);
        for x in [-2.0, 0.3, 1.7] {
            let second = (f(x + 0.5) - 2.0 * f(x) + f(x - 0.5)) / 0.25;
            assert!((second / 2.0 - lead).abs() < 1e-9 * lead.abs().max(1.0));
        }
    }

    #[test]
    fn linear_closed_matches_argmin() {
        let bx = default_box(Family::Linear);
        for seed in 0..3 {
            let (t, err) = case_a(2000, 0.5, ErrorKind::Laplace, seed);
            for w in [WeightSpec::n(err.sigma_eps), WeightSpec::sc()] {
                let plan = InversionPlan::default();
                let c = estimate_linear_closed(&t.z, &w, &err, &plan).unwrap();
                let a = estimate_argmin(&t.z, &bx, &w, &err, &plan).unwrap();
                for k in 0..2 {
                    assert!((c.theta_hat[k] - a.theta_hat[k]).abs() < 1e-4, "{c:?} {a:?}");
                }
                assert!(c.diagnostics["gradient_norm"] < 1e-6 * 1.0f64.max(c.diagnostics["contrast"]));
                assert_eq!(a.diagnostics["on_boundary"], 0.0);
            }
        }
    }

    #[test]
    fn cauchy_closed_matches_argmin() {
        let s = preset_cauchy(2000, 1.5, ErrorKind::Laplace).unwrap();
        let bx = default_box(Family::Cauchy);
        for seed in 0..3 {
            let t = s.simulate(&mut stream(seed)).unwrap();
            for w in [WeightSpec::n_c(s.error.sigma_eps), WeightSpec::sc_c()] {
                let plan = InversionPlan::default();
                let c = estimate_cauchy_closed(&t.z, &w, &s.error, &plan).unwrap();
                let a = estimate_argmin(&t.z, &bx, &w, &s.error, &plan).unwrap();
                assert!((c.theta_hat[0] - a.theta_hat[0]).abs() < 1e-4, "{c:?} {a:?}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_closed_form() {
        let (t, err) = case_a(1000, 1.5, ErrorKind::Gaussian, 5);
        let engine = DeconvEngine::new(Family::Linear, WeightSpec::sc(), &err, &InversionPlan::default(), &KernelSpec::default()).unwrap();
        let terms = engine.terms(&t.z).unwrap();
        let theta = terms.closed_form().unwrap();
        assert!(terms.gradient_norm(&theta) < 1e-6 * terms.curvature());
        let off = [theta[0] + 0.1, theta[1]];
        assert!(terms.gradient_norm(&off) > 1e-3 * terms.curvature());
    }

    #[test]
    fn constant_series_is_degenerate() {
        let z = vec![0.4; 50];
        let err = ErrorModel::laplace(0.3).unwrap();
        let plan = InversionPlan::default();
        for w in [WeightSpec::n(0.3), WeightSpec::sc()] {
            assert!(matches!(estimate_linear_closed(&z, &w, &err, &plan), Err(Error::DegenerateDesign(_))));
        }
        assert!(matches!(estimate_naive(&z, Family::Linear), Err(Error::DegenerateDesign(_))));
        assert!(matches!(estimate_arma(&z), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn box_excluding_truth_hits_boundary() {
        let (t, err) = case_a(2000, 0.5, ErrorKind::Laplace, 8);
        let bx = ParamBox::new(vec![-0.2, -1.0], vec![0.2, 1.0]).unwrap();
        let r = estimate_argmin(&t.z, &bx, &WeightSpec::sc(), &err, &InversionPlan::default()).unwrap();
        assert_eq!(r.diagnostics["on_boundary"], 1.0);
        assert!((r.theta_hat[0] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn shrinking_box_keeps_optimum() {
        let (t, err) = case_a(2000, 1.0, ErrorKind::Gaussian, 9);
        let w = WeightSpec::n(err.sigma_eps);
        let plan = InversionPlan::default();
        let r = estimate_argmin(&t.z, &default_box(Family::Linear), &w, &err, &plan).unwrap();
        let (a, b) = (r.theta_hat[0], r.theta_hat[1]);
        let small = ParamBox::new(vec![a - 0.05, b - 0.05], vec![a + 0.05, b + 0.05]).unwrap();
        let s = estimate_argmin(&t.z, &small, &w, &err, &plan).unwrap();
        assert!((s.theta_hat[0] - a).abs() < 1e-6 && (s.theta_hat[1] - b).abs() < 1e-6);
    }

    #[test]
    fn general_estimator_kernel_cases() {
        let (t, err) = case_a(1500, 0.5, ErrorKind::Laplace, 4);
        let bx = default_box(Family::Linear);
        let plan = InversionPlan::default();
        for w in [WeightSpec::n(err.sigma_eps), WeightSpec::sc()] {
            let base = estimate_argmin(&t.z, &bx, &w, &err, &plan).unwrap();
            let inf = estimate_general(&t.z, &bx, &w, &err, &KernelSpec::indicator(Cutoff::Infinite), &plan).unwrap();
            assert_eq!(base.theta_hat, inf.theta_hat);
            assert_eq!(base.diagnostics, inf.diagnostics);
        }
        let base = estimate_argmin(&t.z, &bx, &WeightSpec::sc(), &err, &plan).unwrap();
        let c4 = estimate_general(&t.z, &bx, &WeightSpec::sc(), &err, &KernelSpec::indicator(Cutoff::Finite(4.0)), &plan)
            .unwrap();
        for k in 0..2 {
            assert!((base.theta_hat[k] - c4.theta_hat[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn naive_equals_oracle_on_latent_data() {
        let (t, _) = case_a(500, 1.0, ErrorKind::Laplace, 2);
        for fam in [Family::Linear, Family::Cauchy] {
            let a = estimate_naive(&t.x, fam).unwrap();
            let b = estimate_oracle(&t.x, fam).unwrap();
            assert_eq!(a.theta_hat, b.theta_hat);
        }
    }

    #[test]
    fn oracle_residuals_orthogonal() {
        let (t, _) = case_a(1000, 1.0, ErrorKind::Laplace, 6);
        let r = estimate_oracle(&t.x, Family::Linear).unwrap();
        let (a, b) = (r.theta_hat[0], r.theta_hat[1]);
        let res: Vec<f64> = t.x.windows(2).map(|w| w[1] - a * w[0] - b).collect();
        let s1: f64 = res.iter().sum();
        let sx: f64 = res.iter().zip(&t.x).map(|(e, x)| e * x).sum();
        assert!(s1.abs() < 1e-10 && sx.abs() < 1e-10, "{s1} {sx}");
    }

    #[test]
    fn oracle_cauchy_matches_ratio() {
        let x = [0.2, 1.1, -0.4, 0.9, 1.3];
        let f = |v: f64| 1.0 / (1.0 + v * v);
        let num: f64 = (1..5).map(|i| x[i] * f(x[i - 1])).sum();
        let den: f64 = (1..5).map(|i| f(x[i - 1]).powi(2)).sum();
        let r = estimate_oracle(&x, Family::Cauchy).unwrap();
        assert!((r.theta_hat[0] - num / den).abs() < 1e-15);
    }

    #[test]
    fn arma_recovers_synthetic_parameters() {
        use rand_distr::{Distribution, StandardNormal};
        let (a, b, beta) = (0.6, 0.4, 0.3);
        let mut est = Vec::new();
        for r in 0..20 {
            let mut rng = split_stream(41, r);
            let mut z = vec![b / (1.0 - a)];
            let mut prev: f64 = StandardNormal.sample(&mut rng);
            for _ in 0..2000 {
                let e: f64 = StandardNormal.sample(&mut rng);
                z.push(a * z.last().unwrap() + b + e - beta * prev);
                prev = e;
            }
            let rec = estimate_arma(&z).unwrap();
            assert_eq!(rec.diagnostics["converged"], 1.0);
            est.push(rec.theta_hat[0]);
        }
        let m = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
        assert!((m - a).abs() < 3.0 * sd / (est.len() as f64).sqrt() + 0.01, "mean {m} sd {sd}");
    }

    #[test]
    fn arma_flags_weak_identification() {
        let mut rng = stream(12);
        let z: Vec<f64> = (0..500).map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let r = estimate_arma(&z).unwrap();
        assert_eq!(r.theta_hat.len(), 2);
        assert!(r.diagnostics.contains_key("weak_identification"));
        assert!(estimate_arma(&z[..10]).is_err());
    }

    #[test]
    fn ma_root_inverts_autocorrelation() {
        for beta in [-0.8, -0.3, 0.0, 0.4, 0.9] {
            let rho = -beta / (1.0 + beta * beta);
            assert!((ma_from_rho(rho) - beta).abs() < 1e-9);
        }
    }

    #[test]
    fn suite_dispatch() {
        let (t, err) = case_a(800, 0.5, ErrorKind::Laplace, 11);
        let tags = EstimatorTag::ALL;
        let suite = EstimatorSuite::new(Family::Linear, &err, &tags, &EstimatorSettings::default()).unwrap();
        for tag in tags {
            let r = suite.run(tag, &t.z, Some(&t.x)).unwrap();
            assert_eq!(r.tag, tag);
            assert_eq!(r.theta_hat.len(), 2);
        }
        assert!(suite.run(EstimatorTag::Oracle, &t.z, None).is_err());
        let direct = estimate_linear_closed(&t.z, &WeightSpec::sc(), &err, &InversionPlan::default()).unwrap();
        assert_eq!(suite.run(EstimatorTag::DeconvSc, &t.z, None).unwrap(), direct);
        assert!(EstimatorSuite::new(Family::Cauchy, &err, &[EstimatorTag::Arma], &EstimatorSettings::default()).is_err());
    }

    #[test]
    fn record_json_shape() {
        let r = EstimateRecord::new(EstimatorTag::Naive, vec![0.5, 0.25]).with("iterations", 0.0);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["tag"], "naive");
        assert_eq!(v["theta_hat"][1], 0.25);
        let back: EstimateRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}

//! Box-constrained minimisation: a coarse grid scan followed by Nelder-Mead.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Axis-aligned parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = ParamBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(invalid("box bounds must be non-empty and of equal length"));
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(invalid(format!("box side [{l}, {u}] is empty or unbounded")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| *l <= *v && *v <= *u)
    }

    /// Whether `x` lies within `tol` (relative to the side length) of a face.
    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).any(|((v, l), u)| {
            let w = u - l;
            (v - l).abs() <= tol * w || (u - v).abs() <= tol * w
        })
    }
}

/// Evaluates `f` on a regular grid with `per_axis` points per side and
/// returns the best point. Ties keep the lexicographically smallest point.
pub fn grid_scan(f: impl Fn(&[f64]) -> f64, bx: &ParamBox, per_axis: usize) -> (Vec<f64>, f64) {
    assert!(per_axis >= 2, "grid needs at least two points per axis");
    let d = bx.dim();
    let mut idx = vec![0usize; d];
    let mut best = (Vec::new(), f64::INFINITY);
    let mut point = vec![0.0; d];
    loop {
        for k in 0..d {
            let s = idx[k] as f64 / (per_axis - 1) as f64;
            point[k] = bx.lower[k] + s * (bx.upper[k] - bx.lower[k]);
        }
        let v = f(&point);
        if v < best.1 || best.0.is_empty() {
            best = (point.clone(), v);
        }
        // Odometer with the first axis slowest: points arrive in lexicographic order.
        let mut k = d;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter falls below this.
    pub x_tol: f64,
    /// Initial simplex edge as a fraction of each box side.
    pub initial_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { max_iter: 500, f_tol: 1e-10, x_tol: 1e-8, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead with every trial point projected onto the box.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    bx: &ParamBox,
    opts: &NmOptions,
) -> NmResult {
    let d = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut x0 = start.to_vec();
    bx.clamp(&mut x0);
    let mut simplex = vec![x0.clone()];
    for k in 0..d {
        let mut p = x0.clone();
        let step = opts.initial_step * (bx.upper[k] - bx.lower[k]);
        p[k] = if p[k] + step <= bx.upper[k] { p[k] + step } else { p[k] - step };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= opts.f_tol && diameter <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> =
            (0..d).map(|k| simplex[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64).collect();
        let toward = |coef: f64| {
            let mut p: Vec<f64> =
                (0..d).map(|k| centroid[k] + coef * (simplex[d][k] - centroid[k])).collect();
            bx.clamp(&mut p);
            p
        };

        let xr = toward(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = toward(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = toward(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = toward(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        for i in 1..=d {
            let p: Vec<f64> = (0..d).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
            values[i] = eval(&p);
            simplex[i] = p;
        }
    }
    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NmResult { theta: simplex[best].clone(), value: values[best], iterations, converged }
}

/// Grid scan to pick a start, then Nelder-Mead from it.
pub fn minimize(f: impl Fn(&[f64]) -> f64, bx: &ParamBox, per_axis: usize, opts: &NmOptions) -> NmResult {
    let (start, _) = grid_scan(&f, bx, per_axis);
    nelder_mead(&f, &start, bx, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box(d: usize) -> ParamBox {
        ParamBox::new(vec![-1.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(ParamBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(ParamBox::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(ParamBox::new(vec![f64::NEG_INFINITY], vec![1.0]).is_err());
        let b = unit_box(2);
        assert!(b.on_boundary(&[1.0, 0.0], 1e-9));
        assert!(!b.on_boundary(&[0.5, 0.0], 1e-9));
    }

    #[test]
    fn grid_scan_ties_pick_smallest() {
        let (x, v) = grid_scan(|_| 1.0, &unit_box(2), 5);
        assert_eq!(x, vec![-1.0, -1.0]);
        assert_eq!(v, 1.0);
        let (x, _) = grid_scan(|p| (p[0].abs() - 0.5).abs(), &unit_box(1), 5);
        assert_eq!(x, vec![-0.5]);
    }

    #[test]
    fn grid_scan_visits_every_point() {
        let count = std::cell::Cell::new(0);
        grid_scan(
            |_| {
                count.set(count.get() + 1);
                0.0
            },
            &unit_box(3),
            4,
        );
        assert_eq!(count.get(), 64);
    }

    #[test]
    fn rosenbrock() {
        let bx = ParamBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let r = minimize(f, &bx, 21, &NmOptions { max_iter: 5000, ..Default::default() });
        assert!(r.converged);
        assert!((r.theta[0] - 1.0).abs() < 1e-4 && (r.theta[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn constrained_minimum_on_face() {
        let bx = ParamBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let r = minimize(|p| (p[0] + 1.0).powi(2) + (p[1] - 0.3).powi(2), &bx, 11, &NmOptions::default());
        assert!(r.theta[0].abs() < 1e-6 && (r.theta[1] - 0.3).abs() < 1e-5, "{r:?}");
        assert!(bx.on_boundary(&r.theta, 1e-6));
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let r = minimize(
            |p| if p[0] > 0.5 { f64::NAN } else { (p[0] - 0.2).powi(2) },
            &unit_box(1),
            21,
            &NmOptions::default(),
        );
        assert!((r.theta[0] - 0.2).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn quadratic_minimum_found(cx in -0.9f64..0.9, cy in -0.9f64..0.9, s in 0.2f64..5.0) {
            let r = minimize(
                |p| s * (p[0] - cx).powi(2) + (p[1] - cy).powi(2) + 0.3 * (p[0] - cx) * (p[1] - cy),
                &unit_box(2),
                21,
                &NmOptions::default(),
            );
            prop_assert!((r.theta[0] - cx).abs() < 1e-4 && (r.theta[1] - cy).abs() < 1e-4);
            prop_assert!(unit_box(2).contains(&r.theta));
        }
    }
}

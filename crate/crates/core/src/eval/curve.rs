//! Area-delay tradeoff curves: dominated-sample removal, monotone cubic
//! Hermite interpolation, and w-optimal point search.

use serde::{Deserialize, Serialize};

use crate::objectives::{CostPoint, Objectives, ScalarWeight};

use super::{EvalError, Scaling};

/// One evaluator result: the raw (area, delay) achieved at a delay target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub target: f64,
    pub area: f64,
    pub delay: f64,
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson
/// slopes, weighted harmonic mean at interior knots). Constant outside the
/// knot range.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing and nonempty.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, EvalError> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(EvalError::EmptyCurve);
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EvalError::Malformed {
                reason: "interpolation knots must be strictly increasing".into(),
                output: String::new(),
            });
        }
        let d = slopes(&x, &y);
        Ok(Pchip { x, y, d })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || xq <= self.x[0] {
            return self.y[0];
        }
        if xq >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&xi| xi <= xq) - 1;
        let h = self.x[k + 1] - self.x[k];
        let t = (xq - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        // written around y0 so flat segments are exact; a monotone cubic
        // stays between its end values, so the clamp only removes rounding
        let v = y0 + h01 * (y1 - y0) + h * (h10 * self.d[k] + h11 * self.d[k + 1]);
        v.clamp(y0.min(y1), y0.max(y1))
    }
}

fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (s1, s2) = (delta[k - 1], delta[k]);
        if s1 == 0.0 || s2 == 0.0 || s1.signum() != s2.signum() {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / s1 + w2 / s2);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// One-sided three-point end slope, clipped to keep the end segment monotone.
fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() || s0 == 0.0 {
        0.0
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Non-dominated (delay, area) pairs sorted by delay ascending, so area is
/// strictly decreasing along the result.
pub fn tradeoff_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut front: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (d, a) in sorted {
        if front.last().is_none_or(|&(_, best)| a < best) {
            front.push((d, a));
        }
    }
    front
}

/// Removes dominated `(delay, area)` samples and interpolates the rest.
pub fn interpolate(samples: &[(f64, f64)]) -> Result<Pchip, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyCurve);
    }
    let front = tradeoff_frontier(samples);
    let (x, y) = front.into_iter().unzip();
    Pchip::new(x, y)
}

/// Evaluator samples for one design plus the interpolated tradeoff curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCurve {
    samples: Vec<CurveSample>,
    interp: Pchip,
}

impl CostCurve {
    pub fn new(mut samples: Vec<CurveSample>) -> Result<Self, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::EmptyCurve);
        }
        if samples.iter().any(|s| !(s.target.is_finite() && s.area.is_finite() && s.delay.is_finite())) {
            return Err(EvalError::NonFinite);
        }
        samples.sort_by(|a, b| a.target.total_cmp(&b.target));
        let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.delay, s.area)).collect();
        let interp = interpolate(&pts)?;
        Ok(CostCurve { samples, interp })
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn interpolant(&self) -> &Pchip {
        &self.interp
    }

    /// Raw area on the interpolated curve at a raw delay.
    pub fn area_at(&self, delay: f64) -> f64 {
        self.interp.eval(delay)
    }

    /// Non-dominated raw (area, delay) points.
    pub fn frontier(&self) -> Vec<Objectives> {
        self.interp.knots().map(|(d, a)| Objectives::new(a, d)).collect()
    }
}

const GRID_POINTS: usize = 1024;

/// The curve point minimizing the weighted, scaled cost; returned in scaled units.
pub fn w_optimal(curve: &CostCurve, w: ScalarWeight, scaling: Scaling) -> CostPoint {
    w_optimal_weighted(curve, w.area(), w.delay(), scaling)
}

/// Same as [`w_optimal`] for an unnormalized nonnegative weight pair.
///
/// Dense grid search over the sampled delay range (knots included), then
/// golden-section refinement inside the bracket around the best grid point.
/// Ties go to the lower delay.
pub fn w_optimal_weighted(curve: &CostCurve, w_area: f64, w_delay: f64, scaling: Scaling) -> CostPoint {
    let (lo, hi) = curve.interp.domain();
    let ka = w_area * scaling.c_area;
    let kd = w_delay * scaling.c_delay;
    let objective = |d: f64| ka * curve.area_at(d) + kd * d;
    let at = |d: f64| scaling.apply(Objectives::new(curve.area_at(d), d));
    if hi <= lo {
        return at(lo);
    }

    let mut grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
        .chain(curve.interp.knots().map(|(d, _)| d))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut best = 0;
    let mut best_val = objective(grid[0]);
    for (i, &d) in grid.iter().enumerate().skip(1) {
        let v = objective(d);
        if v < best_val {
            best = i;
            best_val = v;
        }
    }

    let mut best_d = grid[best];
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        if b - a <= 1e-12 * (1.0 + hi.abs()) {
            break;
        }
        let c = b - inv_phi * (b - a);
        let e = a + inv_phi * (b - a);
        let (fc, fe) = (objective(c), objective(e));
        if fc < best_val || (fc == best_val && c < best_d) {
            best_val = fc;
            best_d = c;
        }
        if fe < best_val || (fe == best_val && e < best_d) {
            best_val = fe;
            best_d = e;
        }
        if fc <= fe {
            b = e;
        } else {
            a = c;
        }
    }
    at(best_d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> CostCurve {
        CostCurve::new(
            points
                .iter()
                .enumerate()
                .map(|(i, &(delay, area))| CurveSample { target: i as f64, area, delay })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn knots_reproduced() {
        let p = interpolate(&[(1.0, 10.0), (2.0, 5.0), (3.0, 2.0)]).unwrap();
        assert_eq!(p.eval(1.0), 10.0);
        assert_eq!(p.eval(2.0), 5.0);
        assert_eq!(p.eval(3.0), 2.0);
    }

    #[test]
    fn monotone_on_dense_grid() {
        let p = interpolate(&[(0.5, 40.0), (0.6, 39.0), (1.0, 12.0), (3.0, 11.5), (3.2, 2.0)]).unwrap();
        let (lo, hi) = p.domain();
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let v = p.eval(lo + (hi - lo) * i as f64 / 999.0);
            assert!(v <= prev, "overshoot at grid point {i}");
            prev = v;
        }
    }

    #[test]
    fn single_sample_is_constant() {
        let p = interpolate(&[(2.0, 7.0)]).unwrap();
        for x in [-1.0, 2.0, 100.0] {
            assert_eq!(p.eval(x), 7.0);
        }
    }

    #[test]
    fn constant_extrapolation() {
        let p = interpolate(&[(1.0, 10.0), (3.0, 2.0)]).unwrap();
        assert_eq!(p.eval(0.0), 10.0);
        assert_eq!(p.eval(9.0), 2.0);
        assert_eq!(p.eval(2.0), 6.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(interpolate(&[]), Err(EvalError::EmptyCurve)));
        assert!(matches!(CostCurve::new(vec![]), Err(EvalError::EmptyCurve)));
    }

    #[test]
    fn dominated_samples_dropped() {
        // the third sample is worse in both area and delay than the second
        let c = curve(&[(1.0, 10.0), (2.0, 5.0), (2.5, 6.0)]);
        assert_eq!(c.frontier(), vec![Objectives::new(10.0, 1.0), Objectives::new(5.0, 2.0)]);
        let constant = curve(&[(0.5, 100.0), (0.5, 100.0), (0.5, 100.0), (0.5, 100.0)]);
        assert_eq!(constant.frontier().len(), 1);
    }

    #[test]
    fn w_optimal_extremes() {
        let c = curve(&[(1.0, 10.0), (3.0, 2.0)]);
        let unit = Scaling::UNIT;
        let area_only = ScalarWeight::new(1.0, 0.0).unwrap();
        let delay_only = ScalarWeight::new(0.0, 1.0).unwrap();
        assert_eq!(w_optimal(&c, area_only, unit), Objectives::new(2.0, 3.0));
        assert_eq!(w_optimal(&c, delay_only, unit), Objectives::new(10.0, 1.0));
    }

    #[test]
    fn w_optimal_constant_curve() {
        let c = curve(&[(0.5, 100.0)]);
        for wa in [0.0, 0.3, 1.0] {
            let w = ScalarWeight::new(wa, 1.0 - wa).unwrap();
            assert_eq!(w_optimal(&c, w, Scaling::UNIT), Objectives::new(100.0, 0.5));
        }
    }

    #[test]
    fn w_optimal_interior_minimum() {
        // linear segment area = 12 - 4d on [1, 3]; with a convex middle knot the
        // balanced weight lands strictly inside
        let c = curve(&[(1.0, 10.0), (2.0, 3.0), (3.0, 2.0)]);
        let w = ScalarWeight::new(0.5, 0.5).unwrap();
        let p = w_optimal(&c, w, Scaling::UNIT);
        let grid_best = (0..100_000)
            .map(|i| 1.0 + 2.0 * i as f64 / 99_999.0)
            .map(|d| 0.5 * c.area_at(d) + 0.5 * d)
            .fold(f64::INFINITY, f64::min);
        assert!(0.5 * p.area + 0.5 * p.delay <= grid_best + 1e-9);
    }
}

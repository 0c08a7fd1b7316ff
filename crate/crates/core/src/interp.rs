//! Shape-preserving cubic Hermite interpolation.

use crate::error::{invalid, Result};

/// Piecewise cubic Hermite interpolant through `(x_i, y_i)` with slopes `d_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl HermiteSpline {
    /// Uses the given slopes, limited (never increased) where they would
    /// break monotonicity of the data.
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        check_abscissae(&x)?;
        if y.len() != x.len() || d.len() != x.len() {
            return Err(invalid("knots", "x, y and slopes must have equal length"));
        }
        if y.iter().chain(&d).any(|v| !v.is_finite()) {
            return Err(invalid("knots", "non-finite ordinate or slope"));
        }
        let mut spline = HermiteSpline { x, y, d };
        spline.limit_slopes();
        Ok(spline)
    }

    /// Monotone piecewise cubic (Fritsch-Carlson) slopes from the data alone.
    pub fn pchip(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_abscissae(&x)?;
        if y.len() != x.len() {
            return Err(invalid("knots", "x and y must have equal length"));
        }
        let n = x.len();
        let secant: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = secant[0];
            d[1] = secant[0];
        } else {
            for i in 1..n - 1 {
                let (a, b) = (secant[i - 1], secant[i]);
                if a * b > 0.0 {
                    let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                    let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                    d[i] = (w1 + w2) / (w1 / a + w2 / b);
                }
            }
            d[0] = end_slope(x[1] - x[0], x[2] - x[1], secant[0], secant[1]);
            d[n - 1] = end_slope(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3], secant[n - 2], secant[n - 3]);
        }
        Self::with_slopes(x, y, d)
    }

    fn limit_slopes(&mut self) {
        for i in 0..self.x.len() - 1 {
            let delta = (self.y[i + 1] - self.y[i]) / (self.x[i + 1] - self.x[i]);
            if delta == 0.0 {
                self.d[i] = 0.0;
                self.d[i + 1] = 0.0;
                continue;
            }
            for j in [i, i + 1] {
                if self.d[j] * delta < 0.0 {
                    self.d[j] = 0.0;
                }
            }
            let (a, b) = (self.d[i] / delta, self.d[i + 1] / delta);
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                self.d[i] = tau * a * delta;
                self.d[i + 1] = tau * b * delta;
            }
        }
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn slopes(&self) -> &[f64] {
        &self.d
    }

    fn interval(&self, x: f64) -> usize {
        let k = self.x.partition_point(|&xi| xi <= x);
        k.clamp(1, self.x.len() - 1) - 1
    }

    /// Value at `x`, clamped to the end values outside the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.x.len() - 1;
        if x <= self.x[0] {
            return self.y[0];
        }
        if x >= self.x[last] {
            return self.y[last];
        }
        let i = self.interval(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let last = self.x.len() - 1;
        if x < self.x[0] || x > self.x[last] {
            return 0.0;
        }
        let i = self.interval(x);
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }

    /// Smallest `x` with `eval(x) = y` for non-decreasing data, by bisection.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        let last = self.x.len() - 1;
        if y < self.y[0] || y > self.y[last] {
            return None;
        }
        let k = self.y.partition_point(|&yi| yi < y);
        if k < self.y.len() && self.y[k] == y {
            return Some(self.x[k]);
        }
        let (mut lo, mut hi) = (self.x[k - 1], self.x[k]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

fn check_abscissae(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(invalid("knots", "at least two knots are required"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("knots", "non-finite abscissa"));
    }
    if let Some(i) = x.windows(2).position(|w| w[0] >= w[1]) {
        return Err(invalid("knots", format!("abscissae not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

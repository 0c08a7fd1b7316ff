//! Globally adaptive Simpson quadrature.
//!
//! Panels are kept in a max-heap keyed by their local error estimate and the
//! worst panel is bisected until the summed estimate meets
//! `max(abs_tol, rel_tol·|I|)`. The accepted panels are returned so callers
//! can build cumulative tables (schedule knots) without re-integrating.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_panels: 1 << 20,
        }
    }
}

impl Quadrature {
    /// Settings for inner integrals that feed cancellation-prone formulas.
    pub fn tight() -> Self {
        Quadrature {
            abs_tol: 1e-15,
            rel_tol: 1e-14,
            max_panels: 1 << 18,
        }
    }
}

/// One accepted panel `[a, b]` with its integral and the integrand at both ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub fa: f64,
    pub fb: f64,
}

#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    /// Accepted panels ordered by `a`.
    pub panels: Vec<Panel>,
}

impl QuadResult {
    /// `(x, ∫_lo^x)` at every panel boundary, starting with `(lo, 0)`.
    pub fn cumulative(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.panels.len() + 1);
        let mut acc = 0.0;
        if let Some(first) = self.panels.first() {
            out.push((first.a, 0.0));
        }
        for p in &self.panels {
            acc += p.value;
            out.push((p.b, acc));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    x: [f64; 5],
    f: [f64; 5],
    fine: f64,
    err: f64,
}

impl Node {
    fn estimate(x: [f64; 5], f: [f64; 5]) -> Node {
        let h = x[4] - x[0];
        let coarse = h / 6.0 * (f[0] + 4.0 * f[2] + f[4]);
        let fine = h / 12.0 * (f[0] + 4.0 * f[1] + 2.0 * f[2] + 4.0 * f[3] + f[4]);
        let diff = fine - coarse;
        Node {
            x,
            f,
            fine: fine + diff / 15.0,
            err: diff.abs() / 15.0,
        }
    }

    fn splittable(&self) -> bool {
        let h = self.x[4] - self.x[0];
        let mid = 0.5 * (self.x[0] + self.x[2]);
        h > 0.0 && mid > self.x[0] && mid < self.x[2] && h > 64.0 * f64::EPSILON * self.x[2].abs().max(self.x[0].abs())
    }
}

struct ByError(Node);

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.0.err == other.0.err
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.err.total_cmp(&other.0.err)
    }
}

fn eval<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::QuadratureFailure(format!("integrand is {v} at x = {x:e}")))
    }
}

/// `∫_a^b f` with `breakpoints` (inside `(a, b)`) forced as panel boundaries.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breakpoints: &[f64], opts: &Quadrature) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::QuadratureFailure(format!("bad interval [{a}, {b}]")));
    }
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut heap = BinaryHeap::new();
    let mut done: Vec<Node> = Vec::new();
    let mut f_cut: Vec<f64> = Vec::with_capacity(cuts.len());
    for &x in &cuts {
        f_cut.push(eval(&mut f, x)?);
    }
    for (i, w) in cuts.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let h = hi - lo;
        let x = [lo, lo + 0.25 * h, lo + 0.5 * h, lo + 0.75 * h, hi];
        let fx = [f_cut[i], eval(&mut f, x[1])?, eval(&mut f, x[2])?, eval(&mut f, x[3])?, f_cut[i + 1]];
        heap.push(ByError(Node::estimate(x, fx)));
    }

    loop {
        let total: f64 = heap.iter().map(|n| n.0.fine).chain(done.iter().map(|n| n.fine)).sum();
        let err: f64 = heap.iter().map(|n| n.0.err).chain(done.iter().map(|n| n.err)).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            let mut panels: Vec<Panel> = heap
                .into_iter()
                .map(|n| n.0)
                .chain(done)
                .map(|n| Panel {
                    a: n.x[0],
                    b: n.x[4],
                    value: n.fine,
                    fa: n.f[0],
                    fb: n.f[4],
                })
                .collect();
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            return Ok(QuadResult { value: total, error: err, panels });
        }
        if heap.is_empty() {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {err:e} above target {target:e} with no splittable panels"
            )));
        }
        if heap.len() + done.len() >= opts.max_panels {
            return Err(Error::QuadratureFailure(format!(
                "panel cap {} reached (error {err:e}, target {target:e})",
                opts.max_panels
            )));
        }
        // a few splits per bookkeeping pass keeps the O(panels) sums cheap
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let Some(ByError(node)) = heap.pop() else { break };
            if !node.splittable() {
                done.push(node);
                continue;
            }
            let (x, fx) = (node.x, node.f);
            let l = [x[0], 0.5 * (x[0] + x[1]), x[1], 0.5 * (x[1] + x[2]), x[2]];
            let r = [x[2], 0.5 * (x[2] + x[3]), x[3], 0.5 * (x[3] + x[4]), x[4]];
            let fl = [fx[0], eval(&mut f, l[1])?, fx[1], eval(&mut f, l[3])?, fx[2]];
            let fr = [fx[2], eval(&mut f, r[1])?, fx[3], eval(&mut f, r[3])?, fx[4]];
            heap.push(ByError(Node::estimate(l, fl)));
            heap.push(ByError(Node::estimate(r, fr)));
        }
    }
}

/// Angle offset used when an integrand transformed by `s = sin²θ` is not
/// finite exactly at `θ = 0` or `θ = π/2`; the transformed integrand is
/// smooth there, so the limit is taken from a nearby interior point.
const THETA_NUDGE: f64 = 1e-7;

/// `∫_0^1 f(s) ds` through `s = sin²θ`, which removes `s^{-1/2}` and
/// `(1−s)^{-1/2}` endpoint singularities. Breakpoints are given in `s`.
/// The integrand receives `s` and `1−s`, both computed without cancellation.
pub fn integrate_unit_sin2<F>(mut f: F, s_breakpoints: &[f64], opts: &Quadrature) -> Result<QuadResult>
where
    F: FnMut(f64, f64) -> f64,
{
    let theta_bp: Vec<f64> = s_breakpoints
        .iter()
        .filter(|&&s| s > 0.0 && s < 1.0)
        .map(|&s| s.sqrt().asin())
        .collect();
    let mut g = |theta: f64| {
        let v = sin2_integrand(&mut f, theta);
        if v.is_finite() {
            v
        } else if theta <= THETA_NUDGE {
            sin2_integrand(&mut f, THETA_NUDGE)
        } else if theta >= FRAC_PI_2 - THETA_NUDGE {
            sin2_integrand(&mut f, FRAC_PI_2 - THETA_NUDGE)
        } else {
            v
        }
    };
    integrate(&mut g, 0.0, FRAC_PI_2, &theta_bp, opts)
}

fn sin2_integrand<F: FnMut(f64, f64) -> f64>(f: &mut F, theta: f64) -> f64 {
    let (sn, cs) = theta.sin_cos();
    f(sn * sn, cs * cs) * 2.0 * sn * cs
}

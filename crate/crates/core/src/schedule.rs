//! Annealing schedules `t ↦ s(t)` and their synthesis.
//!
//! Every schedule is stored as monotone cubic Hermite knots `(t_i, s_i)` with
//! slopes `ds/dt`. Synthesized schedules get exact slopes at the knots (from
//! the local-adiabatic rate or from `1/t'(s)`), so the interpolant is accurate
//! to fourth order between them.

use std::cell::RefCell;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::effective::{low_levels, numeric_min_gap};
use crate::error::{invalid, Error, Result};
use crate::interp::HermiteSpline;
use crate::quad::{integrate, integrate_unit_sin2, Quadrature};
use crate::spectrum::ValidatedSpectrum;

pub const DEFAULT_KNOTS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    ConstantRate,
    ConstantS,
    LocalAdiabatic,
    ProfileDriven,
    Custom,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::ConstantRate => "constant_rate",
            ScheduleKind::ConstantS => "constant_s",
            ScheduleKind::LocalAdiabatic => "local_adiabatic",
            ScheduleKind::ProfileDriven => "profile_driven",
            ScheduleKind::Custom => "custom",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    total_time: f64,
    spline: HermiteSpline,
}

impl Schedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn s_at(&self, t: f64) -> f64 {
        self.spline.eval(t).clamp(0.0, 1.0)
    }

    pub fn ds_dt(&self, t: f64) -> f64 {
        self.spline.derivative(t)
    }

    /// Earliest `t` with `s(t) = s`; `None` for constant-s schedules or `s`
    /// outside the range swept.
    pub fn time_at(&self, s: f64) -> Option<f64> {
        if self.kind == ScheduleKind::ConstantS {
            return None;
        }
        self.spline.inverse(s)
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.spline.xs().iter().copied().zip(self.spline.ys().iter().copied()).collect()
    }

    pub fn slopes(&self) -> &[f64] {
        self.spline.slopes()
    }

    pub fn len(&self) -> usize {
        self.spline.xs().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Constant-s runs jump from `s = 0` to `s_fixed` at `t = 0` and on to
    /// `s = 1` at `t = T`; the integrator treats both jumps as instantaneous.
    pub fn has_endpoint_ramps(&self) -> bool {
        self.kind == ScheduleKind::ConstantS
    }

    /// Custom schedule through `(t, s)` knots with shape-preserving slopes.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Schedule> {
        let (t, s): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
        if t.first() != Some(&0.0) {
            return Err(invalid("knots", "first knot time must be 0"));
        }
        if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("knots", "s outside [0, 1]"));
        }
        if s.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("knots", "s must be non-decreasing"));
        }
        let total_time = *t.last().unwrap_or(&0.0);
        Ok(Schedule {
            kind: ScheduleKind::Custom,
            total_time,
            spline: HermiteSpline::pchip(t, s)?,
        })
    }

    fn from_parts(kind: ScheduleKind, t: Vec<f64>, s: Vec<f64>, slopes: Vec<f64>) -> Result<Schedule> {
        let (t, s, slopes) = merge_coincident(t, s, slopes);
        let total_time = *t.last().expect("at least two knots");
        Ok(Schedule {
            kind,
            total_time,
            spline: HermiteSpline::with_slopes(t, s, slopes)?,
        })
    }
}

/// Knots from cumulative sums can repeat a time when a very short panel is
/// absorbed in rounding; the later knot replaces the earlier one.
fn merge_coincident(t: Vec<f64>, s: Vec<f64>, d: Vec<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = (Vec::with_capacity(t.len()), Vec::with_capacity(t.len()), Vec::with_capacity(t.len()));
    for ((ti, si), di) in t.into_iter().zip(s).zip(d) {
        if out.0.last().is_some_and(|&last| ti <= last) && out.0.len() > 1 {
            *out.1.last_mut().unwrap() = si;
            *out.2.last_mut().unwrap() = di;
        } else {
            out.0.push(ti);
            out.1.push(si);
            out.2.push(di);
        }
    }
    out
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid("T", format!("{t} is not a positive finite time")))
    }
}

pub fn constant_rate(total_time: f64) -> Result<Schedule> {
    check_time(total_time)?;
    let rate = 1.0 / total_time;
    Schedule::from_parts(
        ScheduleKind::ConstantRate,
        vec![0.0, total_time],
        vec![0.0, 1.0],
        vec![rate, rate],
    )
}

pub fn constant_s(s_fixed: f64, total_time: f64) -> Result<Schedule> {
    check_time(total_time)?;
    if !(s_fixed > 0.0 && s_fixed < 1.0) {
        return Err(invalid("s", format!("{s_fixed} outside (0, 1)")));
    }
    Schedule::from_parts(
        ScheduleKind::ConstantS,
        vec![0.0, total_time],
        vec![s_fixed, s_fixed],
        vec![0.0, 0.0],
    )
}

/// `T = ∫ ds / (ds/dt)`; for knot schedules this is the last knot time.
pub fn runtime(schedule: &Schedule) -> f64 {
    schedule.total_time()
}

/// `∫_0^1 t'(s) ds` with the `s = sin²θ` substitution. The integrand gets
/// `s` and `1−s` separately.
pub fn runtime_of<F>(tprime: F, opts: &Quadrature) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let first_err = RefCell::new(None);
    let r = integrate_unit_sin2(
        |s, u| match tprime(s, u) {
            Ok(v) => v,
            Err(e) => {
                first_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        &[],
        opts,
    );
    finish_runtime(r.map(|q| q.value), first_err.into_inner())
}

fn finish_runtime(r: Result<f64>, first_err: Option<Error>) -> Result<f64> {
    match r {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::DivergentRuntime(format!("runtime evaluated to {v}"))),
        Err(Error::QuadratureFailure(msg)) => Err(Error::DivergentRuntime(msg)),
        Err(e) => Err(first_err.unwrap_or(e)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalAdiabaticConfig {
    pub epsilon: f64,
    /// Uniform `s` grid forced into the quadrature partition.
    pub grid: usize,
    /// Extra forced panel boundaries, e.g. around a known gap minimum.
    pub breakpoints: Vec<f64>,
    pub quad: Quadrature,
}

impl LocalAdiabaticConfig {
    pub fn new(epsilon: f64) -> Self {
        LocalAdiabaticConfig {
            epsilon,
            grid: DEFAULT_KNOTS,
            breakpoints: Vec::new(),
            quad: Quadrature::default(),
        }
    }
}

/// Local Landau-Zener schedule `ds/dt = ε g(s)² / V01(s)` for separate gap
/// and matrix-element functions.
pub fn local_adiabatic<G, V>(gap_fn: G, v01_fn: V, cfg: &LocalAdiabaticConfig) -> Result<Schedule>
where
    G: Fn(f64) -> Result<f64>,
    V: Fn(f64) -> Result<f64>,
{
    local_adiabatic_with(|s| Ok((gap_fn(s)?, v01_fn(s)?)), cfg)
}

/// As [`local_adiabatic`], with one callback returning `(g, V01)` together.
pub fn local_adiabatic_with<F>(profile: F, cfg: &LocalAdiabaticConfig) -> Result<Schedule>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    if !(cfg.epsilon.is_finite() && cfg.epsilon > 0.0) {
        return Err(invalid("epsilon", format!("{} is not positive", cfg.epsilon)));
    }
    if cfg.grid < 64 {
        return Err(invalid("grid", format!("{} is below the minimum of 64", cfg.grid)));
    }
    let eps = cfg.epsilon;
    let first_err = RefCell::new(None);
    let dtds = |s: f64| -> f64 {
        let r = profile(s).and_then(|(g, v)| {
            if g > 0.0 && g.is_finite() {
                Ok(v / (eps * g * g))
            } else {
                Err(Error::NonPositiveGap { s, gap: g })
            }
        });
        match r {
            Ok(v) => v,
            Err(e) => {
                first_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut bps: Vec<f64> = (1..cfg.grid).map(|i| i as f64 / cfg.grid as f64).collect();
    bps.extend(cfg.breakpoints.iter().copied());
    let quad = match integrate(&dtds, 0.0, 1.0, &bps, &cfg.quad) {
        Ok(q) => q,
        Err(e) => return Err(first_err.into_inner().unwrap_or(e)),
    };
    let mut t = Vec::with_capacity(quad.panels.len() + 1);
    let mut s = Vec::with_capacity(quad.panels.len() + 1);
    let mut slopes = Vec::with_capacity(quad.panels.len() + 1);
    for (si, ti) in quad.cumulative() {
        t.push(ti);
        s.push(si);
    }
    slopes.push(1.0 / quad.panels[0].fa);
    for p in &quad.panels {
        slopes.push(1.0 / p.fb);
    }
    if slopes.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::QuadratureFailure("non-finite schedule slope".into()));
    }
    Schedule::from_parts(ScheduleKind::LocalAdiabatic, t, s, slopes)
}

/// Forced quadrature boundaries clustered around the gap minimum of `spec`.
pub fn min_gap_breakpoints(spec: &ValidatedSpectrum) -> Result<Vec<f64>> {
    let (gmin, smin) = numeric_min_gap(spec, 2048)?;
    let values = spec.values();
    let width = spec.driver_scale() + values[values.len() - 1] - values[0];
    let w = gmin / width;
    let mut out = vec![smin];
    for k in 0..6 {
        let d = w * 4f64.powi(k);
        out.extend([smin - d, smin + d].into_iter().filter(|x| *x > 0.0 && *x < 1.0));
    }
    Ok(out)
}

/// Local-adiabatic schedule for a spectrum, using its numeric gap and `V01`.
pub fn local_adiabatic_for(spec: &ValidatedSpectrum, cfg: &LocalAdiabaticConfig) -> Result<Schedule> {
    let mut cfg = cfg.clone();
    cfg.breakpoints.extend(min_gap_breakpoints(spec)?);
    local_adiabatic_with(
        |s| {
            let l = low_levels(spec, s)?;
            Ok((l.gap, l.v01))
        },
        &cfg,
    )
}

/// Target probability of the lowest class along the path.
pub trait ProbabilityProfile {
    fn p(&self, s: f64) -> f64;
    fn dp(&self, s: f64) -> f64;
    /// `1 − p`, given `s` and `1−s`.
    fn one_minus_p(&self, s: f64, _one_minus_s: f64) -> f64 {
        1.0 - self.p(s)
    }
    /// `2p − 1`.
    fn excess(&self, s: f64) -> f64 {
        2.0 * self.p(s) - 1.0
    }
    /// `p'(s)/(1−s)`, given `s` and `1−s`; override when the ratio has a
    /// finite limit at `s = 1`.
    fn dp_over_one_minus_s(&self, s: f64, one_minus_s: f64) -> f64 {
        self.dp(s) / one_minus_s
    }
}

/// `p*(s) = ½(1 + 6s² − 8s³ + 3s⁴)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DjReferenceProfile;

pub fn dj_reference_profile() -> DjReferenceProfile {
    DjReferenceProfile
}

impl ProbabilityProfile for DjReferenceProfile {
    fn p(&self, s: f64) -> f64 {
        0.5 * (1.0 + s * s * (6.0 - 8.0 * s + 3.0 * s * s))
    }

    fn dp(&self, s: f64) -> f64 {
        6.0 * s * (1.0 - s) * (1.0 - s)
    }

    fn one_minus_p(&self, s: f64, u: f64) -> f64 {
        0.5 * u * u * u * (1.0 + 3.0 * s)
    }

    fn excess(&self, s: f64) -> f64 {
        s * s * (6.0 - 8.0 * s + 3.0 * s * s)
    }

    fn dp_over_one_minus_s(&self, s: f64, u: f64) -> f64 {
        6.0 * s * u
    }
}

/// A profile given by closures for `p` and `p'`.
pub struct FnProfile<P, D> {
    pub p: P,
    pub dp: D,
}

impl<P: Fn(f64) -> f64, D: Fn(f64) -> f64> ProbabilityProfile for FnProfile<P, D> {
    fn p(&self, s: f64) -> f64 {
        (self.p)(s)
    }

    fn dp(&self, s: f64) -> f64 {
        (self.dp)(s)
    }
}

/// `t'*(s) = 6√2 / √(s(1−s)[4 − 9s(1−s)])`.
pub fn dj_reference_tprime(s: f64) -> Result<f64> {
    dj_reference_tprime_parts(s, 1.0 - s)
}

/// [`dj_reference_tprime`] with `1−s` supplied by the caller.
pub fn dj_reference_tprime_parts(s: f64, one_minus_s: f64) -> Result<f64> {
    if s <= 0.0 || one_minus_s <= 0.0 {
        return Err(Error::EndpointSingularity { s });
    }
    let u = s * one_minus_s;
    Ok(6.0 * 2f64.sqrt() / (u * (4.0 - 9.0 * u)).sqrt())
}

/// Readings of the `q(s)` numerator and denominator. The printed expression
/// has an unbalanced parenthesis and a garbled integrand, so each candidate
/// is evaluated literally and checked against the reference path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QGrouping {
    /// `[1 − s(1+2p) + 2(1−s)∫p'/(1−s')²] / [2(1−s)√(p(1−p))]`
    AsPrintedDerivativeIntegrand,
    /// `[1 − s(1 + 2p + 2(1−s)∫p'/(1−s')²)] / [2(1−s)√(p(1−p))]`
    NestedDerivativeIntegrand,
    /// `[1 − s(1 + 2p + 2(1−s)∫p/(1−s')²)] / [2(1−s)√(p(1−p))]`
    NestedProfileIntegrand,
    /// `[1 − s(1+2p) + 2(1−s)∫p/(1−s')²] / [2(1−s)√(p(1−p))]`
    ProfileIntegrand,
}

impl QGrouping {
    pub const ALL: [QGrouping; 4] = [
        QGrouping::AsPrintedDerivativeIntegrand,
        QGrouping::NestedDerivativeIntegrand,
        QGrouping::NestedProfileIntegrand,
        QGrouping::ProfileIntegrand,
    ];
}

/// `q(s)` evaluated literally under `grouping`, with the inner integral by
/// adaptive quadrature.
pub fn q_with_grouping<P: ProbabilityProfile + ?Sized>(
    profile: &P,
    grouping: QGrouping,
    s: f64,
    quad: &Quadrature,
) -> Result<f64> {
    if s <= 0.0 || s >= 1.0 {
        return Err(Error::EndpointSingularity { s });
    }
    let derivative = matches!(
        grouping,
        QGrouping::AsPrintedDerivativeIntegrand | QGrouping::NestedDerivativeIntegrand
    );
    let inner = integrate(
        |u| {
            let g = if derivative { profile.dp(u) } else { profile.p(u) };
            g / ((1.0 - u) * (1.0 - u))
        },
        0.0,
        s,
        &[],
        quad,
    )?
    .value;
    let p = profile.p(s);
    let tail = 2.0 * (1.0 - s) * inner;
    let numerator = match grouping {
        QGrouping::AsPrintedDerivativeIntegrand | QGrouping::ProfileIntegrand => 1.0 - s * (1.0 + 2.0 * p) + tail,
        QGrouping::NestedDerivativeIntegrand | QGrouping::NestedProfileIntegrand => {
            1.0 - s * (1.0 + 2.0 * p + tail)
        }
    };
    Ok(numerator / (2.0 * (1.0 - s) * (p * profile.one_minus_p(s, 1.0 - s)).sqrt()))
}

/// `t'(s) = p' / [(1−s)·√(p(1−p))·√(1−q²)]` with `q` read per `grouping`.
///
/// The `1/(1−s)` factor follows from the two-level equations of motion; the
/// path formula as usually printed omits it.
pub fn tprime_with_grouping<P: ProbabilityProfile + ?Sized>(
    profile: &P,
    grouping: QGrouping,
    s: f64,
    quad: &Quadrature,
) -> Result<f64> {
    let q = q_with_grouping(profile, grouping, s, quad)?;
    if !(q * q < 1.0) {
        return Err(Error::PathIllDefined(format!("q({s}) = {q} has |q| ≥ 1")));
    }
    let p = profile.p(s);
    Ok(profile.dp(s) / ((1.0 - s) * (p * profile.one_minus_p(s, 1.0 - s)).sqrt() * (1.0 - q * q).sqrt()))
}

/// Tries each reading of `q(s)` in turn against [`dj_reference_tprime`] on
/// `[0.05, 0.95]`; returns the first whose worst deviation is ≤ `tol`, along
/// with the deviation of every candidate tried.
pub fn resolve_q_grouping(tol: f64) -> Result<(QGrouping, Vec<(QGrouping, f64)>)> {
    let profile = dj_reference_profile();
    let quad = Quadrature::tight();
    let mut tried = Vec::new();
    for grouping in QGrouping::ALL {
        let mut worst = 0.0f64;
        for i in 0..=180 {
            let s = 0.05 + 0.005 * i as f64;
            let dev = match tprime_with_grouping(&profile, grouping, s, &quad) {
                Ok(v) => (v - dj_reference_tprime(s)?).abs(),
                Err(_) => f64::INFINITY,
            };
            worst = worst.max(dev);
        }
        tried.push((grouping, worst));
        if worst <= tol {
            return Ok((grouping, tried));
        }
    }
    Err(Error::PathIllDefined(format!("no reading of q(s) reproduces the reference path: {tried:?}")))
}

/// `t'(s)` generated by a probability profile.
///
/// Evaluated in the cancellation-free form `t' = 2p'/((1−s)·y)` with
/// `y² = 4p(1−p) − x²` and `x = 1 − w`, `w(s) = 2∫_0^s u·p'/(1−u) du`; this
/// equals the [`QGrouping::ProfileIntegrand`] reading after an integration by
/// parts. A well-defined path needs `x(1) = 0`, i.e. `w(1) = 1`, so above
/// `s = ½` the tail form `x = 2∫_s^1 u·p'/(1−u) du` is used.
pub struct ProfilePath<P> {
    profile: P,
    /// `(s_i, w(s_i))` for `s_i ≤ ½`, increasing.
    head: Vec<(f64, f64)>,
    /// `(s_i, x(s_i))` for `s_i ≥ ½`, increasing.
    tail: Vec<(f64, f64)>,
    quad: Quadrature,
}

/// Tolerance on `w(1) = 1`.
const PATH_CLOSURE_TOL: f64 = 1e-9;

impl<P: ProbabilityProfile> ProfilePath<P> {
    pub fn new(profile: P, grid: usize) -> Result<Self> {
        let grid = grid.max(2);
        let p0 = profile.p(0.0);
        let p1 = profile.p(1.0);
        if (p0 - 0.5).abs() > 1e-12 || (p1 - 1.0).abs() > 1e-12 {
            return Err(Error::PathIllDefined(format!(
                "profile boundary values p(0) = {p0}, p(1) = {p1}; expected 1/2 and 1"
            )));
        }
        let quad = Quadrature::tight();
        let density = |u: f64| 2.0 * u * profile.dp_over_one_minus_s(u, 1.0 - u);
        let segment = |a: f64, b: f64| -> Result<f64> {
            integrate(density, a, b, &[], &quad)
                .map(|r| r.value)
                .map_err(|e| Error::PathIllDefined(format!("w(s) integral failed on [{a}, {b}]: {e}")))
        };
        let mut grid_s: Vec<f64> = (0..=grid).map(|i| theta_node(i, grid)).collect();
        grid_s[grid] = 1.0;
        let mid = grid_s.partition_point(|&s| s < 0.5);
        let mut head = vec![(0.0, 0.0)];
        for &s in grid_s[1..mid].iter().chain(std::iter::once(&0.5)) {
            let (prev, acc) = *head.last().unwrap();
            head.push((s, acc + segment(prev, s)?));
        }
        let mut tail = vec![(1.0, 0.0)];
        for &s in grid_s[mid..grid].iter().rev().filter(|&&s| s > 0.5).chain(std::iter::once(&0.5)) {
            let (next, acc) = *tail.last().unwrap();
            tail.push((s, acc + segment(s, next)?));
        }
        tail.reverse();
        let w_half = head.last().unwrap().1;
        let x_half = tail[0].1;
        let closure = w_half + x_half - 1.0;
        if !(closure.abs() <= PATH_CLOSURE_TOL) {
            return Err(Error::PathIllDefined(format!(
                "w(1) = {} differs from 1, so q(s) diverges at s = 1",
                1.0 + closure
            )));
        }
        Ok(ProfilePath { profile, head, tail, quad })
    }

    pub fn profile(&self) -> &P {
        &self.profile
    }

    fn density_integral(&self, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        integrate(|u| 2.0 * u * self.profile.dp_over_one_minus_s(u, 1.0 - u), a, b, &[], &self.quad)
            .map(|r| r.value)
            .map_err(|e| Error::PathIllDefined(format!("w(s) integral failed: {e}")))
    }

    /// `w(s) = 2∫_0^s u·p'/(1−u) du`.
    pub fn w(&self, s: f64) -> Result<f64> {
        if s <= 0.5 {
            let k = self.head.partition_point(|n| n.0 <= s).max(1) - 1;
            let (sk, wk) = self.head[k];
            Ok(wk + self.density_integral(sk, s)?)
        } else {
            Ok(1.0 - self.x(s)?)
        }
    }

    /// `x(s) = 1 − w(s)`.
    pub fn x(&self, s: f64) -> Result<f64> {
        if s <= 0.5 {
            return Ok(1.0 - self.w(s)?);
        }
        let k = self.tail.partition_point(|n| n.0 < s).min(self.tail.len() - 1);
        let (sk, xk) = self.tail[k];
        Ok(xk + self.density_integral(s, sk)?)
    }

    /// `q(s) = x/(2√(p(1−p)))`.
    pub fn q(&self, s: f64) -> Result<f64> {
        let (p, u) = (self.profile.p(s), 1.0 - s);
        Ok(self.x(s)? / (2.0 * (p * self.profile.one_minus_p(s, u)).sqrt()))
    }

    pub fn tprime(&self, s: f64) -> Result<f64> {
        self.tprime_parts(s, 1.0 - s)
    }

    /// [`Self::tprime`] with `1−s` supplied by the caller.
    pub fn tprime_parts(&self, s: f64, u: f64) -> Result<f64> {
        if s <= 0.0 || u <= 0.0 {
            return Err(Error::EndpointSingularity { s });
        }
        let y2 = if s <= 0.5 {
            let w = self.w(s)?;
            let a = self.profile.excess(s);
            w * (2.0 - w) - a * a
        } else {
            let x = self.x(s)?;
            4.0 * self.profile.p(s) * self.profile.one_minus_p(s, u) - x * x
        };
        if !(y2 > 0.0) {
            return Err(Error::PathIllDefined(format!("q(s)² ≥ 1 at s = {s}")));
        }
        let tp = 2.0 * self.profile.dp_over_one_minus_s(s, u) / y2.sqrt();
        if !(tp.is_finite() && tp >= 0.0) {
            return Err(Error::PathIllDefined(format!("t'({s}) = {tp}")));
        }
        Ok(tp)
    }
}

fn theta_node(i: usize, grid: usize) -> f64 {
    let th = FRAC_PI_2 * i as f64 / grid as f64;
    let v = th.sin();
    v * v
}

/// Builds `t'(s)` from `profile` and the schedule obtained by integrating and
/// inverting it. Knots are the panel boundaries of the runtime quadrature,
/// which include `grid` points uniform in `θ` with `s = sin²θ`.
pub fn path_from_profile<P: ProbabilityProfile>(profile: P, grid: usize) -> Result<(ProfilePath<P>, Schedule)> {
    if grid < 2 {
        return Err(invalid("grid", "need at least two knots"));
    }
    let path = ProfilePath::new(profile, grid)?;
    let bps: Vec<f64> = (1..grid).map(|i| theta_node(i, grid)).collect();
    let opts = Quadrature {
        abs_tol: 1e-12,
        rel_tol: 1e-13,
        max_panels: 1 << 20,
    };
    let first_err = RefCell::new(None);
    let r = integrate_unit_sin2(
        |s, u| match path.tprime_parts(s, u) {
            Ok(v) => v,
            Err(e) => {
                if s > 0.0 && s < 1.0 {
                    first_err.borrow_mut().get_or_insert(e);
                }
                f64::NAN
            }
        },
        &bps,
        &opts,
    );
    let first_err = first_err.into_inner();
    if let Some(e @ Error::PathIllDefined(_)) = first_err.clone() {
        return Err(e);
    }
    let quad = match r {
        Ok(q) => q,
        Err(e) => return Err(finish_runtime(Err(e), first_err).unwrap_err()),
    };
    let cumulative = quad.cumulative();
    let last = cumulative.len() - 1;
    let mut t = Vec::with_capacity(cumulative.len());
    let mut s = Vec::with_capacity(cumulative.len());
    let mut slopes = Vec::with_capacity(cumulative.len());
    for (i, &(theta, ti)) in cumulative.iter().enumerate() {
        let si = if i == last { 1.0 } else { theta.sin().powi(2) };
        t.push(ti);
        s.push(si);
        slopes.push(if i == 0 || i == last || si >= 1.0 { 0.0 } else { 1.0 / path.tprime(si)? });
    }
    if !t[last].is_finite() {
        return Err(Error::DivergentRuntime(format!("runtime evaluated to {}", t[last])));
    }
    let schedule = Schedule::from_parts(ScheduleKind::ProfileDriven, t, s, slopes)?;
    Ok((path, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{grover_spectrum, rem_spectrum};

    /// `K(m)` via the arithmetic-geometric mean.
    fn elliptic_k(m: f64) -> f64 {
        let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
        for _ in 0..40 {
            let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
            a = an;
            b = bn;
        }
        std::f64::consts::PI / (2.0 * a)
    }

    #[test]
    fn constant_rate_basics() {
        let sch = constant_rate(10.0).unwrap();
        assert!((sch.s_at(5.0) - 0.5).abs() < 1e-15);
        assert_eq!(runtime(&sch), 10.0);
        let unit = constant_rate(1.0).unwrap();
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert!((unit.s_at(t) - t).abs() < 1e-15);
        }
        assert!(constant_rate(0.0).is_err());
        assert!(constant_rate(-1.0).is_err());
    }

    #[test]
    fn constant_s_basics() {
        let sch = constant_s(0.25, 3.0).unwrap();
        for t in [0.0, 1.0, 3.0] {
            assert_eq!(sch.s_at(t), 0.25);
        }
        assert!(sch.has_endpoint_ramps());
        assert_eq!(sch.time_at(0.25), None);
        assert!(constant_s(1.0, 3.0).is_err());
        assert!(constant_s(0.5, 0.0).is_err());
    }

    #[test]
    fn reference_profile_values() {
        let p = dj_reference_profile();
        assert_eq!(p.p(0.0), 0.5);
        assert_eq!(p.p(1.0), 1.0);
        assert!((p.p(0.5) - 0.84375).abs() < 1e-15);
        for s in [0.1, 0.4, 0.9] {
            assert!((p.one_minus_p(s, 1.0 - s) - (1.0 - p.p(s))).abs() < 1e-15);
            assert!((p.excess(s) - (2.0 * p.p(s) - 1.0)).abs() < 1e-15);
            let h = 1e-6;
            let fd = (p.p(s + h) - p.p(s - h)) / (2.0 * h);
            assert!((p.dp(s) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn reference_tprime_values() {
        let v = dj_reference_tprime(0.5).unwrap();
        assert!((v - 24.0 * 2f64.sqrt() / 7f64.sqrt()).abs() < 1e-12);
        for s in [0.01, 0.2, 0.37] {
            assert!((dj_reference_tprime(s).unwrap() - dj_reference_tprime(1.0 - s).unwrap()).abs() < 1e-9);
        }
        let s: f64 = 1e-10;
        let lead = 3.0 * 2f64.sqrt() / s.sqrt();
        assert!((dj_reference_tprime(s).unwrap() / lead - 1.0).abs() < 1e-8);
        assert!(matches!(dj_reference_tprime(0.0), Err(Error::EndpointSingularity { .. })));
        assert!(matches!(dj_reference_tprime(1.0), Err(Error::EndpointSingularity { .. })));
    }

    #[test]
    fn reference_runtime_matches_elliptic_integral() {
        // ∫ t'* ds = 6√2·K(9/16) after s = sin²θ
        let exact = 6.0 * 2f64.sqrt() * elliptic_k(9.0 / 16.0);
        let t = runtime_of(dj_reference_tprime_parts, &Quadrature::tight()).unwrap();
        assert!((t - exact).abs() < 1e-10, "{t} vs {exact}");
    }

    #[test]
    fn literal_grouping_with_derivative_integrand_is_ill_defined() {
        let quad = Quadrature::tight();
        let e = tprime_with_grouping(&dj_reference_profile(), QGrouping::AsPrintedDerivativeIntegrand, 0.5, &quad);
        assert!(matches!(e, Err(Error::PathIllDefined(_))));
    }

    #[test]
    fn grouping_resolution_picks_profile_integrand() {
        let (g, tried) = resolve_q_grouping(1e-8).unwrap();
        assert_eq!(g, QGrouping::ProfileIntegrand);
        assert_eq!(tried.len(), 4);
    }

    #[test]
    fn stable_path_matches_reference_and_literal_form() {
        let path = ProfilePath::new(dj_reference_profile(), 256).unwrap();
        let quad = Quadrature::tight();
        for i in 1..100 {
            let s = i as f64 / 100.0;
            let tp = path.tprime(s).unwrap();
            assert!((tp - dj_reference_tprime(s).unwrap()).abs() < 1e-9, "s={s}");
            if (0.05..=0.95).contains(&s) {
                let lit = tprime_with_grouping(path.profile(), QGrouping::ProfileIntegrand, s, &quad).unwrap();
                assert!((tp - lit).abs() < 1e-8);
            }
            // closed form x = 1 − 4s³ + 3s⁴
            let x = 1.0 - 4.0 * s.powi(3) + 3.0 * s.powi(4);
            assert!((1.0 - path.w(s).unwrap() - x).abs() < 1e-13);
        }
    }

    #[test]
    fn profile_schedule_runtime_and_round_trip() {
        let exact = 6.0 * 2f64.sqrt() * elliptic_k(9.0 / 16.0);
        let (_, sch) = path_from_profile(dj_reference_profile(), DEFAULT_KNOTS).unwrap();
        assert_eq!(sch.kind(), ScheduleKind::ProfileDriven);
        assert!((sch.total_time() - exact).abs() < 1e-9, "{} vs {exact}", sch.total_time());
        assert_eq!(sch.s_at(0.0), 0.0);
        assert_eq!(sch.s_at(sch.total_time()), 1.0);
        for i in 1..200 {
            let s = i as f64 / 200.0;
            let t = sch.time_at(s).unwrap();
            assert!((sch.s_at(t) - s).abs() < 1e-9);
        }
        let knots = sch.knots();
        assert!(knots.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn profile_violating_boundary_is_rejected() {
        let bad = FnProfile {
            p: |s: f64| 0.5 + 0.4 * s,
            dp: |_s: f64| 0.4,
        };
        assert!(matches!(path_from_profile(bad, 128), Err(Error::PathIllDefined(_))));
    }

    #[test]
    fn local_adiabatic_constant_profile_is_linear() {
        let cfg = LocalAdiabaticConfig::new(0.5);
        let sch = local_adiabatic(|_| Ok(2.0), |_| Ok(3.0), &cfg).unwrap();
        let expected = 3.0 / (0.5 * 4.0);
        assert!((sch.total_time() - expected).abs() < 1e-12);
        for t in [0.1, 0.7, 1.4] {
            assert!((sch.s_at(t) - t / expected).abs() < 1e-12);
        }
    }

    #[test]
    fn local_adiabatic_rejects_bad_input() {
        let cfg = LocalAdiabaticConfig::new(0.5);
        let e = local_adiabatic(|s| Ok(s - 0.5), |_| Ok(1.0), &cfg).unwrap_err();
        assert!(matches!(e, Error::NonPositiveGap { .. }));
        assert!(local_adiabatic(|_| Ok(1.0), |_| Ok(1.0), &LocalAdiabaticConfig::new(0.0)).is_err());
        let mut small = LocalAdiabaticConfig::new(1.0);
        small.grid = 10;
        assert!(local_adiabatic(|_| Ok(1.0), |_| Ok(1.0), &small).is_err());
    }

    #[test]
    fn local_adiabatic_rate_bound_holds_at_knots() {
        let rem = rem_spectrum(12).unwrap();
        let eps = 0.3;
        let sch = local_adiabatic_for(&rem, &LocalAdiabaticConfig::new(eps)).unwrap();
        for ((t, s), d) in sch.knots().iter().zip(sch.slopes()).skip(1) {
            let l = low_levels(&rem, *s).unwrap();
            let bound = eps * l.gap * l.gap / l.v01;
            assert!(*d <= (1.0 + 1e-6) * bound, "t={t} s={s} {d} > {bound}");
        }
    }

    #[test]
    fn rem_time_concentrates_near_two_thirds() {
        let rem = rem_spectrum(20).unwrap();
        let sch = local_adiabatic_for(&rem, &LocalAdiabaticConfig::new(1.0)).unwrap();
        let t_lo = sch.time_at(0.6).unwrap();
        let t_hi = sch.time_at(0.75).unwrap();
        assert!((t_hi - t_lo) / sch.total_time() > 0.8);
    }

    #[test]
    fn runtime_invariant_under_grid_doubling() {
        let g = grover_spectrum(10, 1).unwrap();
        let mut cfg = LocalAdiabaticConfig::new(1.0);
        let t1 = local_adiabatic_for(&g, &cfg).unwrap().total_time();
        cfg.grid *= 2;
        let t2 = local_adiabatic_for(&g, &cfg).unwrap().total_time();
        assert!(((t1 - t2) / t1).abs() < 1e-8);
        let (_, a) = path_from_profile(dj_reference_profile(), DEFAULT_KNOTS).unwrap();
        let (_, b) = path_from_profile(dj_reference_profile(), 2 * DEFAULT_KNOTS).unwrap();
        assert!(((a.total_time() - b.total_time()) / a.total_time()).abs() < 1e-8);
    }

    #[test]
    fn custom_knots() {
        let sch = Schedule::from_knots(&[(0.0, 0.0), (1.0, 0.3), (3.0, 1.0)]).unwrap();
        assert_eq!(sch.kind(), ScheduleKind::Custom);
        assert_eq!(sch.total_time(), 3.0);
        assert!(Schedule::from_knots(&[(0.0, 0.5), (1.0, 0.3)]).is_err());
        assert!(Schedule::from_knots(&[(0.1, 0.0), (1.0, 1.0)]).is_err());
        assert!(Schedule::from_knots(&[(0.0, 0.0), (1.0, 1.5)]).is_err());
    }
}

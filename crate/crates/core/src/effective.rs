//! The `(K+1)`-dimensional effective Hamiltonian and its spectrum.
//!
//! In the symmetrized amplitudes `b_j = √η_j·c_j` the reduced dynamics are
//! generated by
//!
//! ```text
//! H_eff(s) = s·diag(f) − (1−s)·E_0·v vᵀ,    v_j = √η_j,  ‖v‖ = 1
//! ```
//!
//! a diagonal-plus-rank-one matrix. Its eigenvalues are the roots of the
//! secular equation `Σ_k ρ η_k / (s f_k − λ) = 1` with `ρ = (1−s)E_0`, which
//! interlace the poles `s·f_k`; eigenvectors follow from the resolvent,
//! `x_k ∝ v_k / (s f_k − λ)`. A dense symmetric eigensolve is kept alongside
//! as an independent route.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::spectrum::ValidatedSpectrum;

/// Below this many classes [`Solver::Auto`] uses the dense eigensolver.
pub const DENSE_LIMIT: usize = 64;

/// Relative gap (to the spectral width) below which the ground state is
/// reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

const BISECTION_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Solver {
    #[default]
    Auto,
    Dense,
    Secular,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Solver::Auto),
            "dense" => Ok(Solver::Dense),
            "secular" => Ok(Solver::Secular),
            other => Err(Error::Parse(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveHamiltonian {
    pub s: f64,
    /// `f_j`, unscaled.
    pub values: Vec<f64>,
    /// `s·f_j`.
    pub diag: Vec<f64>,
    /// `√η_j`.
    pub coupling: Vec<f64>,
    /// `(1−s)·E_0`.
    pub scale: f64,
    pub driver_scale: f64,
}

pub fn build_effective(spec: &ValidatedSpectrum, s: f64) -> Result<EffectiveHamiltonian> {
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid("s", format!("{s} outside [0, 1]")));
    }
    let values = spec.values().to_vec();
    Ok(EffectiveHamiltonian {
        s,
        diag: values.iter().map(|f| s * f).collect(),
        values,
        coupling: spec.eta().coupling(),
        scale: (1.0 - s) * spec.driver_scale(),
        driver_scale: spec.driver_scale(),
    })
}

impl EffectiveHamiltonian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { self.diag[i] } else { 0.0 };
            d - self.scale * self.coupling[i] * self.coupling[j]
        })
    }

    /// `H_eff · x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let proj = dot(&self.coupling, x);
        self.diag
            .iter()
            .zip(&self.coupling)
            .zip(x)
            .map(|((d, v), xi)| d * xi - self.scale * v * proj)
            .collect()
    }

    /// `dH_eff/ds · x = (diag(f) + E_0 v vᵀ) x`.
    pub fn apply_derivative(&self, x: &[f64]) -> Vec<f64> {
        let proj = dot(&self.coupling, x);
        self.values
            .iter()
            .zip(&self.coupling)
            .zip(x)
            .map(|((f, v), xi)| f * xi + self.driver_scale * v * proj)
            .collect()
    }
}

/// Instantaneous spectrum at one value of `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub s: f64,
    pub eigenvalues: Vec<f64>,
    pub ground_vector: Vec<f64>,
    pub first_excited_vector: Vec<f64>,
    pub gap: f64,
    pub v01: f64,
    /// Gap fell below `DEGENERACY_TOL` times the spectral width.
    pub degenerate_ground: bool,
}

pub fn eigensystem(h: &EffectiveHamiltonian) -> Result<SpectralData> {
    eigensystem_with(h, Solver::Auto)
}

pub fn eigensystem_with(h: &EffectiveHamiltonian, solver: Solver) -> Result<SpectralData> {
    if h.dim() < 2 {
        return Err(Error::DegenerateGround { s: h.s, gap: 0.0 });
    }
    let solver = match solver {
        Solver::Auto if h.dim() <= DENSE_LIMIT => Solver::Dense,
        Solver::Auto => Solver::Secular,
        other => other,
    };
    let (eigenvalues, mut ground, mut excited) = match solver {
        Solver::Dense => dense_eigen(h),
        _ => {
            let roots = secular_roots_of(h, h.dim())?;
            let ground = resolvent_vector(h, &roots[0]);
            let excited = resolvent_vector(h, &roots[1]);
            (roots.iter().map(|r| r.value()).collect(), ground, excited)
        }
    };
    if h.s == 0.0 {
        // the excited level is K-fold degenerate at s = 0; take the s → 0⁺ limit
        ground = h.coupling.clone();
        excited = zero_s_first_excited(h)?;
    }
    let gap = eigenvalues[1] - eigenvalues[0];
    let width = eigenvalues[eigenvalues.len() - 1] - eigenvalues[0];
    let mut sd = SpectralData {
        s: h.s,
        eigenvalues,
        ground_vector: ground,
        first_excited_vector: excited,
        gap,
        v01: 0.0,
        degenerate_ground: gap < DEGENERACY_TOL * width,
    };
    sd.v01 = matrix_element(h, &sd);
    Ok(sd)
}

/// `V01 = |⟨ground| dH/ds |first excited⟩|`.
pub fn matrix_element(h: &EffectiveHamiltonian, sd: &SpectralData) -> f64 {
    dot(&sd.ground_vector, &h.apply_derivative(&sd.first_excited_vector)).abs()
}

fn dense_eigen(h: &EffectiveHamiltonian) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(h.to_dense());
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let column = |i: usize| {
        let mut x: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        orient(&mut x, &h.coupling);
        x
    };
    (values, column(order[0]), column(order[1]))
}

/// Fixes the sign so that `v·x ≥ 0` (the resolvent convention).
fn orient(x: &mut [f64], v: &[f64]) {
    let overlap = dot(x, v);
    let flip = if overlap.abs() > 1e-300 {
        overlap < 0.0
    } else {
        x.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m }) < 0.0
    };
    if flip {
        x.iter_mut().for_each(|c| *c = -*c);
    }
}

/// A secular root stored relative to a nearby pole for full precision.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Root {
    origin: usize,
    delta: f64,
    pole: f64,
}

impl Root {
    fn value(&self) -> f64 {
        self.pole + self.delta
    }
}

fn resolvent_vector(h: &EffectiveHamiltonian, root: &Root) -> Vec<f64> {
    if h.scale == 0.0 {
        let mut e = vec![0.0; h.dim()];
        e[root.origin] = 1.0;
        return e;
    }
    let fo = h.values[root.origin];
    let mut x: Vec<f64> = h
        .values
        .iter()
        .zip(&h.coupling)
        .enumerate()
        .map(|(k, (f, v))| {
            if k == root.origin && root.delta == 0.0 {
                1.0
            } else {
                v / (h.s * (f - fo) - root.delta)
            }
        })
        .collect();
    let norm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|c| *c /= norm);
    x
}

/// First excited eigenvector in the limit `s → 0⁺`: the lowest eigenvector of
/// `diag(f)` compressed to the orthogonal complement of `v`.
fn zero_s_first_excited(h: &EffectiveHamiltonian) -> Result<Vec<f64>> {
    // orthogonality Σ η_k/(f_k − μ) = 0 has exactly one root μ ∈ (f_0, f_1)
    let phi = |mu: f64| -> f64 {
        h.values
            .iter()
            .zip(&h.coupling)
            .map(|(f, v)| v * v / (f - mu))
            .sum()
    };
    let (mut lo, mut hi) = (h.values[0], h.values[1]);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut x: Vec<f64> = h.values.iter().zip(&h.coupling).map(|(f, v)| v / (f - mu)).collect();
    if x.iter().any(|c| !c.is_finite()) {
        return Err(Error::BracketingFailure { s: 0.0, index: 1 });
    }
    let norm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|c| *c /= norm);
    Ok(x)
}

/// All `K+1` eigenvalues by secular-equation bisection, ascending.
pub fn secular_roots(spec: &ValidatedSpectrum, s: f64) -> Result<Vec<f64>> {
    let h = build_effective(spec, s)?;
    Ok(secular_roots_of(&h, h.dim())?.iter().map(Root::value).collect())
}

/// The `count` lowest secular roots.
fn secular_roots_of(h: &EffectiveHamiltonian, count: usize) -> Result<Vec<Root>> {
    let k1 = h.dim();
    let count = count.min(k1);
    if h.scale == 0.0 {
        // s = 1: problem Hamiltonian only
        return Ok((0..count)
            .map(|i| Root {
                origin: i,
                delta: 0.0,
                pole: h.diag[i],
            })
            .collect());
    }
    if h.s == 0.0 {
        // rank-one limit: −E_0 once, then a K-fold zero
        return Ok((0..count)
            .map(|i| Root {
                origin: 0,
                delta: if i == 0 { -h.scale } else { 0.0 },
                pole: 0.0,
            })
            .collect());
    }
    (0..count).map(|i| secular_root(h, i)).collect()
}

/// Secular function `Σ ρη_k/((d_k − d_o) − δ) − 1` around pole `o`.
fn secular_at(h: &EffectiveHamiltonian, origin: usize, delta: f64) -> f64 {
    let fo = h.values[origin];
    let mut acc = 0.0;
    for (f, v) in h.values.iter().zip(&h.coupling) {
        acc += v * v / (h.s * (f - fo) - delta);
    }
    h.scale * acc - 1.0
}

/// Root `i`: below the lowest pole for `i = 0`, otherwise inside `(d_{i−1}, d_i)`.
fn secular_root(h: &EffectiveHamiltonian, i: usize) -> Result<Root> {
    let fail = || Error::BracketingFailure { s: h.s, index: i };
    // bracket in δ; the pole end of the bracket is open
    let (origin, mut lo, mut hi, pole_at_hi) = if i == 0 {
        (0, -h.scale, 0.0, true)
    } else {
        let width = h.s * (h.values[i] - h.values[i - 1]);
        let g_mid = secular_at(h, i - 1, 0.5 * width);
        if g_mid == 0.0 {
            return Ok(Root {
                origin: i - 1,
                delta: 0.5 * width,
                pole: h.diag[i - 1],
            });
        }
        if !g_mid.is_finite() {
            return Err(fail());
        }
        if g_mid > 0.0 {
            (i - 1, 0.0, 0.5 * width, false)
        } else {
            (i, -0.5 * width, 0.0, true)
        }
    };
    // closed end must sit on the correct side of the root
    let closed = if pole_at_hi { lo } else { hi };
    let g_closed = secular_at(h, origin, closed);
    if !g_closed.is_finite() {
        return Err(fail());
    }
    if pole_at_hi && g_closed >= 0.0 {
        if g_closed == 0.0 {
            return Ok(Root { origin, delta: lo, pole: h.diag[origin] });
        }
        return Err(fail());
    }
    if !pole_at_hi && g_closed <= 0.0 {
        if g_closed == 0.0 {
            return Ok(Root { origin, delta: hi, pole: h.diag[origin] });
        }
        return Err(fail());
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * mid.abs() {
            break;
        }
        let g = secular_at(h, origin, mid);
        if g.is_nan() {
            return Err(fail());
        }
        // g increases in δ between poles
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut delta = 0.5 * (lo + hi);
    if delta == 0.0 {
        // never report a root exactly on the pole
        delta = if pole_at_hi { lo } else { hi };
    }
    Ok(Root {
        origin,
        delta,
        pole: h.diag[origin],
    })
}

/// The lowest levels, gap and `V01` at one `s`, from the two (or three)
/// lowest secular roots only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowLevels {
    pub s: f64,
    pub e0: f64,
    pub e1: f64,
    pub e2: Option<f64>,
    pub gap: f64,
    pub v01: f64,
}

pub fn low_levels(spec: &ValidatedSpectrum, s: f64) -> Result<LowLevels> {
    let h = build_effective(spec, s)?;
    if h.dim() < 2 {
        return Err(Error::DegenerateGround { s, gap: 0.0 });
    }
    let roots = secular_roots_of(&h, 3)?;
    let (ground, excited) = if s == 0.0 {
        (h.coupling.clone(), zero_s_first_excited(&h)?)
    } else {
        (resolvent_vector(&h, &roots[0]), resolvent_vector(&h, &roots[1]))
    };
    let v01 = dot(&ground, &h.apply_derivative(&excited)).abs();
    let (e0, e1) = (roots[0].value(), roots[1].value());
    // gap from the pole-relative representation when both roots share a pole
    let gap = if roots[0].origin == roots[1].origin {
        roots[1].delta - roots[0].delta
    } else {
        e1 - e0
    };
    Ok(LowLevels {
        s,
        e0,
        e1,
        e2: roots.get(2).map(Root::value),
        gap,
        v01,
    })
}

/// Levels along a grid of `s` values.
pub fn scan(spec: &ValidatedSpectrum, s_values: &[f64], solver: Solver) -> Result<Vec<LowLevels>> {
    use rayon::prelude::*;
    s_values
        .par_iter()
        .map(|&s| match solver {
            Solver::Secular => low_levels(spec, s),
            Solver::Auto if spec.num_classes() > DENSE_LIMIT => low_levels(spec, s),
            _ => {
                let h = build_effective(spec, s)?;
                let sd = eigensystem_with(&h, Solver::Dense)?;
                Ok(LowLevels {
                    s,
                    e0: sd.eigenvalues[0],
                    e1: sd.eigenvalues[1],
                    e2: sd.eigenvalues.get(2).copied(),
                    gap: sd.gap,
                    v01: sd.v01,
                })
            }
        })
        .collect()
}

/// Numerically located minimum of the gap on `(0, 1)`: a coarse scan followed
/// by golden-section refinement around the best grid point.
pub fn numeric_min_gap(spec: &ValidatedSpectrum, coarse_points: usize) -> Result<(f64, f64)> {
    let gap = |s: f64| low_levels(spec, s).map(|l| l.gap);
    let m = coarse_points.max(16);
    let grid: Vec<f64> = (1..m).map(|i| i as f64 / m as f64).collect();
    let mut best = (f64::INFINITY, 0.5, 0usize);
    for (i, &s) in grid.iter().enumerate() {
        let g = gap(s)?;
        if g < best.0 {
            best = (g, s, i);
        }
    }
    let lo_s = if best.2 == 0 { 0.0 } else { grid[best.2 - 1] };
    let hi_s = if best.2 + 1 == grid.len() { 1.0 } else { grid[best.2 + 1] };
    golden_min(gap, lo_s, hi_s, 1e-13)
}

fn golden_min<F: Fn(f64) -> Result<f64>>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (fc, c) } else { (fd, d) })
}

/// Large-`n` piecewise-linear gap of the binomial random energy model.
pub fn rem_gap_asymptotic(n: u32, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid("s", format!("{s} outside [0, 1]")));
    }
    let n = f64::from(n);
    let slope = 0.5 * (3.0 * n - 1.0);
    Ok(if s <= 2.0 * n / (3.0 * n - 1.0) {
        n - slope * s
    } else if n > 1.0 && s <= 2.0 * n / (3.0 * n - 3.0) {
        slope * s - n
    } else {
        s
    })
}

/// Closed-form minimum gap `(2n/3)·2^{−n/2}` and its location `2n/(3n−1)`.
pub fn rem_min_gap(n: u32) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(invalid("n", "closed-form minimum gap needs n ≥ 2"));
    }
    let nf = f64::from(n);
    Ok((2.0 * nf / 3.0 * 2f64.powf(-nf / 2.0), 2.0 * nf / (3.0 * nf - 1.0)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

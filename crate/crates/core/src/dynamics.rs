//! Time evolution under a schedule: the reduced `(K+1)`-class system and the
//! full `2^n`-dimensional oracle.
//!
//! The reduced system is integrated in the symmetrized amplitudes
//! `b_j = √η_j·c_j`, where it reads `i ḃ = H_eff(s(t)) b`; this keeps every
//! component `O(1)` whatever the multiplicities. States are reported in the
//! `c_j` convention (`c_j(0) = 1`, `Σ η_j |c_j|² = 1`).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::ode::{ComplexSystem, Integrator, IntegratorConfig, Stats, StepControl, C64};
use crate::schedule::Schedule;
use crate::spectrum::{ScrambledDiagonal, ValidatedSpectrum};

const I: C64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    /// `c_j`.
    pub amplitudes: Vec<C64>,
    pub time: f64,
}

impl ReducedState {
    pub fn probabilities(&self, eta: &[f64]) -> Vec<f64> {
        self.amplitudes.iter().zip(eta).map(|(c, e)| e * c.norm_sqr()).collect()
    }

    pub fn weighted_norm(&self, eta: &[f64]) -> f64 {
        self.probabilities(eta).iter().sum()
    }
}

pub fn initial_reduced(spec: &ValidatedSpectrum) -> ReducedState {
    ReducedState {
        amplitudes: vec![C64::new(1.0, 0.0); spec.num_classes()],
        time: 0.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSample {
    pub t: f64,
    pub s: f64,
    pub state: ReducedState,
    pub probabilities: Vec<f64>,
    pub weighted_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTrajectory {
    pub samples: Vec<ReducedSample>,
    pub eta: Vec<f64>,
    pub total_time: f64,
    /// Largest `|Σ p_j − 1|` over the samples.
    pub max_norm_drift: f64,
    pub stats: Stats,
}

impl ReducedTrajectory {
    pub fn last(&self) -> &ReducedSample {
        self.samples.last().expect("trajectory has at least two samples")
    }
}

/// `p_0` at the final sample.
pub fn ground_probability(traj: &ReducedTrajectory) -> f64 {
    traj.last().probabilities[0]
}

/// `count` uniform interior times plus both ends.
pub fn sample_times(total_time: f64, count: usize) -> Vec<f64> {
    let m = count + 1;
    (0..=m).map(|i| total_time * i as f64 / m as f64).collect()
}

struct ReducedSystem<'a> {
    values: &'a [f64],
    coupling: &'a [f64],
    driver_scale: f64,
    schedule: &'a Schedule,
}

impl ComplexSystem for ReducedSystem<'_> {
    fn dim(&self) -> usize {
        self.values.len()
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let s = self.schedule.s_at(t);
        let rho = (1.0 - s) * self.driver_scale;
        let proj: C64 = self.coupling.iter().zip(y).map(|(v, b)| b * v).sum();
        for (((d, b), f), v) in dy.iter_mut().zip(y).zip(self.values).zip(self.coupling) {
            *d = -I * (b * (s * f) - proj * (rho * v));
        }
    }
}

fn check_tolerance(cfg: &IntegratorConfig) -> Result<()> {
    if cfg.control == StepControl::Adaptive && !(cfg.rtol > 0.0 && cfg.atol > 0.0) {
        return Err(invalid("tol", "integration tolerances must be positive"));
    }
    Ok(())
}

fn drift_limit(cfg: &IntegratorConfig) -> Option<f64> {
    match cfg.control {
        StepControl::Adaptive => Some(10.0 * cfg.rtol),
        StepControl::Fixed { .. } | StepControl::FixedCount { .. } => None,
    }
}

fn to_symmetric(state: &ReducedState, coupling: &[f64]) -> Vec<C64> {
    state.amplitudes.iter().zip(coupling).map(|(c, v)| c * v).collect()
}

fn from_symmetric(b: &[C64], coupling: &[f64], time: f64) -> ReducedState {
    ReducedState {
        amplitudes: b.iter().zip(coupling).map(|(b, v)| b / v).collect(),
        time,
    }
}

/// Integrates the reduced system from `c_j = 1` over `[0, T]`.
pub fn integrate_reduced(
    spec: &ValidatedSpectrum,
    schedule: &Schedule,
    cfg: &IntegratorConfig,
    sample_count: usize,
) -> Result<ReducedTrajectory> {
    integrate_reduced_at(spec, schedule, cfg, &sample_times(schedule.total_time(), sample_count))
}

/// As [`integrate_reduced`], sampled at the given increasing times (the
/// first must be 0).
pub fn integrate_reduced_at(
    spec: &ValidatedSpectrum,
    schedule: &Schedule,
    cfg: &IntegratorConfig,
    times: &[f64],
) -> Result<ReducedTrajectory> {
    check_tolerance(cfg)?;
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "sample times must start at 0 and increase strictly"));
    }
    let coupling = spec.eta().coupling();
    let eta = spec.eta().as_slice().to_vec();
    let sys = ReducedSystem {
        values: spec.values(),
        coupling: &coupling,
        driver_scale: spec.driver_scale(),
        schedule,
    };
    let mut b = to_symmetric(&initial_reduced(spec), &coupling);
    let span = times.last().copied().unwrap_or(0.0);
    let mut integrator = Integrator::new(*cfg, b.len()).with_budget_span(span);
    let mut samples = Vec::with_capacity(times.len());
    let mut max_drift = 0.0f64;
    let mut t_prev = 0.0;
    for &t in times {
        integrator.advance(&sys, t_prev, t, &mut b)?;
        t_prev = t;
        let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        max_drift = max_drift.max((norm - 1.0).abs());
        let state = from_symmetric(&b, &coupling, t);
        samples.push(ReducedSample {
            t,
            s: schedule.s_at(t),
            probabilities: b.iter().map(|z| z.norm_sqr()).collect(),
            weighted_norm: norm,
            state,
        });
    }
    if let Some(limit) = drift_limit(cfg) {
        if max_drift > limit {
            return Err(Error::ToleranceNotMet(format!(
                "weighted norm drifted by {max_drift:e}, above {limit:e}"
            )));
        }
    }
    Ok(ReducedTrajectory {
        samples,
        eta,
        total_time: schedule.total_time(),
        max_norm_drift: max_drift,
        stats: integrator.stats(),
    })
}

/// Evolves a reduced state from `t0` to `t1` (backwards when `t1 < t0`).
pub fn evolve_reduced(
    spec: &ValidatedSpectrum,
    schedule: &Schedule,
    cfg: &IntegratorConfig,
    state: &ReducedState,
    t1: f64,
) -> Result<ReducedState> {
    check_tolerance(cfg)?;
    let coupling = spec.eta().coupling();
    let sys = ReducedSystem {
        values: spec.values(),
        coupling: &coupling,
        driver_scale: spec.driver_scale(),
        schedule,
    };
    let mut b = to_symmetric(state, &coupling);
    Integrator::new(*cfg, b.len())
        .with_budget_span((t1 - state.time).abs())
        .advance(&sys, state.time, t1, &mut b)?;
    Ok(from_symmetric(&b, &coupling, t1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub amplitudes: Vec<C64>,
    pub time: f64,
}

impl FullState {
    /// `|φ⟩ = N^{-1/2} Σ_i |i⟩`.
    pub fn uniform(dim: usize) -> Self {
        let a = 1.0 / (dim as f64).sqrt();
        FullState {
            amplitudes: vec![C64::new(a, 0.0); dim],
            time: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|⟨φ|ψ⟩|`.
    pub fn uniform_fidelity(&self) -> f64 {
        let n = self.amplitudes.len() as f64;
        (self.amplitudes.iter().sum::<C64>() / n.sqrt()).norm()
    }
}

struct FullSystem<'a> {
    entries: &'a [f64],
    driver_scale: f64,
    schedule: &'a Schedule,
}

impl ComplexSystem for FullSystem<'_> {
    fn dim(&self) -> usize {
        self.entries.len()
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let s = self.schedule.s_at(t);
        let rho = (1.0 - s) * self.driver_scale;
        let mean = y.iter().sum::<C64>() / y.len() as f64;
        let drive = mean * rho;
        for ((d, psi), e) in dy.iter_mut().zip(y).zip(self.entries) {
            *d = -I * (psi * (s * e) - drive);
        }
    }
}

/// Full-space evolution from `|φ⟩` over `[0, T]`.
pub fn integrate_full(
    diag: &ScrambledDiagonal,
    driver_scale: f64,
    schedule: &Schedule,
    cfg: &IntegratorConfig,
) -> Result<FullState> {
    let mut states = integrate_full_at(diag, driver_scale, schedule, cfg, &[0.0, schedule.total_time()])?;
    Ok(states.pop().expect("two sample times"))
}

/// Full-space states at the given increasing times (the first must be 0).
pub fn integrate_full_at(
    diag: &ScrambledDiagonal,
    driver_scale: f64,
    schedule: &Schedule,
    cfg: &IntegratorConfig,
    times: &[f64],
) -> Result<Vec<FullState>> {
    check_tolerance(cfg)?;
    if !(driver_scale.is_finite() && driver_scale > 0.0) {
        return Err(invalid("driver_scale", format!("{driver_scale} is not positive")));
    }
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "sample times must start at 0 and increase strictly"));
    }
    let sys = FullSystem {
        entries: diag.entries(),
        driver_scale,
        schedule,
    };
    let mut psi = FullState::uniform(diag.len()).amplitudes;
    let span = times.last().copied().unwrap_or(0.0);
    let mut integrator = Integrator::new(*cfg, psi.len()).with_budget_span(span);
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    let mut max_drift = 0.0f64;
    for &t in times {
        integrator.advance(&sys, t_prev, t, &mut psi)?;
        t_prev = t;
        let state = FullState {
            amplitudes: psi.clone(),
            time: t,
        };
        max_drift = max_drift.max((state.norm() - 1.0).abs());
        out.push(state);
    }
    if let Some(limit) = drift_limit(cfg) {
        if max_drift > limit {
            return Err(Error::ToleranceNotMet(format!("norm drifted by {max_drift:e}, above {limit:e}")));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregated {
    pub state: ReducedState,
    /// Largest `√N·|ψ_i − mean of ψ over i's class|`, in `c` units.
    pub spread: f64,
}

/// Class sums `c_j = √N · Σ_{i∈j} ψ_i / m_j`.
pub fn aggregate_full_to_reduced(full: &FullState, diag: &ScrambledDiagonal) -> Aggregated {
    let k1 = diag.spectrum().num_classes();
    let counts = diag.class_counts();
    let mut sums = vec![C64::new(0.0, 0.0); k1];
    for (psi, &c) in full.amplitudes.iter().zip(diag.class_of()) {
        sums[c] += psi;
    }
    let sqrt_n = (full.amplitudes.len() as f64).sqrt();
    let means: Vec<C64> = sums.iter().zip(&counts).map(|(s, &m)| s / m as f64).collect();
    let spread = full
        .amplitudes
        .iter()
        .zip(diag.class_of())
        .map(|(psi, &c)| (psi - means[c]).norm() * sqrt_n)
        .fold(0.0, f64::max);
    Aggregated {
        state: ReducedState {
            amplitudes: means.iter().map(|m| m * sqrt_n).collect(),
            time: full.time,
        },
        spread,
    }
}

/// Class probabilities `Σ_{i∈j} |ψ_i|²` of a full state.
pub fn class_probabilities(full: &FullState, diag: &ScrambledDiagonal) -> Vec<f64> {
    let mut p = vec![0.0; diag.spectrum().num_classes()];
    for (psi, &c) in full.amplitudes.iter().zip(diag.class_of()) {
        p[c] += psi.norm_sqr();
    }
    p
}

/// `max_i |a_i·e^{iφ} − b_i|` with `φ` chosen so the largest-modulus
/// component of `b` has matching phase.
pub fn max_error_up_to_phase(a: &[C64], b: &[C64]) -> f64 {
    let Some(k) = (0..b.len()).max_by(|&i, &j| b[i].norm().total_cmp(&b[j].norm())) else {
        return 0.0;
    };
    let phase = if a[k].norm() > 0.0 && b[k].norm() > 0.0 {
        C64::from_polar(1.0, b[k].arg() - a[k].arg())
    } else {
        C64::new(1.0, 0.0)
    };
    a.iter().zip(b).map(|(x, y)| (x * phase - y).norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Readout {
    /// Basis index for full states, class index for reduced ones.
    pub outcome: usize,
    pub class: usize,
    /// `e_0 + f_class`.
    pub energy: f64,
}

fn sample_index(weights: impl Iterator<Item = f64> + Clone, seed: u64) -> usize {
    let total: f64 = weights.clone().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if target < acc {
            return i;
        }
    }
    last
}

/// Samples a basis state with probability `|ψ_i|²`.
pub fn measure_full(full: &FullState, diag: &ScrambledDiagonal, seed: u64) -> Readout {
    let i = sample_index(full.amplitudes.iter().map(|z| z.norm_sqr()), seed);
    Readout {
        outcome: i,
        class: diag.class_of()[i],
        energy: diag.entries()[i],
    }
}

/// Samples a class with probability `p_j = η_j |c_j|²`.
pub fn measure_reduced(state: &ReducedState, spec: &ValidatedSpectrum, seed: u64) -> Readout {
    let p = state.probabilities(spec.eta().as_slice());
    let j = sample_index(p.into_iter(), seed);
    Readout {
        outcome: j,
        class: j,
        energy: spec.offset() + spec.values()[j],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{constant_rate, constant_s, dj_reference_profile, path_from_profile};
    use crate::spectrum::{dj_spectrum, grover_spectrum, rem_spectrum, scramble, DjKind};
    use std::f64::consts::{PI, SQRT_2};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn initial_states() {
        let dj = dj_spectrum(3, DjKind::Balanced).unwrap();
        let st = initial_reduced(&dj);
        assert_eq!(st.amplitudes, vec![C64::new(1.0, 0.0); 2]);
        assert_eq!(st.probabilities(dj.eta().as_slice()), vec![0.5, 0.5]);
        let rem = rem_spectrum(2).unwrap();
        assert_eq!(initial_reduced(&rem).probabilities(rem.eta().as_slice()), vec![0.25, 0.5, 0.25]);
        let c = dj_spectrum(3, DjKind::Constant0).unwrap();
        assert_eq!(initial_reduced(&c).weighted_norm(c.eta().as_slice()), 1.0);
    }

    #[test]
    fn constant_spectrum_stays_put() {
        let c = dj_spectrum(5, DjKind::Constant1).unwrap();
        let traj = integrate_reduced(&c, &constant_rate(7.0).unwrap(), &cfg(), 20).unwrap();
        for smp in &traj.samples {
            assert!((smp.state.amplitudes[0].norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rabi_half_period() {
        let dj = dj_spectrum(3, DjKind::Balanced).unwrap();
        let traj = integrate_reduced(&dj, &constant_s(0.5, SQRT_2 * PI).unwrap(), &cfg(), 10).unwrap();
        assert!(ground_probability(&traj) > 1.0 - 1e-6);
        // two half-periods bring the populations back
        let back = integrate_reduced(&dj, &constant_s(0.5, 2.0 * SQRT_2 * PI).unwrap(), &cfg(), 10).unwrap();
        assert!((ground_probability(&back) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sample_layout() {
        let t = sample_times(3.0, 2);
        assert_eq!(t, vec![0.0, 1.0, 2.0, 3.0]);
        let dj = dj_spectrum(3, DjKind::Balanced).unwrap();
        let traj = integrate_reduced(&dj, &constant_rate(3.0).unwrap(), &cfg(), 2).unwrap();
        assert_eq!(traj.samples.len(), 4);
        assert!(traj.samples[0].probabilities.iter().all(|p| (p - 0.5).abs() < 1e-15));
        assert!(traj.max_norm_drift < 1e-9);
    }

    #[test]
    fn offset_never_enters_reduced_dynamics() {
        let rem = rem_spectrum(6).unwrap();
        let sch = constant_rate(5.0).unwrap();
        let a = integrate_reduced(&rem, &sch, &cfg(), 5).unwrap();
        let b = integrate_reduced(&rem.with_offset(7.3).unwrap(), &sch, &cfg(), 5).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            for (p, q) in x.probabilities.iter().zip(&y.probabilities) {
                assert!((p - q).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn reduced_dynamics_independent_of_n() {
        let (_, sch) = path_from_profile(dj_reference_profile(), 1024).unwrap();
        let a = integrate_reduced(&dj_spectrum(4, DjKind::Balanced).unwrap(), &sch, &cfg(), 50).unwrap();
        let b = integrate_reduced(&dj_spectrum(16, DjKind::Balanced).unwrap(), &sch, &cfg(), 50).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!(max_error_up_to_phase(&x.state.amplitudes, &y.state.amplitudes) <= 1e-10);
        }
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let rem = rem_spectrum(8).unwrap();
        let sch = constant_rate(6.0).unwrap();
        let start = initial_reduced(&rem);
        let fwd = evolve_reduced(&rem, &sch, &cfg(), &start, 6.0).unwrap();
        let back = evolve_reduced(&rem, &sch, &cfg(), &fwd, 0.0).unwrap();
        assert_eq!(back.time, 0.0);
        let err = back
            .amplitudes
            .iter()
            .zip(&start.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn full_oracle_matches_reduced() {
        let rem = rem_spectrum(8).unwrap();
        let diag = scramble(&rem, 11).unwrap();
        let sch = constant_rate(4.0).unwrap();
        let tight = IntegratorConfig::default().with_tolerance(1e-12);
        let full = integrate_full(&diag, rem.driver_scale(), &sch, &tight).unwrap();
        let agg = aggregate_full_to_reduced(&full, &diag);
        assert!(agg.spread <= 1e-9);
        let red = integrate_reduced(&rem, &sch, &tight, 0).unwrap();
        let err = max_error_up_to_phase(&agg.state.amplitudes, &red.last().state.amplitudes);
        assert!(err <= 1e-8, "{err}");
        assert!((full.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn aggregation_of_initial_state() {
        let rem = rem_spectrum(4).unwrap();
        let diag = scramble(&rem, 3).unwrap();
        let agg = aggregate_full_to_reduced(&FullState::uniform(16), &diag);
        for c in &agg.state.amplitudes {
            assert!((c - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert!(agg.spread < 1e-15);
    }

    #[test]
    fn constant_oracle_keeps_uniform_state() {
        let c = dj_spectrum(6, DjKind::Constant0).unwrap();
        let diag = scramble(&c, 5).unwrap();
        let full = integrate_full(&diag, 1.0, &constant_rate(9.0).unwrap(), &cfg()).unwrap();
        assert!((full.uniform_fidelity() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn full_offset_is_a_phase() {
        let g = grover_spectrum(6, 3).unwrap();
        let diag = scramble(&g, 2).unwrap();
        let sch = constant_rate(3.0).unwrap();
        let a = integrate_full(&diag, 1.0, &sch, &cfg()).unwrap();
        let b = integrate_full(&diag.with_offset(5.0).unwrap(), 1.0, &sch, &cfg()).unwrap();
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            assert!((x.norm_sqr() - y.norm_sqr()).abs() <= 1e-10);
        }
    }

    #[test]
    fn measurement_is_deterministic_and_follows_distribution() {
        let rem = rem_spectrum(2).unwrap();
        let st = initial_reduced(&rem);
        assert_eq!(measure_reduced(&st, &rem, 9), measure_reduced(&st, &rem, 9));
        let draws = 100_000u64;
        let mut counts = [0u64; 3];
        for seed in 0..draws {
            counts[measure_reduced(&st, &rem, seed).class] += 1;
        }
        let expected = [0.25, 0.5, 0.25];
        let chi2: f64 = counts
            .iter()
            .zip(expected)
            .map(|(&o, p)| {
                let e = p * draws as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        // 2 degrees of freedom, 99.9% quantile ≈ 13.8
        assert!(chi2 < 13.8, "chi2 = {chi2}");
    }

    #[test]
    fn measuring_constant_oracle_reads_offset() {
        let c = dj_spectrum(4, DjKind::Constant0).unwrap().with_offset(2.5).unwrap();
        let diag = scramble(&c, 1).unwrap();
        for seed in 0..20 {
            assert_eq!(measure_full(&FullState::uniform(16), &diag, seed).energy, 2.5);
        }
    }

    #[test]
    fn bad_sample_times_rejected() {
        let dj = dj_spectrum(3, DjKind::Balanced).unwrap();
        let sch = constant_rate(1.0).unwrap();
        assert!(integrate_reduced_at(&dj, &sch, &cfg(), &[0.5, 1.0]).is_err());
        assert!(integrate_reduced_at(&dj, &sch, &cfg(), &[0.0, 0.5, 0.5]).is_err());
    }
}

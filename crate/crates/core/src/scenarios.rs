//! End-to-end runs: the two-run Deutsch-Josza protocol, random-energy-model
//! and Grover runtimes, and log-scale scaling fits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    class_probabilities, ground_probability, integrate_full, integrate_reduced, measure_full, measure_reduced,
    ReducedTrajectory,
};
use crate::effective::{low_levels, numeric_min_gap};
use crate::error::{invalid, Error, Result};
use crate::ode::IntegratorConfig;
use crate::schedule::{
    constant_rate, dj_reference_profile, local_adiabatic_for, path_from_profile, LocalAdiabaticConfig, Schedule,
    DEFAULT_KNOTS,
};
use crate::spectrum::{grover_spectrum, rem_spectrum, ScrambledDiagonal, ValidatedSpectrum};

/// Readout probabilities closer than this to 0 or 1 count as deterministic.
pub const READOUT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Constant,
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DjVerdict {
    pub run1_energy: f64,
    pub run2_energy: f64,
    pub verdict: Verdict,
    /// Duration of each of the two runs.
    pub run_time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backend {
    #[default]
    Reduced,
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReadoutMode {
    /// Final class probabilities, required to be 0/1 within [`READOUT_TOL`].
    #[default]
    Exact,
    /// A single seeded projective measurement per run.
    Sampled,
}

/// The deterministic two-run protocol: anneal with `H_p = F`, then with
/// `H_p = 1 − F`, along the path generated by the reference profile.
#[derive(Clone, Debug)]
pub struct DjProtocol {
    schedule: Schedule,
    pub integrator: IntegratorConfig,
    pub backend: Backend,
    pub readout: ReadoutMode,
}

impl DjProtocol {
    pub fn new(grid: usize) -> Result<Self> {
        let (_, schedule) = path_from_profile(dj_reference_profile(), grid)?;
        Ok(DjProtocol {
            schedule,
            integrator: IntegratorConfig::default(),
            backend: Backend::default(),
            readout: ReadoutMode::default(),
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn run(&self, oracle: &ScrambledDiagonal, seed: u64) -> Result<DjVerdict> {
        let spec = oracle.spectrum();
        if spec.values().iter().any(|&v| v != 0.0 && v != 1.0) || spec.offset() != 0.0 {
            return Err(Error::PromiseViolation(format!(
                "oracle values {:?} with offset {} are not a Boolean function",
                spec.values(),
                spec.offset()
            )));
        }
        let run1_energy = self.single_run(oracle, seed)?;
        let run2_energy = self.single_run(&oracle.complement(), seed.wrapping_add(1))?;
        let verdict = match (run1_energy == 0.0, run2_energy == 0.0) {
            (true, true) => Verdict::Balanced,
            (true, false) | (false, true) => Verdict::Constant,
            (false, false) => {
                return Err(Error::PromiseViolation(format!(
                    "readouts ({run1_energy}, {run2_energy}) are impossible for a constant or balanced oracle"
                )))
            }
        };
        Ok(DjVerdict {
            run1_energy,
            run2_energy,
            verdict,
            run_time: self.schedule.total_time(),
        })
    }

    fn single_run(&self, oracle: &ScrambledDiagonal, seed: u64) -> Result<f64> {
        let spec = oracle.spectrum();
        match self.backend {
            Backend::Reduced => {
                let traj = integrate_reduced(spec, &self.schedule, &self.integrator, 0)?;
                match self.readout {
                    ReadoutMode::Exact => exact_readout(spec, &traj.last().probabilities),
                    ReadoutMode::Sampled => Ok(measure_reduced(&traj.last().state, spec, seed).energy),
                }
            }
            Backend::Full => {
                let full = integrate_full(oracle, spec.driver_scale(), &self.schedule, &self.integrator)?;
                match self.readout {
                    ReadoutMode::Exact => exact_readout(spec, &class_probabilities(&full, oracle)),
                    ReadoutMode::Sampled => Ok(measure_full(&full, oracle, seed).energy),
                }
            }
        }
    }
}

fn exact_readout(spec: &ValidatedSpectrum, probabilities: &[f64]) -> Result<f64> {
    match probabilities.iter().position(|&p| p >= 1.0 - READOUT_TOL) {
        Some(j) => Ok(spec.offset() + spec.values()[j]),
        None => Err(Error::PromiseViolation(format!(
            "final class probabilities {probabilities:?} are not deterministic"
        ))),
    }
}

/// Two-run protocol with the default path and reduced dynamics.
pub fn run_deutsch_josza(oracle: &ScrambledDiagonal, seed: u64) -> Result<DjVerdict> {
    DjProtocol::new(DEFAULT_KNOTS)?.run(oracle, seed)
}

/// First local maximum of `p_0(t)` under a constant-s schedule, located on a
/// uniform grid of `grid` points over `[0, t_max]` and refined by golden
/// section.
pub fn first_ground_maximum(
    spec: &ValidatedSpectrum,
    s_fixed: f64,
    t_max: f64,
    grid: usize,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let sch = crate::schedule::constant_s(s_fixed, t_max)?;
    let traj = integrate_reduced(spec, &sch, cfg, grid)?;
    let p: Vec<f64> = traj.samples.iter().map(|x| x.probabilities[0]).collect();
    let k = (1..p.len() - 1)
        .find(|&i| p[i] >= p[i - 1] && p[i] > p[i + 1])
        .ok_or_else(|| invalid("t_max", "no interior maximum of p_0 in the window"))?;
    let p_at = |t: f64| -> Result<f64> {
        let times = [0.0, t];
        let tr = crate::dynamics::integrate_reduced_at(spec, &sch, cfg, &times)?;
        Ok(tr.last().probabilities[0])
    };
    let (mut a, mut b) = (traj.samples[k - 1].t, traj.samples[k + 1].t);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (p_at(c)?, p_at(d)?);
    while b - a > 1e-9 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = p_at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = p_at(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, p_at(t)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealOptions {
    pub grid: usize,
    /// Also integrate the reduced dynamics to get the success probability.
    pub simulate: bool,
    pub integrator: IntegratorConfig,
}

impl Default for AnnealOptions {
    fn default() -> Self {
        AnnealOptions {
            grid: DEFAULT_KNOTS,
            simulate: true,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub n: u32,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "epsilonT")]
    pub epsilon_t: f64,
    pub min_gap: f64,
    pub s_min_gap: f64,
    pub ground_probability: Option<f64>,
    pub norm_drift: Option<f64>,
}

fn simulate(spec: &ValidatedSpectrum, sch: &Schedule, opts: &AnnealOptions) -> Result<Option<ReducedTrajectory>> {
    if !opts.simulate {
        return Ok(None);
    }
    integrate_reduced(spec, sch, &opts.integrator, 0).map(Some)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("{epsilon} is not positive")))
    }
}

/// Local-adiabatic anneal of `spec`, returning the schedule and its result.
pub fn anneal_local_adiabatic(
    spec: &ValidatedSpectrum,
    epsilon: f64,
    opts: &AnnealOptions,
) -> Result<(Schedule, AnnealResult)> {
    check_epsilon(epsilon)?;
    let mut cfg = LocalAdiabaticConfig::new(epsilon);
    cfg.grid = opts.grid;
    let sch = local_adiabatic_for(spec, &cfg)?;
    let (gmin, smin) = numeric_min_gap(spec, 2048)?;
    let traj = simulate(spec, &sch, opts)?;
    let result = AnnealResult {
        n: spec.n(),
        epsilon,
        t: sch.total_time(),
        epsilon_t: epsilon * sch.total_time(),
        min_gap: gmin,
        s_min_gap: smin,
        ground_probability: traj.as_ref().map(ground_probability),
        norm_drift: traj.as_ref().map(|t| t.max_norm_drift),
    };
    Ok((sch, result))
}

/// Runtime of a constant-rate anneal sized by the global condition
/// `T = max_s V01 / (ε·min_s g²)`, with `V01` maximized over `grid` points.
pub fn global_bound_runtime(spec: &ValidatedSpectrum, epsilon: f64, grid: usize) -> Result<(f64, f64, f64)> {
    check_epsilon(epsilon)?;
    let (gmin, smin) = numeric_min_gap(spec, 2048)?;
    let grid = grid.max(2);
    let mut vmax = low_levels(spec, smin)?.v01;
    for i in 0..=grid {
        vmax = vmax.max(low_levels(spec, i as f64 / grid as f64)?.v01);
    }
    Ok((vmax / (epsilon * gmin * gmin), gmin, smin))
}

pub fn anneal_global_bound(
    spec: &ValidatedSpectrum,
    epsilon: f64,
    opts: &AnnealOptions,
) -> Result<(Schedule, AnnealResult)> {
    let (t, gmin, smin) = global_bound_runtime(spec, epsilon, opts.grid)?;
    let sch = constant_rate(t)?;
    let traj = simulate(spec, &sch, opts)?;
    let result = AnnealResult {
        n: spec.n(),
        epsilon,
        t,
        epsilon_t: epsilon * t,
        min_gap: gmin,
        s_min_gap: smin,
        ground_probability: traj.as_ref().map(ground_probability),
        norm_drift: traj.as_ref().map(|t| t.max_norm_drift),
    };
    Ok((sch, result))
}

/// Binomial random energy model with a local-adiabatic schedule.
pub fn run_rem(n: u32, epsilon: f64, opts: &AnnealOptions) -> Result<AnnealResult> {
    if n < 4 {
        return Err(invalid("n", format!("{n} is below the minimum of 4")));
    }
    Ok(anneal_local_adiabatic(&rem_spectrum(n)?, epsilon, opts)?.1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroverSchedule {
    #[default]
    LocalAdiabatic,
    /// Constant rate sized by the global adiabatic condition.
    ConstantRate,
}

impl std::str::FromStr for GroverSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" | "local_adiabatic" => Ok(GroverSchedule::LocalAdiabatic),
            "linear" | "constant_rate" => Ok(GroverSchedule::ConstantRate),
            other => Err(Error::Parse(format!("unknown schedule kind {other:?}"))),
        }
    }
}

pub fn run_grover(n: u32, marked: u64, epsilon: f64, kind: GroverSchedule, opts: &AnnealOptions) -> Result<AnnealResult> {
    let spec = grover_spectrum(n, marked)?;
    let (_, r) = match kind {
        GroverSchedule::LocalAdiabatic => anneal_local_adiabatic(&spec, epsilon, opts)?,
        GroverSchedule::ConstantRate => anneal_global_bound(&spec, epsilon, opts)?,
    };
    Ok(r)
}

/// `a:b:step` inclusive range of bit counts.
pub fn parse_sweep(text: &str) -> Result<Vec<u32>> {
    let parts: Vec<&str> = text.split(':').collect();
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| Error::Parse(format!("sweep {text:?}: {e}")));
    let (a, b, step) = match parts.as_slice() {
        [a, b] => (parse(a)?, parse(b)?, 1),
        [a, b, c] => (parse(a)?, parse(b)?, parse(c)?),
        _ => return Err(Error::Parse(format!("sweep {text:?} is not a:b or a:b:step"))),
    };
    if step == 0 || b < a {
        return Err(Error::Parse(format!("sweep {text:?} is empty")));
    }
    Ok((a..=b).step_by(step as usize).collect())
}

pub fn rem_sweep(ns: &[u32], epsilon: f64, opts: &AnnealOptions) -> Result<Vec<AnnealResult>> {
    ns.par_iter().map(|&n| run_rem(n, epsilon, opts)).collect()
}

pub fn grover_sweep(
    ns: &[u32],
    marked: u64,
    epsilon: f64,
    kind: GroverSchedule,
    opts: &AnnealOptions,
) -> Result<Vec<AnnealResult>> {
    ns.par_iter().map(|&n| run_grover(n, marked, epsilon, kind, opts)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    /// `log₂ T` against `n`.
    Log2TVsN,
    /// `ln T` against `ln N = n ln 2`.
    LogTVsLogN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<(f64, f64)>,
    pub model: ScalingModel,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit on the log axes.
    pub residual: f64,
}

/// Least-squares line through `(n, T)` on the axes of `model`.
pub fn fit_scaling(points: &[(f64, f64)], model: ScalingModel) -> Result<ScalingReport> {
    if points.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 4", points.len())));
    }
    if points.iter().any(|&(n, t)| !(n.is_finite() && t.is_finite() && t > 0.0)) {
        return Err(Error::DegenerateFit("runtimes must be positive and finite".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|&(n, t)| match model {
            ScalingModel::Log2TVsN => (n, t.log2()),
            ScalingModel::LogTVsLogN => (n * std::f64::consts::LN_2, t.ln()),
        })
        .unzip();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all points share one abscissa".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(ScalingReport {
        points: points.to_vec(),
        model,
        slope,
        intercept,
        residual,
    })
}

/// Machine-readable summary of one scenario run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "epsilonT", skip_serializing_if = "Option::is_none")]
    pub epsilon_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DjVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<AnnealResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<ScalingReport>,
}

impl ScenarioReport {
    pub fn new(scenario: &str, seed: u64) -> Self {
        ScenarioReport {
            scenario: scenario.to_string(),
            seed,
            ..Default::default()
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{dj_spectrum, scramble, DjKind};

    #[test]
    fn dj_examples() {
        let proto = DjProtocol::new(DEFAULT_KNOTS).unwrap();
        let c0 = scramble(&dj_spectrum(6, DjKind::Constant0).unwrap(), 1).unwrap();
        let v = proto.run(&c0, 0).unwrap();
        assert_eq!((v.run1_energy, v.run2_energy, v.verdict), (0.0, 1.0, Verdict::Constant));
        let c1 = scramble(&dj_spectrum(6, DjKind::Constant1).unwrap(), 1).unwrap();
        let v = proto.run(&c1, 0).unwrap();
        assert_eq!((v.run1_energy, v.run2_energy, v.verdict), (1.0, 0.0, Verdict::Constant));
        for seed in 0..3 {
            let b = scramble(&dj_spectrum(6, DjKind::Balanced).unwrap(), seed).unwrap();
            let v = proto.run(&b, seed).unwrap();
            assert_eq!((v.run1_energy, v.run2_energy, v.verdict), (0.0, 0.0, Verdict::Balanced));
        }
    }

    #[test]
    fn dj_full_backend_and_sampled_readout_agree() {
        let mut proto = DjProtocol::new(DEFAULT_KNOTS).unwrap();
        proto.backend = Backend::Full;
        let b = scramble(&dj_spectrum(6, DjKind::Balanced).unwrap(), 4).unwrap();
        assert_eq!(proto.run(&b, 1).unwrap().verdict, Verdict::Balanced);
        proto.readout = ReadoutMode::Sampled;
        let c = scramble(&dj_spectrum(6, DjKind::Constant0).unwrap(), 4).unwrap();
        assert_eq!(proto.run(&c, 1).unwrap().verdict, Verdict::Constant);
    }

    #[test]
    fn dj_promise_violations() {
        let proto = DjProtocol::new(256).unwrap();
        let unbalanced = scramble(&grover_spectrum(6, 1).unwrap(), 0).unwrap();
        assert!(matches!(proto.run(&unbalanced, 0), Err(Error::PromiseViolation(_))));
        let rem = scramble(&rem_spectrum(4).unwrap(), 0).unwrap();
        assert!(matches!(proto.run(&rem, 0), Err(Error::PromiseViolation(_))));
    }

    #[test]
    fn fit_exact_data() {
        let pts: Vec<(f64, f64)> = (4..10).map(|n| (n as f64, 2f64.powf(n as f64 / 2.0))).collect();
        let r = fit_scaling(&pts, ScalingModel::Log2TVsN).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12 && r.residual < 1e-12);
        let lin: Vec<(f64, f64)> = (4..10).map(|n| (n as f64, 3.0 * 2f64.powi(n))).collect();
        let r = fit_scaling(&lin, ScalingModel::LogTVsLogN).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert!(matches!(fit_scaling(&pts[..3], ScalingModel::Log2TVsN), Err(Error::DegenerateFit(_))));
        let same = vec![(3.0, 1.0); 5];
        assert!(fit_scaling(&same, ScalingModel::Log2TVsN).is_err());
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("20:40:4").unwrap(), vec![20, 24, 28, 32, 36, 40]);
        assert_eq!(parse_sweep("3:5").unwrap(), vec![3, 4, 5]);
        assert!(parse_sweep("5:3").is_err());
        assert!(parse_sweep("5").is_err());
        assert!(parse_sweep("1:4:0").is_err());
    }

    #[test]
    fn rem_probability_improves_as_epsilon_shrinks() {
        let mut last = 0.0;
        for eps in [0.5, 0.2, 0.1, 0.05] {
            let r = run_rem(10, eps, &AnnealOptions::default()).unwrap();
            let p = r.ground_probability.unwrap();
            assert!(p > last, "eps {eps}: {p} <= {last}");
            last = p;
        }
    }

    #[test]
    fn rem_rejects_small_n() {
        assert!(run_rem(3, 0.1, &AnnealOptions::default()).is_err());
        assert!(run_rem(8, 0.0, &AnnealOptions::default()).is_err());
    }

    #[test]
    fn grover_half_marked_is_size_independent() {
        let opts = AnnealOptions {
            simulate: false,
            ..Default::default()
        };
        let a = run_grover(6, 32, 1.0, GroverSchedule::LocalAdiabatic, &opts).unwrap();
        let b = run_grover(12, 2048, 1.0, GroverSchedule::LocalAdiabatic, &opts).unwrap();
        assert!((a.t - b.t).abs() < 1e-8 * a.t);
    }

    #[test]
    fn report_json_keys() {
        let r = ScenarioReport::new("dj", 7).param("n", 8);
        let v: serde_json::Value = serde_json::from_str(&r.to_json_pretty()).unwrap();
        assert_eq!(v["scenario"], "dj");
        assert_eq!(v["params"]["n"], 8);
        assert!(v.get("T").is_none());
    }
}

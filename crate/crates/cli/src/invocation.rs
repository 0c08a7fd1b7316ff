//! Fully resolved, serializable description of a run. A manifest stores one
//! of these; executing it again reproduces the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scrambled_core::ode::IntegratorConfig;
use scrambled_core::spectrum::{dj_spectrum, grover_spectrum, rem_spectrum, DjKind, SpectrumSpec, ValidatedSpectrum};

use crate::cli::{
    BackendArg, DjArgs, DjKindArg, Family, GenerateArgs, GlobalArgs, GroverArgs, GroverScheduleArg, ReadoutArg,
    RemArgs, ScanArgs, ScheduleArg, ScrambleArgs, SimulateArgs, SolverArg, SourceArgs,
};
use crate::config::{self, pick, FileConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    #[serde(flatten)]
    pub task: Task,
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    SpectrumGenerate {
        family: Family,
        n: u32,
        kind: Option<DjKindArg>,
        marked: Option<u64>,
        offset: f64,
        driver_scale: Option<f64>,
    },
    SpectrumScramble {
        spectrum: Source,
        seed: u64,
        cap: u32,
    },
    Scan {
        spectrum: Source,
        points: usize,
        s_min: f64,
        s_max: f64,
        solver: SolverArg,
    },
    Simulate {
        spectrum: Source,
        schedule: ScheduleSpec,
        samples: usize,
        cross_check: bool,
        seed: u64,
        numerics: Numerics,
    },
    ScenarioDj {
        oracle: Source,
        seed: u64,
        grid: usize,
        backend: BackendArg,
        readout: ReadoutArg,
        numerics: Numerics,
    },
    ScenarioRem {
        anneal: AnnealSpec,
    },
    ScenarioGrover {
        anneal: AnnealSpec,
        marked: u64,
        schedule: GroverScheduleArg,
    },
}

/// Where a spectrum comes from. Files are inlined so the invocation does not
/// depend on the file staying put.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Source {
    Family {
        family: Family,
        n: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        kind: Option<DjKindArg>,
        #[serde(skip_serializing_if = "Option::is_none")]
        marked: Option<u64>,
    },
    Inline {
        spectrum: serde_json::Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    ConstantRate { total_time: f64 },
    ConstantS { s: f64, total_time: f64 },
    LocalAdiabatic { epsilon: f64, grid: usize },
    Profile { grid: usize },
    Custom { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub tol: f64,
    pub fixed_steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSpec {
    pub ns: Vec<u32>,
    pub sweep: bool,
    pub epsilon: f64,
    pub grid: usize,
    pub simulate: bool,
    pub numerics: Numerics,
}

impl Numerics {
    pub fn integrator(&self) -> Result<IntegratorConfig> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(CliError::invalid("tol", format!("{} is not positive", self.tol)));
        }
        let cfg = IntegratorConfig::default().with_tolerance(self.tol);
        match self.fixed_steps {
            Some(0) => Err(CliError::invalid("fixed-steps", "must be at least 1")),
            Some(steps) => Ok(cfg.fixed_count(steps)),
            None => Ok(cfg),
        }
    }
}

impl Source {
    pub fn load(&self) -> Result<ValidatedSpectrum> {
        match self {
            Source::Family { family, n, kind, marked } => family_spectrum(*family, *n, *kind, *marked),
            Source::Inline { spectrum } => Ok(SpectrumSpec::from_json_str(&spectrum.to_string())?.validate()?),
        }
    }
}

pub fn dj_kind(kind: DjKindArg) -> DjKind {
    match kind {
        DjKindArg::Balanced => DjKind::Balanced,
        DjKindArg::Constant0 => DjKind::Constant0,
        DjKindArg::Constant1 => DjKind::Constant1,
    }
}

pub fn family_spectrum(family: Family, n: u32, kind: Option<DjKindArg>, marked: Option<u64>) -> Result<ValidatedSpectrum> {
    Ok(match family {
        Family::Dj => dj_spectrum(n, dj_kind(kind.unwrap_or(DjKindArg::Balanced)))?,
        Family::Rem => rem_spectrum(n)?,
        Family::Grover => grover_spectrum(n, marked.unwrap_or(1))?,
    })
}

/// Reads a spectrum file into its normalized JSON form.
pub fn inline_file(path: &Path) -> Result<Source> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec = SpectrumSpec::from_json_str(&text)?;
    let spectrum = serde_json::from_str(&spec.to_json_string()).expect("spectrum JSON reparses");
    Ok(Source::Inline { spectrum })
}

fn resolve_source(args: &SourceArgs) -> Result<Source> {
    if let Some(path) = &args.spectrum {
        return inline_file(path);
    }
    let (Some(family), Some(n)) = (args.family, args.n) else {
        return Err(CliError::invalid("spectrum", "give --spectrum FILE or --family with --n"));
    };
    if family != Family::Dj && args.kind.is_some() {
        return Err(CliError::invalid("kind", "only applies to --family dj"));
    }
    if family != Family::Grover && args.marked.is_some() {
        return Err(CliError::invalid("marked", "only applies to --family grover"));
    }
    Ok(Source::Family {
        family,
        n,
        kind: (family == Family::Dj).then(|| args.kind.unwrap_or(DjKindArg::Balanced)),
        marked: (family == Family::Grover).then(|| args.marked.unwrap_or(1)),
    })
}

/// Flags merged over the config file.
pub struct Resolver<'a> {
    pub global: &'a GlobalArgs,
    pub file: FileConfig,
}

impl<'a> Resolver<'a> {
    pub fn new(global: &'a GlobalArgs) -> Result<Self> {
        let file = match &global.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let r = Resolver { global, file };
        // rejected up front even for commands that never integrate
        r.numerics().integrator()?;
        Ok(r)
    }

    pub fn seed(&self) -> u64 {
        pick(self.global.seed, self.file.seed, config::DEFAULT_SEED)
    }

    pub fn numerics(&self) -> Numerics {
        Numerics {
            tol: pick(self.global.tol, self.file.tol, config::DEFAULT_TOL),
            fixed_steps: self.global.fixed_steps.or(self.file.fixed_steps),
        }
    }

    pub fn gnuplot(&self) -> bool {
        self.global.gnuplot || self.file.gnuplot.unwrap_or(false)
    }

    /// Explicit `--out`, then the file's `out`, else `None` for the default layout.
    pub fn out(&self) -> Option<PathBuf> {
        self.global.out.clone().or_else(|| self.file.out.clone())
    }

    pub fn generate(&self, a: &GenerateArgs) -> Result<Task> {
        if a.family != Family::Dj && a.kind.is_some() {
            return Err(CliError::invalid("kind", "only applies to dj"));
        }
        if a.family != Family::Grover && a.marked.is_some() {
            return Err(CliError::invalid("marked", "only applies to grover"));
        }
        Ok(Task::SpectrumGenerate {
            family: a.family,
            n: a.n,
            kind: (a.family == Family::Dj).then(|| a.kind.unwrap_or(DjKindArg::Balanced)),
            marked: (a.family == Family::Grover).then(|| a.marked.unwrap_or(1)),
            offset: a.offset.unwrap_or(0.0),
            driver_scale: a.driver_scale,
        })
    }

    pub fn scramble(&self, a: &ScrambleArgs) -> Result<Task> {
        Ok(Task::SpectrumScramble {
            spectrum: resolve_source(&a.source)?,
            seed: self.seed(),
            cap: a.cap.unwrap_or(scrambled_core::spectrum::DEFAULT_ORACLE_CAP),
        })
    }

    pub fn scan(&self, a: &ScanArgs) -> Result<Task> {
        let points = pick(a.points, self.file.scan.points, config::DEFAULT_SCAN_POINTS);
        if points < 2 {
            return Err(CliError::invalid("points", format!("{points} is below 2")));
        }
        let (s_min, s_max) = (a.s_min.unwrap_or(0.0), a.s_max.unwrap_or(1.0));
        check_unit("s-min", s_min)?;
        check_unit("s-max", s_max)?;
        if s_min >= s_max {
            return Err(CliError::invalid("s-max", format!("{s_max} is not above s-min {s_min}")));
        }
        Ok(Task::Scan {
            spectrum: resolve_source(&a.source)?,
            points,
            s_min,
            s_max,
            solver: pick(a.solver, self.file.scan.solver, SolverArg::Auto),
        })
    }

    pub fn simulate(&self, a: &SimulateArgs) -> Result<Task> {
        let grid = pick(a.grid, self.file.simulate.grid, config::DEFAULT_GRID);
        let need_t = || {
            let t = a
                .total_time
                .ok_or_else(|| CliError::invalid("T", "required for this schedule"))?;
            check_positive("T", t)?;
            Ok::<f64, CliError>(t)
        };
        let schedule = match a.schedule {
            ScheduleArg::ConstantRate => ScheduleSpec::ConstantRate { total_time: need_t()? },
            ScheduleArg::ConstantS => {
                let s = a.s.ok_or_else(|| CliError::invalid("s", "required for constant-s"))?;
                check_unit("s", s)?;
                ScheduleSpec::ConstantS { s, total_time: need_t()? }
            }
            ScheduleArg::LocalAdiabatic => {
                let epsilon = pick(a.epsilon, self.file.simulate.epsilon, config::DEFAULT_EPSILON);
                check_positive("epsilon", epsilon)?;
                ScheduleSpec::LocalAdiabatic { epsilon, grid }
            }
            ScheduleArg::Profile => ScheduleSpec::Profile { grid },
            ScheduleArg::File => {
                let path = a
                    .schedule_file
                    .as_ref()
                    .ok_or_else(|| CliError::invalid("schedule-file", "required for --schedule file"))?;
                let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                let sch = scrambled_core::export::read_schedule(std::io::BufReader::new(file))?;
                ScheduleSpec::Custom { knots: sch.knots() }
            }
        };
        Ok(Task::Simulate {
            spectrum: resolve_source(&a.source)?,
            schedule,
            samples: pick(a.samples, self.file.simulate.samples, config::DEFAULT_SAMPLES),
            cross_check: a.cross_check,
            seed: self.seed(),
            numerics: self.numerics(),
        })
    }

    pub fn dj(&self, a: &DjArgs) -> Result<Task> {
        let oracle = match &a.spectrum {
            Some(path) => inline_file(path)?,
            None => Source::Family {
                family: Family::Dj,
                n: a.n.ok_or_else(|| CliError::invalid("n", "give --n or --spectrum"))?,
                kind: Some(a.kind.unwrap_or(DjKindArg::Balanced)),
                marked: None,
            },
        };
        Ok(Task::ScenarioDj {
            oracle,
            seed: self.seed(),
            grid: pick(a.grid, self.file.dj.grid, config::DEFAULT_GRID),
            backend: pick(a.backend, self.file.dj.backend, BackendArg::Reduced),
            readout: pick(a.readout, self.file.dj.readout, ReadoutArg::Exact),
            numerics: self.numerics(),
        })
    }

    fn anneal(&self, a: &crate::cli::AnnealArgs) -> Result<AnnealSpec> {
        let (ns, sweep) = match (&a.sweep, a.n) {
            (Some(text), _) => (scrambled_core::scenarios::parse_sweep(text)?, true),
            (None, Some(n)) => (vec![n], false),
            (None, None) => return Err(CliError::invalid("n", "give --n or --sweep a:b:step")),
        };
        let epsilon = pick(a.epsilon, self.file.anneal.epsilon, config::DEFAULT_EPSILON);
        check_positive("epsilon", epsilon)?;
        Ok(AnnealSpec {
            ns,
            sweep,
            epsilon,
            grid: pick(a.grid, self.file.anneal.grid, config::DEFAULT_GRID),
            simulate: pick(a.simulate, self.file.anneal.simulate, !sweep),
            numerics: self.numerics(),
        })
    }

    pub fn rem(&self, a: &RemArgs) -> Result<Task> {
        Ok(Task::ScenarioRem {
            anneal: self.anneal(&a.anneal)?,
        })
    }

    pub fn grover(&self, a: &GroverArgs) -> Result<Task> {
        Ok(Task::ScenarioGrover {
            anneal: self.anneal(&a.anneal)?,
            marked: pick(a.marked, self.file.grover.marked, 1),
            schedule: pick(a.schedule, self.file.grover.schedule, GroverScheduleArg::Local),
        })
    }
}

fn check_unit(name: &'static str, s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(CliError::invalid(name, format!("{s} outside [0, 1]")))
    }
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::invalid(name, format!("{x} is not positive")))
    }
}

impl Task {
    pub fn label(&self) -> &'static str {
        match self {
            Task::SpectrumGenerate { .. } => "spectrum-generate",
            Task::SpectrumScramble { .. } => "spectrum-scramble",
            Task::Scan { .. } => "scan",
            Task::Simulate { .. } => "simulate",
            Task::ScenarioDj { .. } => "scenario-dj",
            Task::ScenarioRem { .. } => "scenario-rem",
            Task::ScenarioGrover { .. } => "scenario-grover",
        }
    }
}

impl Invocation {
    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("invocation serializes");
        hex::encode(Sha256::digest(json))[..12].to_string()
    }

    pub fn default_dir(&self, root: &Path) -> PathBuf {
        root.join(format!("{}-{}", self.task.label(), self.digest()))
    }
}

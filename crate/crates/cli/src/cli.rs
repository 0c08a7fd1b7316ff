use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "AQC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "scrambled", version, about = "Continuous-time quantum search on spectra with scrambled outputs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for scrambles and sampled readouts
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Run directory; defaults to <root>/<command>-<config hash> where <root>
    /// is $AQC_OUT_DIR or ./runs
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Relative tolerance of the adaptive integrator (absolute is 1e-2 of it)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol: Option<f64>,

    /// Fixed-step RK4 with this many steps per run, for bit-reproducible output
    #[arg(long, global = true)]
    pub fixed_steps: Option<u64>,

    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Also write a gnuplot script for the CSV output
    #[arg(long, global = true)]
    pub gnuplot: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, generate or scramble spectra
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Lowest levels, gap and V01 over a grid in s
    Scan(ScanArgs),
    /// Integrate the reduced dynamics along a schedule
    Simulate(SimulateArgs),
    /// Run a named scenario
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Check the checksums recorded in a run manifest
    Verify {
        /// Run directory containing manifest.json
        dir: PathBuf,
    },
    /// Re-execute the invocation recorded in a manifest
    Replay {
        /// Path to a manifest.json
        manifest: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SpectrumCmd {
    /// Check a spectrum file and print its class ratios
    Validate {
        file: PathBuf,
    },
    /// Write the spectrum file of a canonical family
    Generate(GenerateArgs),
    /// Materialize a scrambled diagonal
    Scramble(ScrambleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dj,
    Rem,
    Grover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DjKindArg {
    Balanced,
    Constant0,
    Constant1,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    pub family: Family,
    #[arg(long)]
    pub n: u32,
    /// DJ oracle kind
    #[arg(long)]
    pub kind: Option<DjKindArg>,
    /// Grover marked count
    #[arg(long)]
    pub marked: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub offset: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub driver_scale: Option<f64>,
}

/// A spectrum file or a canonical family.
#[derive(Debug, Clone, Default, Args)]
pub struct SourceArgs {
    /// Spectrum JSON file
    #[arg(long, conflicts_with_all = ["family", "kind", "marked"])]
    pub spectrum: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub kind: Option<DjKindArg>,
    #[arg(long)]
    pub marked: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ScrambleArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Largest bit count that may be materialized
    #[arg(long)]
    pub cap: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Auto,
    Dense,
    Secular,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Grid points including both ends
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub s_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub solver: Option<SolverArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleArg {
    #[value(alias = "linear", alias = "constant_rate")]
    ConstantRate,
    #[value(alias = "constant_s")]
    ConstantS,
    #[value(alias = "local", alias = "local_adiabatic")]
    LocalAdiabatic,
    /// Path generated from the DJ reference probability profile
    #[value(alias = "profile_driven")]
    Profile,
    /// Knots read from --schedule-file (t,s CSV)
    File,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum)]
    pub schedule: ScheduleArg,
    /// Total time for constant-rate and constant-s schedules
    #[arg(long = "T", visible_alias = "total-time", allow_negative_numbers = true)]
    pub total_time: Option<f64>,
    /// Fixed interpolation parameter for constant-s
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// Local-adiabatic slowness
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub schedule_file: Option<PathBuf>,
    /// Knots used to synthesize local-adiabatic and profile schedules
    #[arg(long)]
    pub grid: Option<usize>,
    /// Interior sample times in the trajectory CSV
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also run the full oracle and report its deviation from the reduction
    #[arg(long)]
    pub cross_check: bool,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Two-run Deutsch-Josza protocol
    Dj(DjArgs),
    /// Random energy model under a local-adiabatic schedule
    Rem(RemArgs),
    /// Grover search
    Grover(GroverArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    Reduced,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutArg {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Args)]
pub struct DjArgs {
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, conflicts_with = "spectrum")]
    pub kind: Option<DjKindArg>,
    /// Arbitrary oracle spectrum; must respect the constant-or-balanced promise
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub readout: Option<ReadoutArg>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnnealArgs {
    #[arg(long, conflicts_with = "sweep")]
    pub n: Option<u32>,
    /// Bit-count range a:b:step
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Integrate the dynamics for the success probability (default: only for single runs)
    #[arg(long)]
    pub simulate: Option<bool>,
}

#[derive(Debug, Clone, Args)]
pub struct RemArgs {
    #[command(flatten)]
    pub anneal: AnnealArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroverScheduleArg {
    #[value(alias = "local_adiabatic")]
    Local,
    /// Constant rate sized by the global adiabatic condition
    #[value(alias = "constant_rate")]
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct GroverArgs {
    #[command(flatten)]
    pub anneal: AnnealArgs,
    #[arg(long)]
    pub marked: Option<u64>,
    #[arg(long)]
    pub schedule: Option<GroverScheduleArg>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["scrambled", "scan", "--family", "rem", "--n", "6", "--seed", "3", "--tol", "1e-9"])
            .unwrap();
        assert_eq!(cli.global.seed, Some(3));
        assert_eq!(cli.global.tol, Some(1e-9));
    }

    #[test]
    fn schedule_aliases() {
        for name in ["linear", "constant-rate", "constant_rate"] {
            let cli = Cli::try_parse_from(["scrambled", "simulate", "--family", "dj", "--n", "2", "--schedule", name]).unwrap();
            let Command::Simulate(args) = cli.command else { panic!() };
            assert_eq!(args.schedule, ScheduleArg::ConstantRate);
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use scrambled_core::spectrum::SpectrumSpec;

mod cli;
mod config;
mod error;
mod invocation;
mod output;
mod run;

use cli::{Cli, Command, GlobalArgs, ScenarioCmd, SpectrumCmd, OUT_DIR_ENV};
use error::{CliError, Result};
use invocation::{Invocation, Resolver};
use output::RunDir;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let global = &cli.global;
    let (inv, dir) = match &cli.command {
        Command::Spectrum(SpectrumCmd::Validate { file }) => return validate(file),
        Command::Verify { dir } => {
            let count = output::verify(dir)?;
            println!("{count} files match {}", dir.join(output::MANIFEST).display());
            return Ok(());
        }
        Command::Replay { manifest } => return replay(global, manifest),
        command => {
            let r = Resolver::new(global)?;
            let task = match command {
                Command::Spectrum(SpectrumCmd::Generate(a)) => r.generate(a)?,
                Command::Spectrum(SpectrumCmd::Scramble(a)) => r.scramble(a)?,
                Command::Scan(a) => r.scan(a)?,
                Command::Simulate(a) => r.simulate(a)?,
                Command::Scenario(ScenarioCmd::Dj(a)) => r.dj(a)?,
                Command::Scenario(ScenarioCmd::Rem(a)) => r.rem(a)?,
                Command::Scenario(ScenarioCmd::Grover(a)) => r.grover(a)?,
                Command::Spectrum(SpectrumCmd::Validate { .. }) | Command::Verify { .. } | Command::Replay { .. } => {
                    unreachable!("handled above")
                }
            };
            let inv = Invocation {
                task,
                gnuplot: r.gnuplot(),
            };
            let dir = r.out().unwrap_or_else(|| inv.default_dir(&out_root()));
            (inv, dir)
        }
    };
    execute(inv, dir)
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn execute(inv: Invocation, dir: PathBuf) -> Result<()> {
    let started = output::now();
    let mut run = RunDir::new(dir);
    run::execute(&inv, &mut run)?;
    let dir = run.finish(inv, started)?;
    println!("run directory: {}", dir.display());
    Ok(())
}

fn validate(file: &Path) -> Result<()> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))?;
    let spec = SpectrumSpec::from_json_str(&text)?.validate()?;
    println!("valid: n = {}, {} classes", spec.n(), spec.num_classes());
    for (j, (f, eta)) in spec.values().iter().zip(spec.eta().as_slice()).enumerate() {
        println!("  f_{j} = {f}, eta_{j} = {eta:.17e}");
    }
    Ok(())
}

fn replay(global: &GlobalArgs, manifest: &Path) -> Result<()> {
    if global.seed.is_some() || global.tol.is_some() || global.fixed_steps.is_some() || global.config.is_some() {
        return Err(CliError::invalid(
            "replay",
            "the manifest fixes every parameter; only --out may be given",
        ));
    }
    let m = output::read_manifest(manifest)?;
    let dir = match &global.out {
        Some(dir) => dir.clone(),
        None => {
            let base = m.invocation.default_dir(&out_root());
            let mut name = base.file_name().unwrap_or_default().to_os_string();
            name.push("-replay");
            base.with_file_name(name)
        }
    };
    execute(m.invocation, dir)
}

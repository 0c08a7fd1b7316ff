//! Executes a resolved [`Invocation`] into a run directory.

use serde_json::json;

use scrambled_core::dynamics::{
    aggregate_full_to_reduced, ground_probability, integrate_full_at, integrate_reduced, max_error_up_to_phase,
};
use scrambled_core::effective::{numeric_min_gap, scan, LowLevels, Solver};
use scrambled_core::export::{fmt_f64, write_points, write_scan, write_schedule, write_trajectory};
use scrambled_core::scenarios::{
    fit_scaling, grover_sweep, rem_sweep, AnnealOptions, AnnealResult, Backend, DjProtocol, GroverSchedule,
    ReadoutMode, ScalingModel, ScenarioReport,
};
use scrambled_core::schedule::{
    constant_rate, constant_s, dj_reference_profile, local_adiabatic_for, path_from_profile, LocalAdiabaticConfig,
    Schedule,
};
use scrambled_core::spectrum::{scramble, scramble_with_cap, ValidatedSpectrum};

use crate::cli::{BackendArg, GroverScheduleArg, ReadoutArg, SolverArg};
use crate::error::Result;
use crate::invocation::{family_spectrum, AnnealSpec, Invocation, Numerics, ScheduleSpec, Source, Task};
use crate::output::RunDir;

pub fn execute(inv: &Invocation, run: &mut RunDir) -> Result<()> {
    match &inv.task {
        Task::SpectrumGenerate {
            family,
            n,
            kind,
            marked,
            offset,
            driver_scale,
        } => {
            let mut spec = family_spectrum(*family, *n, *kind, *marked)?.with_offset(*offset)?;
            if let Some(e0) = driver_scale {
                spec = spec.with_driver_scale(*e0)?;
            }
            let mut text = spec.spec().to_json_string();
            text.push('\n');
            run.write_text("spectrum.json", &text)?;
            println!("{} classes over 2^{} configurations", spec.num_classes(), spec.n());
        }
        Task::SpectrumScramble { spectrum, seed, cap } => {
            let spec = spectrum.load()?;
            let diag = scramble_with_cap(&spec, *seed, *cap)?;
            run.write_with("diagonal.csv", |w| {
                writeln!(w, "index,class,entry")?;
                for (i, (&c, &e)) in diag.class_of().iter().zip(diag.entries()).enumerate() {
                    writeln!(w, "{i},{c},{}", fmt_f64(e))?;
                }
                Ok(())
            })?;
            println!("scrambled {} entries with seed {seed}", diag.len());
        }
        Task::Scan {
            spectrum,
            points,
            s_min,
            s_max,
            solver,
        } => run_scan(&spectrum.load()?, *points, *s_min, *s_max, *solver, inv.gnuplot, run)?,
        Task::Simulate {
            spectrum,
            schedule,
            samples,
            cross_check,
            seed,
            numerics,
        } => run_simulate(
            &spectrum.load()?,
            schedule,
            *samples,
            *cross_check,
            *seed,
            numerics,
            inv.gnuplot,
            run,
        )?,
        Task::ScenarioDj {
            oracle,
            seed,
            grid,
            backend,
            readout,
            numerics,
        } => run_dj(oracle, *seed, *grid, *backend, *readout, numerics, run)?,
        Task::ScenarioRem { anneal } => {
            let opts = anneal_options(anneal)?;
            let points = rem_sweep(&anneal.ns, anneal.epsilon, &opts)?;
            let report = ScenarioReport::new("rem", 0);
            finish_anneal(report, anneal, points, ScalingModel::Log2TVsN, inv.gnuplot, run)?;
        }
        Task::ScenarioGrover {
            anneal,
            marked,
            schedule,
        } => {
            let opts = anneal_options(anneal)?;
            let kind = match schedule {
                GroverScheduleArg::Local => GroverSchedule::LocalAdiabatic,
                GroverScheduleArg::Linear => GroverSchedule::ConstantRate,
            };
            let points = grover_sweep(&anneal.ns, *marked, anneal.epsilon, kind, &opts)?;
            let report = ScenarioReport::new("grover", 0)
                .param("marked", *marked)
                .param("schedule", serde_json::to_value(schedule).expect("enum serializes"));
            finish_anneal(report, anneal, points, ScalingModel::LogTVsLogN, inv.gnuplot, run)?;
        }
    }
    Ok(())
}

fn run_scan(
    spec: &ValidatedSpectrum,
    points: usize,
    s_min: f64,
    s_max: f64,
    solver: SolverArg,
    gnuplot: bool,
    run: &mut RunDir,
) -> Result<()> {
    let solver = match solver {
        SolverArg::Auto => Solver::Auto,
        SolverArg::Dense => Solver::Dense,
        SolverArg::Secular => Solver::Secular,
    };
    let step = (s_max - s_min) / (points - 1) as f64;
    let s: Vec<f64> = (0..points)
        .map(|i| if i + 1 == points { s_max } else { s_min + i as f64 * step })
        .collect();
    let rows = scan(spec, &s, solver)?;
    let mut csv = Vec::new();
    write_scan(&mut csv, &rows).expect("writing to memory");
    run.write_with("scan.csv", |w| w.write_all(&csv))?;

    let best: &LowLevels = rows
        .iter()
        .min_by(|a, b| a.gap.total_cmp(&b.gap))
        .expect("at least two grid points");
    let mut summary = json!({
        "points": points,
        "grid_min_gap": best.gap,
        "grid_s_min_gap": best.s,
        "max_v01": rows.iter().map(|r| r.v01).fold(0.0, f64::max),
    });
    if s_min == 0.0 && s_max == 1.0 {
        let (g, sg) = numeric_min_gap(spec, points)?;
        summary["min_gap"] = json!(g);
        summary["s_min_gap"] = json!(sg);
        println!("minimum gap {g:.6e} at s = {sg:.6}");
    } else {
        println!("grid minimum gap {:.6e} at s = {:.6}", best.gap, best.s);
    }
    run.write_json("summary.json", &summary)?;
    if gnuplot {
        run.write_text("scan.gp", SCAN_GP)?;
    }
    Ok(())
}

fn build_schedule(spec: &ValidatedSpectrum, schedule: &ScheduleSpec) -> Result<Schedule> {
    Ok(match schedule {
        ScheduleSpec::ConstantRate { total_time } => constant_rate(*total_time)?,
        ScheduleSpec::ConstantS { s, total_time } => constant_s(*s, *total_time)?,
        ScheduleSpec::LocalAdiabatic { epsilon, grid } => {
            let mut cfg = LocalAdiabaticConfig::new(*epsilon);
            cfg.grid = *grid;
            local_adiabatic_for(spec, &cfg)?
        }
        ScheduleSpec::Profile { grid } => path_from_profile(dj_reference_profile(), *grid)?.1,
        ScheduleSpec::Custom { knots } => Schedule::from_knots(knots)?,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    spec: &ValidatedSpectrum,
    schedule: &ScheduleSpec,
    samples: usize,
    cross_check: bool,
    seed: u64,
    numerics: &Numerics,
    gnuplot: bool,
    run: &mut RunDir,
) -> Result<()> {
    let cfg = numerics.integrator()?;
    let sch = build_schedule(spec, schedule)?;
    let traj = integrate_reduced(spec, &sch, &cfg, samples)?;

    let mut csv = Vec::new();
    write_trajectory(&mut csv, &traj).expect("writing to memory");
    run.write_with("trajectory.csv", |w| w.write_all(&csv))?;
    let mut csv = Vec::new();
    write_schedule(&mut csv, &sch).expect("writing to memory");
    run.write_with("schedule.csv", |w| w.write_all(&csv))?;

    let last = traj.last();
    let mut summary = json!({
        "T": sch.total_time(),
        "schedule": sch.kind().to_string(),
        "final_probabilities": last.probabilities,
        "ground_probability": ground_probability(&traj),
        "max_norm_drift": traj.max_norm_drift,
        "steps": traj.stats.accepted,
    });
    println!(
        "T = {:.10}, final p_0 = {:.12}, norm drift {:.2e}",
        sch.total_time(),
        ground_probability(&traj),
        traj.max_norm_drift
    );
    if cross_check {
        let diag = scramble(spec, seed)?;
        let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        let full = integrate_full_at(&diag, spec.driver_scale(), &sch, &cfg, &times)?;
        let (mut deviation, mut spread) = (0.0f64, 0.0f64);
        for (f, r) in full.iter().zip(&traj.samples) {
            let agg = aggregate_full_to_reduced(f, &diag);
            deviation = deviation.max(max_error_up_to_phase(&agg.state.amplitudes, &r.state.amplitudes));
            spread = spread.max(agg.spread);
        }
        summary["cross_check"] = json!({
            "seed": seed,
            "max_deviation": deviation,
            "max_intra_class_spread": spread,
        });
        println!("cross-check: max |c_full - c_reduced| = {deviation:.3e}, intra-class spread {spread:.3e}");
    }
    run.write_json("summary.json", &summary)?;
    if gnuplot {
        run.write_text("trajectory.gp", TRAJECTORY_GP)?;
    }
    Ok(())
}

fn run_dj(
    oracle: &Source,
    seed: u64,
    grid: usize,
    backend: BackendArg,
    readout: ReadoutArg,
    numerics: &Numerics,
    run: &mut RunDir,
) -> Result<()> {
    let spec = oracle.load()?;
    let diag = scramble(&spec, seed)?;
    let mut proto = DjProtocol::new(grid)?;
    proto.integrator = numerics.integrator()?;
    proto.backend = match backend {
        BackendArg::Reduced => Backend::Reduced,
        BackendArg::Full => Backend::Full,
    };
    proto.readout = match readout {
        ReadoutArg::Exact => ReadoutMode::Exact,
        ReadoutArg::Sampled => ReadoutMode::Sampled,
    };
    let verdict = proto.run(&diag, seed)?;
    let mut report = ScenarioReport::new("dj", seed)
        .param("n", spec.n())
        .param("grid", grid)
        .param("backend", serde_json::to_value(backend).expect("enum serializes"))
        .param("readout", serde_json::to_value(readout).expect("enum serializes"));
    report.t = Some(verdict.run_time);
    report.verdict = Some(verdict);
    run.write_text("report.json", &(report.to_json_pretty() + "\n"))?;
    println!(
        "verdict {:?} (readouts {}, {}; T = {:.10})",
        verdict.verdict, verdict.run1_energy, verdict.run2_energy, verdict.run_time
    );
    Ok(())
}

fn anneal_options(anneal: &AnnealSpec) -> Result<AnnealOptions> {
    Ok(AnnealOptions {
        grid: anneal.grid,
        simulate: anneal.simulate,
        integrator: anneal.numerics.integrator()?,
    })
}

fn finish_anneal(
    mut report: ScenarioReport,
    anneal: &AnnealSpec,
    points: Vec<AnnealResult>,
    model: ScalingModel,
    gnuplot: bool,
    run: &mut RunDir,
) -> Result<()> {
    report = report
        .param("epsilon", anneal.epsilon)
        .param("grid", anneal.grid)
        .param("simulate", anneal.simulate);
    if anneal.sweep {
        report = report.param("ns", anneal.ns.clone());
        // fewer than four points cannot be fitted; the points are still reported
        if points.len() >= 4 {
            let pts: Vec<(f64, f64)> = points
                .iter()
                .map(|r| {
                    let y = match model {
                        ScalingModel::Log2TVsN => r.epsilon_t,
                        ScalingModel::LogTVsLogN => r.t,
                    };
                    (f64::from(r.n), y)
                })
                .collect();
            let fit = fit_scaling(&pts, model)?;
            println!("slope {:.4} (RMS residual {:.2e})", fit.slope, fit.residual);
            report.slope = Some(fit);
        }
    } else {
        let r = &points[0];
        report = report.param("n", r.n);
        report.t = Some(r.t);
        report.epsilon_t = Some(r.epsilon_t);
        report.ground_probability = r.ground_probability;
    }
    for r in &points {
        match r.ground_probability {
            Some(p) => println!("n = {:>3}: T = {:.6e}, εT = {:.6e}, p_0 = {p:.6}", r.n, r.t, r.epsilon_t),
            None => println!("n = {:>3}: T = {:.6e}, εT = {:.6e}", r.n, r.t, r.epsilon_t),
        }
    }
    let mut csv = Vec::new();
    write_points(&mut csv, &points).expect("writing to memory");
    run.write_with("points.csv", |w| w.write_all(&csv))?;
    report.points = Some(points);
    run.write_text("report.json", &(report.to_json_pretty() + "\n"))?;
    if gnuplot {
        let script = match model {
            ScalingModel::Log2TVsN => SWEEP_LOG2_GP,
            ScalingModel::LogTVsLogN => SWEEP_LOGLOG_GP,
        };
        run.write_text("points.gp", script)?;
    }
    Ok(())
}

const SCAN_GP: &str = "\
set datafile separator ','
set key autotitle columnhead
set xlabel 's'
set multiplot layout 2,1
set ylabel 'energy'
plot 'scan.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines
set ylabel 'gap'
set logscale y
plot 'scan.csv' using 1:5 with lines
unset multiplot
";

const TRAJECTORY_GP: &str = "\
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set ylabel 'probability'
set yrange [0:1]
plot 'trajectory.csv' using 1:3 with lines, '' using 1:2 with lines title 's(t)'
";

const SWEEP_LOG2_GP: &str = "\
set datafile separator ','
set xlabel 'n'
set ylabel 'log2(epsilon T)'
f(x) = a*x + b
fit f(x) 'points.csv' using 1:(log($4)/log(2)) via a, b
plot 'points.csv' using 1:(log($4)/log(2)) with points title 'epsilon T', f(x) title sprintf('slope %.4f', a)
";

const SWEEP_LOGLOG_GP: &str = "\
set datafile separator ','
set xlabel 'ln N'
set ylabel 'ln T'
f(x) = a*x + b
fit f(x) 'points.csv' using ($1*log(2)):(log($3)) via a, b
plot 'points.csv' using ($1*log(2)):(log($3)) with points title 'T', f(x) title sprintf('slope %.4f', a)
";

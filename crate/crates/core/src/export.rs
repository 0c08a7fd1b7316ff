//! CSV emission with a single header row and 17 significant digits.

use std::io::{self, BufRead, Write};

use crate::dynamics::ReducedTrajectory;
use crate::effective::LowLevels;
use crate::error::{Error, Result};
use crate::scenarios::AnnealResult;
use crate::schedule::Schedule;

/// `{:.16e}`: enough digits to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Columns `s,E0,E1,E2,gap,v01`.
pub fn write_scan<W: Write>(mut w: W, rows: &[LowLevels]) -> io::Result<()> {
    writeln!(w, "s,E0,E1,E2,gap,v01")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(r.s),
            fmt_f64(r.e0),
            fmt_f64(r.e1),
            opt(r.e2),
            fmt_f64(r.gap),
            fmt_f64(r.v01)
        )?;
    }
    Ok(())
}

/// Columns `t,s,p_0,…,p_K,weighted_norm`.
pub fn write_trajectory<W: Write>(mut w: W, traj: &ReducedTrajectory) -> io::Result<()> {
    let k1 = traj.eta.len();
    let mut header = vec!["t".to_string(), "s".to_string()];
    header.extend((0..k1).map(|j| format!("p_{j}")));
    header.push("weighted_norm".into());
    writeln!(w, "{}", header.join(","))?;
    for smp in &traj.samples {
        let mut row = vec![fmt_f64(smp.t), fmt_f64(smp.s)];
        row.extend(smp.probabilities.iter().map(|&p| fmt_f64(p)));
        row.push(fmt_f64(smp.weighted_norm));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns `t,s` at the schedule knots.
pub fn write_schedule<W: Write>(mut w: W, schedule: &Schedule) -> io::Result<()> {
    writeln!(w, "t,s")?;
    for (t, s) in schedule.knots() {
        writeln!(w, "{},{}", fmt_f64(t), fmt_f64(s))?;
    }
    Ok(())
}

/// Reads `t,s` knots as written by [`write_schedule`] into a custom schedule.
pub fn read_schedule<R: BufRead>(r: R) -> Result<Schedule> {
    let mut knots = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let mut cols = line.split(',');
        let mut next = || -> Result<f64> {
            cols.next()
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", i + 1)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
        };
        knots.push((next()?, next()?));
    }
    Schedule::from_knots(&knots)
}

/// Columns `n,epsilon,T,epsilonT,min_gap,s_min_gap,ground_probability`.
pub fn write_points<W: Write>(mut w: W, points: &[AnnealResult]) -> io::Result<()> {
    writeln!(w, "n,epsilon,T,epsilonT,min_gap,s_min_gap,ground_probability")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.n,
            fmt_f64(p.epsilon),
            fmt_f64(p.t),
            fmt_f64(p.epsilon_t),
            fmt_f64(p.min_gap),
            fmt_f64(p.s_min_gap),
            opt(p.ground_probability)
        )?;
    }
    Ok(())
}

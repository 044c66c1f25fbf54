//! CSV output. Numbers use `%.12g`; files are UTF-8 with LF line endings.
//! Runtimes are deliberately left out so that reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::run::MseReport;
use crate::error::{Error, Result};
use crate::format::fmt_g12;

/// One plotting row: `log10` of the MSE and its delta-method standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub k: usize,
    pub arm: String,
    pub log10_mse: f64,
    pub stderr: f64,
}

/// Long-format plot data, one row per `(k, arm)`, arm-major.
pub fn emit_plot_data(report: &MseReport) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for arm in &report.arms {
        for (k, (m, s)) in arm.mse.iter().zip(&arm.stderr).enumerate() {
            rows.push(PlotRow {
                k,
                arm: arm.label(),
                log10_mse: m.log10(),
                stderr: s / (m * std::f64::consts::LN_10),
            });
        }
    }
    rows
}

pub fn write_plot_csv(rows: &[PlotRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "k,arm,log10_mse,stderr")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.k, r.arm, fmt_g12(r.log10_mse), fmt_g12(r.stderr))?;
    }
    Ok(())
}

pub fn parse_plot_csv(text: &str) -> Result<Vec<PlotRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("k,arm,log10_mse,stderr") {
        return Err(Error::Parse("missing plot header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Parse(format!("plot row {}: `{line}`", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(PlotRow {
                k: f[0].parse().map_err(|_| bad())?,
                arm: f[1].to_string(),
                log10_mse: f[2].parse().map_err(|_| bad())?,
                stderr: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// `k,arm,mse,stderr`, arm-major.
pub fn write_mse_csv(report: &MseReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "k,arm,mse,stderr")?;
    for arm in &report.arms {
        for (k, (m, s)) in arm.mse.iter().zip(&arm.stderr).enumerate() {
            writeln!(out, "{k},{},{},{}", arm.label(), fmt_g12(*m), fmt_g12(*s))?;
        }
    }
    Ok(())
}

/// `arm,replications,degenerate,pilot_fallbacks`.
pub fn write_degenerate_csv(report: &MseReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "arm,replications,degenerate,pilot_fallbacks")?;
    for arm in &report.arms {
        writeln!(
            out,
            "{},{},{},{}",
            arm.label(),
            arm.estimates.len(),
            arm.degenerate,
            arm.pilot_fallbacks
        )?;
    }
    Ok(())
}

/// Writes `mse.csv`, `plot.csv` and `degenerate.csv` into `dir`.
pub fn write_outputs(report: &MseReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mse = dir.join("mse.csv");
    let plot = dir.join("plot.csv");
    let degenerate = dir.join("degenerate.csv");
    let mut buf = Vec::new();
    write_mse_csv(report, &mut buf)?;
    fs::write(&mse, &buf)?;
    buf.clear();
    write_plot_csv(&emit_plot_data(report), &mut buf)?;
    fs::write(&plot, &buf)?;
    buf.clear();
    write_degenerate_csv(report, &mut buf)?;
    fs::write(&degenerate, &buf)?;
    Ok(vec![mse, plot, degenerate])
}

//! CSV and manifest emission.
//!
//! Floats are written in scientific notation with 9 significant digits,
//! integers verbatim, and non-finite values as `nan`, `inf` or `-inf`.
//! Output is a pure function of the result, so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{Cell, Comparison, ExperimentResult, Table};
use crate::measurement::EpochMeasurements;

pub const SIGNIFICANT_DIGITS: usize = 9;

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Float(v) => format_float(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

pub fn table_to_csv(table: &Table) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(format_cell).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    system: &'a str,
    config_hash: &'a str,
    version: &'a str,
    seeds: &'a [u64],
    duration_s: f64,
    files: Vec<String>,
    summary: Vec<(&'a str, Option<f64>)>,
}

/// Writes one CSV per aggregate and per-seed trace plus a manifest, and
/// returns the paths written (manifest last).
pub fn emit_csv(result: &ExperimentResult, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    ensure_dir(dir)?;
    let prefix = format!("{}_{}", result.system.name(), result.experiment.name());
    let mut paths = Vec::new();
    for table in &result.aggregate {
        let name = format!("{}_{}.csv", result.system.name(), table.name);
        paths.push(write_file(dir.join(name), &table_to_csv(table))?);
    }
    for run in &result.per_seed {
        for table in &run.tables {
            let name = format!("{}_{}_seed{:03}.csv", result.system.name(), table.name, run.seed);
            paths.push(write_file(dir.join(name), &table_to_csv(table))?);
        }
    }
    let manifest = Manifest {
        experiment: result.experiment.name(),
        system: result.system.name(),
        config_hash: &result.metadata.config_hash,
        version: &result.metadata.version,
        seeds: &result.metadata.seeds,
        duration_s: result.metadata.duration,
        files: paths
            .iter()
            .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        summary: result
            .summary
            .iter()
            .map(|(k, v)| (k.as_str(), v.is_finite().then_some(*v)))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    paths.push(write_file(dir.join(format!("{prefix}_manifest.json")), &json)?);
    Ok(paths)
}

pub fn verdict_table(cmp: &Comparison) -> Table {
    let mut t = Table::new(
        &format!("compare_{}", cmp.experiment.name()),
        &["system", "metric", "converged", "convergence_time_s", "final_value", "unit"],
    );
    for v in &cmp.verdicts {
        t.push(vec![
            v.system.name().into(),
            v.metric.as_str().into(),
            v.converged.into(),
            v.convergence_time.unwrap_or(f64::NAN).into(),
            v.final_value.into(),
            v.unit.as_str().into(),
        ]);
    }
    t
}

/// Fixed-width rendering of the verdict table for terminals.
pub fn render_verdicts(cmp: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:<32} {:<9} {:>14} {:>16} unit",
        "system", "metric", "converged", "time_s", "final"
    );
    for v in &cmp.verdicts {
        let time = v.convergence_time.map_or("-".to_string(), |t| format!("{t:.2}"));
        let _ = writeln!(
            s,
            "{:<6} {:<32} {:<9} {:>14} {:>16} {}",
            v.system.name(),
            v.metric,
            if v.converged { "yes" } else { "no" },
            time,
            format!("{:.6e}", v.final_value),
            v.unit
        );
    }
    s
}

/// Writes both systems' outputs plus the verdict table.
pub fn emit_comparison(cmp: &Comparison, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    let mut paths = emit_csv(&cmp.leo, dir)?;
    paths.extend(emit_csv(&cmp.gnss, dir)?);
    let table = verdict_table(cmp);
    paths.push(write_file(dir.join(format!("{}.csv", table.name)), &table_to_csv(&table))?);
    Ok(paths)
}

/// Debug dump of raw measurements at both receivers.
pub fn measurement_dump_csv(epochs: &[(EpochMeasurements, EpochMeasurements)]) -> String {
    let mut t = Table::new(
        "measurements",
        &["time_s", "receiver", "sat_id", "pseudorange_m", "phase_cycles", "true_N"],
    );
    for (ue, rf) in epochs {
        for meas in [ue, rf] {
            for e in &meas.entries {
                t.push(vec![
                    meas.time.into(),
                    meas.receiver.to_string().as_str().into(),
                    (e.sat_id as i64).into(),
                    e.pseudorange.into(),
                    e.carrier_phase.into(),
                    e.true_ambiguity.into(),
                ]);
            }
        }
    }
    table_to_csv(&t)
}

pub fn write_measurement_dump(
    epochs: &[(EpochMeasurements, EpochMeasurements)],
    path: impl AsRef<Path>,
) -> Result<PathBuf> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_file(path.to_path_buf(), &measurement_dump_csv(epochs))
}

//! Experiment drivers: Doppler dynamics, phase-approximation error,
//! condition traces, ambiguity convergence and positioning, plus the
//! LEO-versus-GNSS comparison.
//!
//! Per-seed runs execute on a rayon pool whose size can be capped with the
//! `ORBITFIX_WORKERS` environment variable. Aggregation always walks the
//! seeds in ascending order, so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{epoch_times, plan_window, DDMeasurements, EpochGeometry, EpochMeasurements, WindowGenerator};
use crate::orbit::{geodetic_to_ecef, KeplerianElements, Vec3, OMEGA_EARTH, WGS84_A};
use crate::phase::{
    doppler_phase_approx, doppler_state, line_of_sight, max_tolerable_frequency_error, phase_approx_error,
    true_carrier_phase, LinearTrajectory, Trajectory,
};
use crate::positioning::{condition_trace, delay_only_solve, fix_and_solve, PositionEstimate};
use crate::scenario::{Scenario, ScenarioConfig, System};

pub const WORKERS_ENV: &str = "ORBITFIX_WORKERS";

/// Default window for the ambiguity and positioning experiments, seconds.
pub const DEFAULT_WINDOW: f64 = 3.0;
/// Default length of a condition trace, seconds.
pub const DEFAULT_CONDITION_DURATION: f64 = 500.0;
/// Default phase-approximation window, seconds.
pub const DEFAULT_PHASE_WINDOW: f64 = 0.03;
/// Doppler update interval of the phase approximation, seconds.
pub const DOPPLER_UPDATE_INTERVAL: f64 = 0.01;
/// Sampling of the true and approximated phase traces, seconds.
pub const PHASE_SAMPLE_INTERVAL: f64 = 0.001;
/// Plateau test: relative change allowed over one window.
pub const PLATEAU_TOLERANCE: f64 = 0.05;
/// Plateau test window, seconds.
pub const PLATEAU_WINDOW: f64 = 50.0;
/// Joint-mode horizontal error counted as converged, meters.
pub const POSITION_CONVERGED: f64 = 0.1;

// The Keplerian overhead pass crosses the UE meridian at this time, so the
// differencing stencil never needs negative propagation times.
const PASS_TIME: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Doppler,
    PhaseError,
    Condition,
    Ambiguity,
    Position,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Doppler,
        Experiment::PhaseError,
        Experiment::Condition,
        Experiment::Ambiguity,
        Experiment::Position,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Doppler => "doppler",
            Experiment::PhaseError => "phase_error",
            Experiment::Condition => "condition",
            Experiment::Ambiguity => "ambiguity",
            Experiment::Position => "position",
        }
    }

    fn uses_seeds(&self) -> bool {
        matches!(self, Experiment::Ambiguity | Experiment::Position)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// One trace: a named table with unit-suffixed column names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedTraces {
    pub seed: u64,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub system: System,
    pub metadata: Metadata,
    pub per_seed: Vec<SeedTraces>,
    pub aggregate: Vec<Table>,
    /// Headline scalars; non-finite values mean "not reached".
    pub summary: BTreeMap<String, f64>,
}

impl ExperimentResult {
    pub fn aggregate_table(&self, name: &str) -> Option<&Table> {
        self.aggregate.iter().find(|t| t.name == name)
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }
}

/// Row of the side-by-side comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub system: System,
    pub metric: String,
    pub converged: bool,
    /// Time from which the converged condition holds, seconds.
    pub convergence_time: Option<f64>,
    pub final_value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub experiment: Experiment,
    pub leo: ExperimentResult,
    pub gnss: ExperimentResult,
    pub verdicts: Vec<Verdict>,
}

/// Linear-interpolation percentile of `values`, `p` in [0, 100]. NaNs are
/// ignored; an empty input gives NaN.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Relative change `|b - a| / |a|`, infinite if either end is not finite.
pub fn relative_change(a: f64, b: f64) -> f64 {
    if !a.is_finite() || !b.is_finite() || a == 0.0 {
        return f64::INFINITY;
    }
    ((b - a) / a).abs()
}

/// Earliest sample time `T` such that every later pair of samples `window`
/// seconds apart changes by less than `tolerance` (relative).
pub fn plateau_time(times: &[f64], values: &[f64], window: f64, tolerance: f64) -> Option<f64> {
    let eps = 1e-9 * (1.0 + window);
    let partner = |i: usize| -> Option<usize> {
        let target = times[i] + window;
        let j = times.partition_point(|t| *t < target - eps);
        (j < times.len() && (times[j] - target).abs() <= eps).then_some(j)
    };
    let mut earliest = None;
    for i in (0..times.len()).rev() {
        let Some(j) = partner(i) else { continue };
        if relative_change(values[i], values[j]) < tolerance {
            earliest = Some(times[i]);
        } else {
            return earliest;
        }
    }
    earliest
}

/// Relative change over the final `window` seconds of a trace.
pub fn final_window_change(times: &[f64], values: &[f64], window: f64) -> f64 {
    let Some(&end) = times.last() else {
        return f64::NAN;
    };
    let start = end - window;
    let Some(i) = times.iter().position(|t| *t >= start - 1e-9) else {
        return f64::NAN;
    };
    relative_change(values[i], values[values.len() - 1])
}

/// Earliest time from which `pred` holds at every later sample.
pub fn converged_from(times: &[f64], values: &[f64], pred: impl Fn(f64) -> bool) -> Option<f64> {
    let mut earliest = None;
    for i in (0..times.len()).rev() {
        if pred(values[i]) {
            earliest = Some(times[i]);
        } else {
            break;
        }
    }
    earliest
}

/// Worker count from `ORBITFIX_WORKERS`, if set.
pub fn worker_limit() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::ConfigSchema {
                key: WORKERS_ENV.into(),
                message: format!("`{v}` is not a positive integer"),
            }),
        },
    }
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match worker_limit()? {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn default_duration(experiment: Experiment) -> f64 {
    match experiment {
        Experiment::Doppler => 0.0,
        Experiment::PhaseError => DEFAULT_PHASE_WINDOW,
        Experiment::Condition => DEFAULT_CONDITION_DURATION,
        Experiment::Ambiguity | Experiment::Position => DEFAULT_WINDOW,
    }
}

/// Runs one experiment for one system.
pub fn run_experiment(config: &ScenarioConfig, experiment: Experiment) -> Result<ExperimentResult> {
    let scenario = config.build()?;
    let duration = config.duration.unwrap_or_else(|| default_duration(experiment));
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    if !experiment.uses_seeds() {
        seeds.clear();
    }
    let metadata = Metadata {
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: seeds.clone(),
        duration,
    };
    let (per_seed, aggregate, summary) = match experiment {
        Experiment::Doppler => doppler_experiment(&scenario)?,
        Experiment::PhaseError => phase_error_experiment(&scenario, duration)?,
        Experiment::Condition => condition_experiment(&scenario, duration, config.condition_sample_interval)?,
        Experiment::Ambiguity => ambiguity_experiment(&scenario, duration, config.ambiguity_stride, &seeds)?,
        Experiment::Position => position_experiment(&scenario, duration, config.ambiguity_stride, &seeds)?,
    };
    Ok(ExperimentResult {
        experiment,
        system: config.system,
        metadata,
        per_seed,
        aggregate,
        summary,
    })
}

type Parts = (Vec<SeedTraces>, Vec<Table>, BTreeMap<String, f64>);

/// Straight-line pass at orbital speed, tangent to the UE's vertical.
pub fn tangent_pass(scenario: &Scenario) -> (Vec3, LinearTrajectory) {
    let altitude = orbit_altitude(scenario);
    let speed = (crate::orbit::MU_EARTH / (WGS84_A + altitude)).sqrt();
    (
        Vec3::zeros(),
        LinearTrajectory {
            position: Vec3::new(altitude, 0.0, 0.0),
            velocity: Vec3::new(0.0, speed, 0.0),
            t0: 0.0,
        },
    )
}

/// Two-body circular orbit passing through the zenith of a UE at latitude
/// and longitude zero at [`PASS_TIME`].
pub fn overhead_pass(scenario: &Scenario) -> (Vec3, KeplerianElements) {
    let altitude = orbit_altitude(scenario);
    let inclination = scenario.elements.first().map_or(0.0, |e| e.inclination);
    let mut el = KeplerianElements::circular(WGS84_A + altitude, inclination, OMEGA_EARTH * PASS_TIME, 0.0);
    el.epoch = PASS_TIME;
    let ue = geodetic_to_ecef(&crate::orbit::GeodeticCoord::from_degrees(0.0, 0.0, 0.0));
    (ue, el)
}

fn orbit_altitude(scenario: &Scenario) -> f64 {
    scenario
        .elements
        .first()
        .map_or(0.0, |e| e.semi_major_axis - WGS84_A)
}

fn doppler_experiment(scenario: &Scenario) -> Result<Parts> {
    let f_c = scenario.link.carrier_frequency;
    let mut table = Table::new(
        "doppler",
        &[
            "geometry",
            "range_m",
            "range_rate_m_s",
            "range_accel_m_s2",
            "doppler_hz",
            "doppler_rate_hz_s",
        ],
    );
    let mut summary = BTreeMap::new();
    let (ue, tangent) = tangent_pass(scenario);
    let (ue_k, kepler) = overhead_pass(scenario);
    let passes: [(&str, &Vec3, &dyn Trajectory, f64); 2] = [
        ("tangent", &ue, &tangent, 0.0),
        ("keplerian", &ue_k, &kepler, PASS_TIME),
    ];
    for (name, ue, traj, t) in passes {
        let los = line_of_sight(ue, traj, t)?;
        let d = doppler_state(ue, traj, t, f_c)?;
        table.push(vec![
            name.into(),
            los.range.into(),
            los.range_rate.into(),
            los.range_accel.into(),
            d.doppler.into(),
            d.doppler_rate.into(),
        ]);
        summary.insert(format!("doppler_rate_{name}_hz_s"), d.doppler_rate.abs());
    }
    summary.insert(
        "max_tolerable_frequency_error_hz".into(),
        max_tolerable_frequency_error(scenario.prs_period)?,
    );
    Ok((Vec::new(), vec![table], summary))
}

/// `(times, true, approx, error)` phase samples of one pass, in cycles.
pub type PhaseErrorTraces = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Phase-approximation traces for one pass.
pub fn phase_error_traces<T: Trajectory + ?Sized>(
    ue: &Vec3,
    traj: &T,
    f_c: f64,
    t0: f64,
    duration: f64,
) -> Result<PhaseErrorTraces> {
    let n = ((duration / PHASE_SAMPLE_INTERVAL) + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * PHASE_SAMPLE_INTERVAL).collect();
    let n_updates = ((duration / DOPPLER_UPDATE_INTERVAL) - 1e-9).ceil().max(1.0) as usize;
    let updates = (0..n_updates)
        .map(|k| doppler_state(ue, traj, t0 + k as f64 * DOPPLER_UPDATE_INTERVAL, f_c))
        .collect::<Result<Vec<_>>>()?;
    let truth = true_carrier_phase(ue, traj, f_c, &times)?;
    let approx = doppler_phase_approx(&updates, &times, f_c)?;
    let err = phase_approx_error(&truth, &approx)?;
    Ok((times, truth.phase, approx.phase, err))
}

fn phase_error_experiment(scenario: &Scenario, duration: f64) -> Result<Parts> {
    if !(duration > 0.0) {
        return Err(Error::InvalidInput("phase-error window must be positive".into()));
    }
    let f_c = scenario.link.carrier_frequency;
    let (ue, tangent) = tangent_pass(scenario);
    let (ue_k, kepler) = overhead_pass(scenario);
    let passes: [(&str, &Vec3, &dyn Trajectory, f64); 2] = [
        ("tangent", &ue, &tangent, 0.0),
        ("keplerian", &ue_k, &kepler, PASS_TIME),
    ];
    let mut tables = Vec::new();
    let mut summary = BTreeMap::new();
    for (name, ue, traj, t0) in passes {
        let (times, truth, approx, err) = phase_error_traces(ue, traj, f_c, t0, duration)?;
        let mut table = Table::new(
            &format!("phase_error_{name}"),
            &["time_s", "true_phase_cycles", "approx_phase_cycles", "error_cycles"],
        );
        for i in 0..times.len() {
            table.push(vec![(times[i] - t0).into(), truth[i].into(), approx[i].into(), err[i].into()]);
        }
        let max_err = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        summary.insert(format!("max_abs_error_{name}_cycles"), max_err);
        tables.push(table);
    }
    Ok((Vec::new(), tables, summary))
}

fn condition_experiment(scenario: &Scenario, duration: f64, sample_interval: f64) -> Result<Parts> {
    let noiseless = scenario.noiseless();
    let trace = condition_trace(&noiseless, duration, sample_interval.min(duration.max(f64::MIN_POSITIVE)))?;
    let mut table = Table::new("condition", &["time_s", "condition_number"]);
    for (t, k) in trace.times.iter().zip(&trace.condition_numbers) {
        table.push(vec![(*t).into(), (*k).into()]);
    }
    let mut summary = BTreeMap::new();
    summary.insert("gap_epochs".into(), trace.gaps.len() as f64);
    if let Some(&k) = trace.condition_numbers.last() {
        summary.insert("final_condition_number".into(), k);
        summary.insert(
            "plateau_time_s".into(),
            plateau_time(&trace.times, &trace.condition_numbers, PLATEAU_WINDOW, PLATEAU_TOLERANCE)
                .unwrap_or(f64::INFINITY),
        );
        summary.insert(
            "final_window_relative_change".into(),
            final_window_change(&trace.times, &trace.condition_numbers, PLATEAU_WINDOW),
        );
    }
    Ok((Vec::new(), vec![table], summary))
}

/// Shared window plan plus the prefix lengths (in epochs) to evaluate.
struct Window {
    plan: Vec<EpochGeometry>,
    prefixes: Vec<usize>,
    interval: f64,
}

fn plan_prefixes(scenario: &Scenario, duration: f64, stride: f64) -> Result<Window> {
    if scenario.max_satellites < 4 {
        return Err(Error::ConfigSchema {
            key: "max_satellites".into(),
            message: "positioning experiments need at least 4 satellites".into(),
        });
    }
    let times = epoch_times(scenario.start_time, duration, scenario.epoch_interval)?;
    let plan = plan_window(scenario, &times)?;
    let step = ((stride / scenario.epoch_interval) + 1e-9).round().max(1.0) as usize;
    let mut prefixes: Vec<usize> = (1..).map(|j| j * step).take_while(|n| *n <= plan.len()).collect();
    if prefixes.last() != Some(&plan.len()) {
        prefixes.push(plan.len());
    }
    Ok(Window {
        plan,
        prefixes,
        interval: scenario.epoch_interval,
    })
}

fn synthesize(scenario: &Scenario, window: &Window, seed: u64) -> Result<Vec<DDMeasurements>> {
    WindowGenerator::new(scenario, seed)
        .window(&window.plan)
        .map_err(|e| e.annotate(format!("seed {seed}")))
}

fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    with_pool(|| seeds.par_iter().map(|&s| f(s)).collect::<Result<Vec<T>>>())?
}

fn annotate_prefix(seed: u64, t: f64) -> impl FnOnce(Error) -> Error {
    move |e| e.annotate(format!("seed {seed}, window {t} s"))
}

fn max_abs<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn ambiguity_experiment(scenario: &Scenario, duration: f64, stride: f64, seeds: &[u64]) -> Result<Parts> {
    let window = plan_prefixes(scenario, duration, stride)?;
    let runs = per_seed(seeds, |seed| {
        let dds = synthesize(scenario, &window, seed)?;
        let mut detail = Table::new(
            "ambiguity",
            &[
                "time_s",
                "sat_id",
                "ref_sat_id",
                "float_err_cycles",
                "rounded_err_cycles",
                "ils_err_cycles",
                "fixed_accepted",
            ],
        );
        let mut maxima = Table::new(
            "ambiguity_max",
            &[
                "time_s",
                "max_float_err_cycles",
                "max_rounded_err_cycles",
                "max_ils_err_cycles",
                "fixed_accepted",
                "ratio",
            ],
        );
        for &n in &window.prefixes {
            let t = n as f64 * window.interval;
            let est = fix_and_solve(&dds[..n], scenario).map_err(annotate_prefix(seed, t))?;
            let float = est.float_errors();
            let rounded = est.rounded_errors();
            let fixed = est.fixed_errors().unwrap_or_else(|| rounded.clone());
            for (k, id) in est.ambiguity_ids.iter().enumerate() {
                detail.push(vec![
                    t.into(),
                    (id.sat_id as i64).into(),
                    (id.ref_sat_id as i64).into(),
                    float[k].into(),
                    rounded[k].into(),
                    fixed[k].into(),
                    est.fixed_accepted.into(),
                ]);
            }
            maxima.push(vec![
                t.into(),
                max_abs(float.iter().copied()).into(),
                max_abs(rounded.iter().map(|v| *v as f64)).into(),
                max_abs(fixed.iter().map(|v| *v as f64)).into(),
                est.fixed_accepted.into(),
                est.ratio.unwrap_or(f64::NAN).into(),
            ]);
        }
        Ok(SeedTraces {
            seed,
            tables: vec![maxima, detail],
        })
    })?;

    let times: Vec<f64> = window.prefixes.iter().map(|n| *n as f64 * window.interval).collect();
    let mut agg = Table::new(
        "ambiguity_max",
        &[
            "time_s",
            "max_ils_err_cycles_median",
            "max_ils_err_cycles_p10",
            "max_ils_err_cycles_p90",
            "max_float_err_cycles_median",
            "max_rounded_err_cycles_median",
            "accepted_fraction",
        ],
    );
    let cols = |name: &str| -> Vec<Vec<f64>> {
        runs.iter()
            .map(|r| r.tables[0].column(name).expect("column exists"))
            .collect()
    };
    let ils = cols("max_ils_err_cycles");
    let flt = cols("max_float_err_cycles");
    let rnd = cols("max_rounded_err_cycles");
    let acc = cols("fixed_accepted");
    let mut ils_median = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let at = |c: &Vec<Vec<f64>>| c.iter().map(|v| v[i]).collect::<Vec<f64>>();
        let m = median(&at(&ils));
        ils_median.push(m);
        agg.push(vec![
            t.into(),
            m.into(),
            percentile(&at(&ils), 10.0).into(),
            percentile(&at(&ils), 90.0).into(),
            median(&at(&flt)).into(),
            median(&at(&rnd)).into(),
            mean(&at(&acc)).into(),
        ]);
    }
    let mut summary = BTreeMap::new();
    if let Some(last) = agg.rows.last() {
        for (key, col) in [
            ("final_median_max_ils_err_cycles", 1),
            ("final_median_max_float_err_cycles", 4),
            ("final_median_max_rounded_err_cycles", 5),
            ("final_accepted_fraction", 6),
        ] {
            summary.insert(key.into(), last[col].as_f64().unwrap_or(f64::NAN));
        }
    }
    summary.insert(
        "convergence_time_s".into(),
        converged_from(&times, &ils_median, |v| v == 0.0).unwrap_or(f64::INFINITY),
    );
    Ok((runs, vec![agg], summary))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

const POSITION_COLUMNS: [&str; 4] = ["time_s", "horizontal_err_m", "vertical_err_m", "fixed_accepted"];

fn position_row(t: f64, est: &PositionEstimate) -> Vec<Cell> {
    vec![
        t.into(),
        est.horizontal_error.into(),
        est.vertical_error.into(),
        est.fixed_accepted.into(),
    ]
}

fn position_experiment(scenario: &Scenario, duration: f64, stride: f64, seeds: &[u64]) -> Result<Parts> {
    let window = plan_prefixes(scenario, duration, stride)?;
    let runs = per_seed(seeds, |seed| {
        let dds = synthesize(scenario, &window, seed)?;
        let mut joint = Table::new("position_joint", &POSITION_COLUMNS);
        let mut delay = Table::new("position_delay", &POSITION_COLUMNS);
        for &n in &window.prefixes {
            let t = n as f64 * window.interval;
            let fixed = fix_and_solve(&dds[..n], scenario).map_err(annotate_prefix(seed, t))?;
            joint.push(position_row(t, &fixed));
            let d = delay_only_solve(&dds[..n], scenario).map_err(annotate_prefix(seed, t))?;
            delay.push(position_row(t, &d));
        }
        Ok(SeedTraces {
            seed,
            tables: vec![joint, delay],
        })
    })?;

    let times: Vec<f64> = window.prefixes.iter().map(|n| *n as f64 * window.interval).collect();
    let mut aggregate = Vec::new();
    let mut summary = BTreeMap::new();
    for (ti, mode) in ["joint", "delay"].iter().enumerate() {
        let mut agg = Table::new(
            &format!("position_{mode}"),
            &[
                "time_s",
                "horizontal_err_m",
                "vertical_err_m",
                "fixed_accepted",
                "horizontal_err_m_p10",
                "horizontal_err_m_p90",
                "vertical_err_m_p10",
                "vertical_err_m_p90",
            ],
        );
        let col = |name: &str| -> Vec<Vec<f64>> {
            runs.iter()
                .map(|r| r.tables[ti].column(name).expect("column exists"))
                .collect()
        };
        let (h, v, a) = (col("horizontal_err_m"), col("vertical_err_m"), col("fixed_accepted"));
        let mut h_median = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            let at = |c: &Vec<Vec<f64>>| c.iter().map(|x| x[i]).collect::<Vec<f64>>();
            let (hi, vi) = (at(&h), at(&v));
            h_median.push(median(&hi));
            agg.push(vec![
                t.into(),
                median(&hi).into(),
                median(&vi).into(),
                mean(&at(&a)).into(),
                percentile(&hi, 10.0).into(),
                percentile(&hi, 90.0).into(),
                percentile(&vi, 10.0).into(),
                percentile(&vi, 90.0).into(),
            ]);
        }
        if let Some(last) = agg.rows.last() {
            summary.insert(format!("final_median_horizontal_{mode}_m"), last[1].as_f64().unwrap_or(f64::NAN));
            summary.insert(format!("final_median_vertical_{mode}_m"), last[2].as_f64().unwrap_or(f64::NAN));
        }
        summary.insert(
            format!("convergence_time_{mode}_s"),
            converged_from(&times, &h_median, |x| x <= POSITION_CONVERGED).unwrap_or(f64::INFINITY),
        );
        aggregate.push(agg);
    }
    Ok((runs, aggregate, summary))
}

/// Runs both systems on the LEO side's duration and seeds and tabulates
/// which converged, when, and to what error.
pub fn compare_systems(leo_cfg: &ScenarioConfig, gnss_cfg: &ScenarioConfig, experiment: Experiment) -> Result<Comparison> {
    let mut gnss_cfg = gnss_cfg.clone();
    gnss_cfg.duration = leo_cfg.duration.or(gnss_cfg.duration);
    gnss_cfg.seeds = leo_cfg.seeds.clone();
    let mut leo_cfg = leo_cfg.clone();
    leo_cfg.duration = gnss_cfg.duration;
    let leo = run_experiment(&leo_cfg, experiment).map_err(|e| e.annotate(leo_cfg.system.name()))?;
    let gnss = run_experiment(&gnss_cfg, experiment).map_err(|e| e.annotate(gnss_cfg.system.name()))?;
    let verdicts = [&leo, &gnss].into_iter().flat_map(verdicts_for).collect();
    Ok(Comparison {
        experiment,
        leo,
        gnss,
        verdicts,
    })
}

fn verdicts_for(r: &ExperimentResult) -> Vec<Verdict> {
    let get = |k: &str| r.summary_value(k).unwrap_or(f64::NAN);
    let timed = |metric: &str, time_key: &str, value_key: &str, unit: &str| {
        let t = get(time_key);
        Verdict {
            system: r.system,
            metric: metric.into(),
            converged: t.is_finite(),
            convergence_time: t.is_finite().then_some(t),
            final_value: get(value_key),
            unit: unit.into(),
        }
    };
    let untimed = |metric: &str, value_key: &str, unit: &str| Verdict {
        system: r.system,
        metric: metric.into(),
        converged: false,
        convergence_time: None,
        final_value: get(value_key),
        unit: unit.into(),
    };
    match r.experiment {
        Experiment::Doppler => vec![
            untimed("nadir_doppler_rate_tangent", "doppler_rate_tangent_hz_s", "Hz/s"),
            untimed("nadir_doppler_rate_keplerian", "doppler_rate_keplerian_hz_s", "Hz/s"),
        ],
        Experiment::PhaseError => vec![untimed("max_phase_error", "max_abs_error_tangent_cycles", "cycles")],
        Experiment::Condition => vec![timed("condition_plateau", "plateau_time_s", "final_condition_number", "")],
        Experiment::Ambiguity => vec![timed(
            "median_max_ambiguity_error",
            "convergence_time_s",
            "final_median_max_ils_err_cycles",
            "cycles",
        )],
        Experiment::Position => vec![
            timed(
                "median_horizontal_error_joint",
                "convergence_time_joint_s",
                "final_median_horizontal_joint_m",
                "m",
            ),
            timed(
                "median_horizontal_error_delay",
                "convergence_time_delay_s",
                "final_median_horizontal_delay_m",
                "m",
            ),
        ],
    }
}

/// Raw measurements at both receivers over the configured window for one
/// seed, for debugging dumps.
pub fn raw_measurements(config: &ScenarioConfig, seed: u64) -> Result<Vec<(EpochMeasurements, EpochMeasurements)>> {
    let scenario = config.build()?;
    let duration = config.duration.unwrap_or(DEFAULT_WINDOW);
    let times = epoch_times(scenario.start_time, duration, scenario.epoch_interval)?;
    let plan = plan_window(&scenario, &times)?;
    let mut gen = WindowGenerator::new(&scenario, seed);
    Ok(plan.iter().map(|g| gen.raw_epoch(g)).collect())
}

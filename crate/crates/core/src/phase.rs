//! Geometric range dynamics, carrier phase and the piecewise-linear Doppler
//! phase approximation.
//!
//! Phase convention: carrier phase in cycles grows with range,
//! `phi = f_c * r / c`, so its rate is `-doppler` with
//! `doppler = -f_c * range_rate / c`.

use crate::error::{Error, Result};
use crate::orbit::{propagate_to_ecef, KeplerianElements, SatelliteState, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Half-width of the central difference used for range acceleration.
pub const DIFF_STEP: f64 = 1e-3;

pub fn wavelength(f_c: f64) -> f64 {
    SPEED_OF_LIGHT / f_c
}

/// Anything that can report a satellite state at a given time.
pub trait Trajectory {
    fn state_at(&self, t: f64) -> Result<SatelliteState>;
}

impl Trajectory for KeplerianElements {
    fn state_at(&self, t: f64) -> Result<SatelliteState> {
        propagate_to_ecef(self, t)
    }
}

/// Constant-velocity track, used for tangent-pass geometry and tests.
#[derive(Debug, Clone, Copy)]
pub struct LinearTrajectory {
    pub position: Vec3,
    pub velocity: Vec3,
    pub t0: f64,
}

impl Trajectory for LinearTrajectory {
    fn state_at(&self, t: f64) -> Result<SatelliteState> {
        Ok(SatelliteState {
            sat_id: 0,
            position_ecef: self.position + self.velocity * (t - self.t0),
            velocity_ecef: self.velocity,
            time: t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOfSight {
    pub range: f64,
    /// UE to satellite.
    pub unit_vector: Vec3,
    pub range_rate: f64,
    pub range_accel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub times: Vec<f64>,
    pub phase: Vec<f64>,
    pub carrier_frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerSample {
    pub time: f64,
    pub doppler: f64,
    pub doppler_rate: f64,
}

fn range_and_rate(ue: &Vec3, sat: &SatelliteState) -> Result<(f64, Vec3, f64)> {
    let d = sat.position_ecef - ue;
    let range = d.norm();
    if range < 1e-6 {
        return Err(Error::InvalidGeometry("receiver and satellite coincide".into()));
    }
    let u = d / range;
    Ok((range, u, u.dot(&sat.velocity_ecef)))
}

/// Line of sight from three states spaced `step` apart; the range
/// acceleration is the central difference of the outer range rates.
pub fn line_of_sight_from_states(
    ue: &Vec3,
    before: &SatelliteState,
    center: &SatelliteState,
    after: &SatelliteState,
    step: f64,
) -> Result<LineOfSight> {
    let (range, unit_vector, range_rate) = range_and_rate(ue, center)?;
    let (_, _, rr_before) = range_and_rate(ue, before)?;
    let (_, _, rr_after) = range_and_rate(ue, after)?;
    Ok(LineOfSight {
        range,
        unit_vector,
        range_rate,
        range_accel: (rr_after - rr_before) / (2.0 * step),
    })
}

pub fn line_of_sight<T: Trajectory + ?Sized>(ue: &Vec3, traj: &T, t: f64) -> Result<LineOfSight> {
    let center = traj.state_at(t)?;
    // Keep the stencil inside t >= 0 for propagators that refuse negative times.
    let tc = t.max(DIFF_STEP);
    let before = traj.state_at(tc - DIFF_STEP)?;
    let after = traj.state_at(tc + DIFF_STEP)?;
    line_of_sight_from_states(ue, &before, &center, &after, DIFF_STEP)
}

pub fn doppler_from_los(los: &LineOfSight, time: f64, f_c: f64) -> DopplerSample {
    DopplerSample {
        time,
        doppler: -f_c * los.range_rate / SPEED_OF_LIGHT,
        doppler_rate: -f_c * los.range_accel / SPEED_OF_LIGHT,
    }
}

pub fn doppler_state<T: Trajectory + ?Sized>(ue: &Vec3, traj: &T, t: f64, f_c: f64) -> Result<DopplerSample> {
    Ok(doppler_from_los(&line_of_sight(ue, traj, t)?, t, f_c))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Absolute carrier phase `f_c * r / c` in cycles.
pub fn absolute_phase(range: f64, f_c: f64) -> f64 {
    range * f_c / SPEED_OF_LIGHT
}

/// True carrier phase along a trajectory, relative to the first sample.
pub fn true_carrier_phase<T: Trajectory + ?Sized>(
    ue: &Vec3,
    traj: &T,
    f_c: f64,
    times: &[f64],
) -> Result<PhaseTrace> {
    check_times(times)?;
    let ranges = times
        .iter()
        .map(|&t| traj.state_at(t).map(|s| (s.position_ecef - ue).norm()))
        .collect::<Result<Vec<_>>>()?;
    let r0 = ranges[0];
    Ok(PhaseTrace {
        times: times.to_vec(),
        phase: ranges.iter().map(|r| (r - r0) * f_c / SPEED_OF_LIGHT).collect(),
        carrier_frequency: f_c,
    })
}

/// Piecewise-linear phase prediction from periodic Doppler updates. Inside
/// each update interval the phase advances at the rate implied by the
/// Doppler at the interval start; the prediction is continuous across
/// updates and starts at zero at `times[0]`.
pub fn doppler_phase_approx(updates: &[DopplerSample], times: &[f64], f_c: f64) -> Result<PhaseTrace> {
    check_times(times)?;
    if updates.is_empty() {
        return Err(Error::OutOfRange { time: times[0] });
    }
    if updates.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::InvalidInput("Doppler updates must be strictly increasing in time".into()));
    }
    let start = times[0];
    let last_update = updates[updates.len() - 1].time;
    let nominal_step = if updates.len() > 1 {
        updates[1].time - updates[0].time
    } else {
        f64::INFINITY
    };
    let cover_end = last_update + nominal_step;
    let eps = 1e-12 * (1.0 + start.abs());
    let first_update = updates[0].time;
    for &t in times {
        if t < first_update - eps || (t > cover_end + eps) || t < start {
            return Err(Error::OutOfRange { time: t });
        }
    }

    // Phase at each update instant, accumulated from the window start.
    let active = |t: f64| -> usize {
        match updates.binary_search_by(|u| u.time.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    };
    let k0 = active(start);
    let mut knot_phase = vec![0.0; updates.len()];
    let mut acc = 0.0;
    let mut prev_t = start;
    for k in k0 + 1..updates.len() {
        acc += -updates[k - 1].doppler * (updates[k].time - prev_t);
        knot_phase[k] = acc;
        prev_t = updates[k].time;
    }
    let phase = times
        .iter()
        .map(|&t| {
            let k = active(t).max(k0);
            let (base_t, base_phi) = if k == k0 { (start, 0.0) } else { (updates[k].time, knot_phase[k]) };
            base_phi - updates[k].doppler * (t - base_t)
        })
        .collect();
    Ok(PhaseTrace {
        times: times.to_vec(),
        phase,
        carrier_frequency: f_c,
    })
}

/// Elementwise `true - approx`.
pub fn phase_approx_error(true_trace: &PhaseTrace, approx_trace: &PhaseTrace) -> Result<Vec<f64>> {
    if true_trace.times.len() != approx_trace.times.len()
        || true_trace
            .times
            .iter()
            .zip(&approx_trace.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
    {
        return Err(Error::Shape("phase traces are on different time grids".into()));
    }
    Ok(true_trace
        .phase
        .iter()
        .zip(&approx_trace.phase)
        .map(|(t, a)| t - a)
        .collect())
}

/// Largest frequency error that drifts by less than one cycle between PRS
/// occasions: `1 / prs_period`.
pub fn max_tolerable_frequency_error(prs_period: f64) -> Result<f64> {
    if !(prs_period > 0.0) {
        return Err(Error::InvalidInput(format!("PRS period {prs_period} s must be positive")));
    }
    Ok(1.0 / prs_period)
}

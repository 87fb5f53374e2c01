//! Pseudorange and carrier-phase synthesis for the UE and the reference
//! receiver, with persistent integer ambiguities and double differencing.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::link::{link_error_model, ErrorModel};
use crate::orbit::{propagate_to_ecef, SatelliteState, Vec3};
use crate::phase::SPEED_OF_LIGHT;
use crate::scenario::{DelaySchedule, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel {
    pub bias: f64,
    pub drift: f64,
}

impl ClockModel {
    pub const ZERO: ClockModel = ClockModel { bias: 0.0, drift: 0.0 };

    pub fn offset(&self, t: f64) -> f64 {
        self.bias + self.drift * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockSet {
    pub ue: ClockModel,
    pub reference: ClockModel,
    /// Indexed by satellite id.
    pub satellites: Vec<ClockModel>,
}

impl ClockSet {
    pub fn zero(n_sats: usize) -> Self {
        Self {
            ue: ClockModel::ZERO,
            reference: ClockModel::ZERO,
            satellites: vec![ClockModel::ZERO; n_sats],
        }
    }

    /// Receiver clocks as given; satellite biases uniform in +-1 ms with
    /// drifts uniform in +-1e-10 s/s.
    pub fn random<R: Rng>(n_sats: usize, ue: ClockModel, reference: ClockModel, rng: &mut R) -> Self {
        let satellites = (0..n_sats)
            .map(|_| ClockModel {
                bias: rng.random_range(-1e-3..=1e-3),
                drift: rng.random_range(-1e-10..=1e-10),
            })
            .collect();
        Self {
            ue,
            reference,
            satellites,
        }
    }

    fn receiver(&self, rx: ReceiverId) -> &ClockModel {
        match rx {
            ReceiverId::Ue => &self.ue,
            ReceiverId::Reference => &self.reference,
        }
    }

    fn satellite(&self, sat_id: u32) -> ClockModel {
        self.satellites.get(sat_id as usize).copied().unwrap_or(ClockModel::ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReceiverId {
    Ue,
    Reference,
}

impl fmt::Display for ReceiverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReceiverId::Ue => "ue",
            ReceiverId::Reference => "ref",
        })
    }
}

/// Ground-truth integer ambiguities, drawn once per (receiver, satellite)
/// at first sight and then held for the run.
#[derive(Debug, Clone, Default)]
pub struct AmbiguityMap {
    values: BTreeMap<(ReceiverId, u32), i64>,
    range: i64,
}

impl AmbiguityMap {
    pub const DEFAULT_RANGE: i64 = 1_000_000;

    pub fn new(range: i64) -> Self {
        Self {
            values: BTreeMap::new(),
            range,
        }
    }

    pub fn get_or_draw<R: Rng>(&mut self, rx: ReceiverId, sat_id: u32, rng: &mut R) -> i64 {
        let range = self.range;
        *self
            .values
            .entry((rx, sat_id))
            .or_insert_with(|| if range == 0 { 0 } else { rng.random_range(-range..=range) })
    }

    pub fn get(&self, rx: ReceiverId, sat_id: u32) -> Option<i64> {
        self.values.get(&(rx, sat_id)).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SatMeasurement {
    pub sat_id: u32,
    pub pseudorange: f64,
    pub carrier_phase: f64,
    pub true_ambiguity: i64,
    pub sat_state: SatelliteState,
    pub error_model: ErrorModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMeasurements {
    pub time: f64,
    pub receiver: ReceiverId,
    pub entries: Vec<SatMeasurement>,
}

impl EpochMeasurements {
    pub fn find(&self, sat_id: u32) -> Option<&SatMeasurement> {
        self.entries.iter().find(|e| e.sat_id == sat_id)
    }
}

/// Identity of a double-differenced ambiguity: satellite against reference
/// satellite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AmbiguityId {
    pub sat_id: u32,
    pub ref_sat_id: u32,
}

/// Per-link standard deviations entering one DD row: (UE, reference receiver).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSigmas {
    pub delay: [f64; 2],
    pub phase: [f64; 2],
}

impl LinkSigmas {
    fn from_models(ue: &ErrorModel, reference: &ErrorModel) -> Self {
        Self {
            delay: [ue.sigma_delay, reference.sigma_delay],
            phase: [ue.sigma_phase, reference.sigma_phase],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdRow {
    pub sat_id: u32,
    pub dd_pseudorange: f64,
    pub dd_phase: f64,
    pub true_dd_ambiguity: i64,
    pub sat_state: SatelliteState,
    pub sigmas: LinkSigmas,
}

impl DdRow {
    pub fn ambiguity_id(&self, ref_sat_id: u32) -> AmbiguityId {
        AmbiguityId {
            sat_id: self.sat_id,
            ref_sat_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DDMeasurements {
    pub time: f64,
    pub ref_sat_id: u32,
    pub ref_sat_state: SatelliteState,
    pub ref_sigmas: LinkSigmas,
    pub rows: Vec<DdRow>,
    /// False when the epoch carries phase only.
    pub delay_valid: bool,
}

/// Satellites used at one epoch, highest elevation first, with the
/// reference satellite for differencing.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochGeometry {
    pub time: f64,
    pub satellites: Vec<SatelliteState>,
    pub elevations: Vec<f64>,
    pub ref_sat_id: u32,
    pub delay_valid: bool,
}

/// Satellites above the mask at both receivers, ranked by UE elevation and
/// truncated to the scenario's maximum.
pub fn select_satellites(scenario: &Scenario, t: f64) -> Result<(Vec<SatelliteState>, Vec<f64>)> {
    let mut ranked = Vec::new();
    for (id, el) in scenario.elements.iter().enumerate() {
        let mut s = propagate_to_ecef(el, t)?;
        s.sat_id = id as u32;
        let e_ue = crate::orbit::elevation_angle(&scenario.ue, &s.position_ecef)?;
        if e_ue <= scenario.elevation_mask {
            continue;
        }
        let e_ref = crate::orbit::elevation_angle(&scenario.reference, &s.position_ecef)?;
        if e_ref <= scenario.elevation_mask {
            continue;
        }
        ranked.push((s, e_ue));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.sat_id.cmp(&b.0.sat_id)));
    ranked.truncate(scenario.max_satellites);
    Ok(ranked.into_iter().unzip())
}

/// Epoch times `t0 + k * interval` for `k = 0..round(duration / interval)`.
pub fn epoch_times(t0: f64, duration: f64, interval: f64) -> Result<Vec<f64>> {
    if !(duration > 0.0) || !(interval > 0.0) {
        return Err(Error::InvalidInput(format!(
            "duration ({duration}) and epoch interval ({interval}) must be positive"
        )));
    }
    let n = ((duration / interval) + 1e-9).floor().max(1.0) as usize;
    Ok((0..n).map(|k| t0 + k as f64 * interval).collect())
}

/// Plans the satellite set and reference satellite for every epoch. The
/// reference is the highest satellite and is held until it leaves the set.
pub fn plan_window(scenario: &Scenario, times: &[f64]) -> Result<Vec<EpochGeometry>> {
    use rayon::prelude::*;
    let selections: Vec<(Vec<SatelliteState>, Vec<f64>)> = times
        .par_iter()
        .map(|&t| select_satellites(scenario, t))
        .collect::<Result<_>>()?;
    let mut held: Option<u32> = None;
    let mut out = Vec::with_capacity(times.len());
    let t0 = times.first().copied().unwrap_or(0.0);
    for (k, (&t, (sats, els))) in times.iter().zip(selections).enumerate() {
        if sats.is_empty() {
            return Err(Error::InsufficientGeometry { visible: 0, required: 1 }.annotate(format!("epoch t = {t} s")));
        }
        let ref_sat_id = match held {
            Some(id) if sats.iter().any(|s| s.sat_id == id) => id,
            _ => sats[0].sat_id,
        };
        held = Some(ref_sat_id);
        out.push(EpochGeometry {
            time: t,
            satellites: sats,
            elevations: els,
            ref_sat_id,
            delay_valid: delay_scheduled(scenario, k, t - t0),
        });
    }
    Ok(out)
}

fn delay_scheduled(scenario: &Scenario, index: usize, elapsed: f64) -> bool {
    match scenario.delay_schedule {
        DelaySchedule::EveryEpoch => true,
        DelaySchedule::SinglePrs => index == 0,
        DelaySchedule::PrsPeriodic => {
            let phase = elapsed / scenario.prs_period;
            (phase - phase.round()).abs() * scenario.prs_period < 0.5 * scenario.epoch_interval
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn measure_link<R: Rng>(
    scenario: &Scenario,
    rx: ReceiverId,
    rx_pos: &Vec3,
    sat: &SatelliteState,
    t: f64,
    clocks: &ClockSet,
    ambiguities: &mut AmbiguityMap,
    rng: &mut R,
) -> SatMeasurement {
    let f_c = scenario.link.carrier_frequency;
    let range = (sat.position_ecef - rx_pos).norm();
    let model = link_error_model(&scenario.link, range);
    let dt = clocks.receiver(rx).offset(t) - clocks.satellite(sat.sat_id).offset(t);
    let n = ambiguities.get_or_draw(rx, sat.sat_id, rng);
    let (n_code, n_phase) = if scenario.noise_enabled {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        (a * model.sigma_delay, b * model.sigma_phase)
    } else {
        (0.0, 0.0)
    };
    SatMeasurement {
        sat_id: sat.sat_id,
        pseudorange: range + SPEED_OF_LIGHT * dt + n_code,
        carrier_phase: range * f_c / SPEED_OF_LIGHT + f_c * dt + n as f64 + n_phase,
        true_ambiguity: n,
        sat_state: *sat,
        error_model: model,
    }
}

/// Measurements at both receivers for a planned epoch.
pub fn synthesize_planned_epoch<R: Rng>(
    scenario: &Scenario,
    geometry: &EpochGeometry,
    clocks: &ClockSet,
    ambiguities: &mut AmbiguityMap,
    rng: &mut R,
) -> (EpochMeasurements, EpochMeasurements) {
    let t = geometry.time;
    let mut ue = Vec::with_capacity(geometry.satellites.len());
    let mut rf = Vec::with_capacity(geometry.satellites.len());
    for sat in &geometry.satellites {
        ue.push(measure_link(scenario, ReceiverId::Ue, &scenario.ue, sat, t, clocks, ambiguities, rng));
        rf.push(measure_link(
            scenario,
            ReceiverId::Reference,
            &scenario.reference,
            sat,
            t,
            clocks,
            ambiguities,
            rng,
        ));
    }
    (
        EpochMeasurements {
            time: t,
            receiver: ReceiverId::Ue,
            entries: ue,
        },
        EpochMeasurements {
            time: t,
            receiver: ReceiverId::Reference,
            entries: rf,
        },
    )
}

/// Single-epoch synthesis at time `t` with a seeded noise stream.
pub fn synthesize_epoch(
    scenario: &Scenario,
    t: f64,
    clocks: &ClockSet,
    ambiguities: &mut AmbiguityMap,
    rng_seed: u64,
) -> Result<(EpochMeasurements, EpochMeasurements)> {
    let plan = plan_window(scenario, &[t])?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(synthesize_planned_epoch(scenario, &plan[0], clocks, ambiguities, &mut rng))
}

/// `(ue_j - ue_ref) - (rx_j - rx_ref)` for every common satellite `j`.
pub fn double_difference(ue: &EpochMeasurements, reference: &EpochMeasurements, ref_sat: u32) -> Result<DDMeasurements> {
    let ue_ref = ue.find(ref_sat).ok_or_else(|| Error::MissingReference {
        sat_id: ref_sat,
        receiver: ue.receiver.to_string(),
    })?;
    let rx_ref = reference.find(ref_sat).ok_or_else(|| Error::MissingReference {
        sat_id: ref_sat,
        receiver: reference.receiver.to_string(),
    })?;
    let rows = ue
        .entries
        .iter()
        .filter(|e| e.sat_id != ref_sat)
        .filter_map(|u| reference.find(u.sat_id).map(|r| (u, r)))
        .map(|(u, r)| DdRow {
            sat_id: u.sat_id,
            dd_pseudorange: (u.pseudorange - ue_ref.pseudorange) - (r.pseudorange - rx_ref.pseudorange),
            dd_phase: (u.carrier_phase - ue_ref.carrier_phase) - (r.carrier_phase - rx_ref.carrier_phase),
            true_dd_ambiguity: (u.true_ambiguity - ue_ref.true_ambiguity) - (r.true_ambiguity - rx_ref.true_ambiguity),
            sat_state: u.sat_state,
            sigmas: LinkSigmas::from_models(&u.error_model, &r.error_model),
        })
        .collect();
    Ok(DDMeasurements {
        time: ue.time,
        ref_sat_id: ref_sat,
        ref_sat_state: ue_ref.sat_state,
        ref_sigmas: LinkSigmas::from_models(&ue_ref.error_model, &rx_ref.error_model),
        rows,
        delay_valid: true,
    })
}

/// Owns the per-window clocks, ambiguity truth and noise stream.
pub struct WindowGenerator<'a> {
    scenario: &'a Scenario,
    clocks: ClockSet,
    ambiguities: AmbiguityMap,
    rng: ChaCha8Rng,
}

impl<'a> WindowGenerator<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clocks = if scenario.clocks_enabled {
            ClockSet::random(scenario.elements.len(), scenario.ue_clock, scenario.ref_clock, &mut rng)
        } else {
            ClockSet::zero(scenario.elements.len())
        };
        Self {
            scenario,
            clocks,
            ambiguities: AmbiguityMap::new(scenario.ambiguity_range),
            rng,
        }
    }

    pub fn with_clocks(mut self, clocks: ClockSet) -> Self {
        self.clocks = clocks;
        self
    }

    pub fn clocks(&self) -> &ClockSet {
        &self.clocks
    }

    pub fn raw_epoch(&mut self, geometry: &EpochGeometry) -> (EpochMeasurements, EpochMeasurements) {
        synthesize_planned_epoch(self.scenario, geometry, &self.clocks, &mut self.ambiguities, &mut self.rng)
    }

    pub fn epoch(&mut self, geometry: &EpochGeometry) -> Result<DDMeasurements> {
        let (ue, rf) = self.raw_epoch(geometry);
        let mut dd = double_difference(&ue, &rf, geometry.ref_sat_id)
            .map_err(|e| e.annotate(format!("epoch t = {} s", geometry.time)))?;
        dd.delay_valid = geometry.delay_valid;
        Ok(dd)
    }

    pub fn window(&mut self, plan: &[EpochGeometry]) -> Result<Vec<DDMeasurements>> {
        plan.iter().map(|g| self.epoch(g)).collect()
    }
}

/// Double-differenced measurements for every epoch of a window.
pub fn synthesize_window(
    scenario: &Scenario,
    t0: f64,
    duration: f64,
    epoch_interval: f64,
    rng_seed: u64,
) -> Result<Vec<DDMeasurements>> {
    let times = epoch_times(t0, duration, epoch_interval)?;
    let plan = plan_window(scenario, &times)?;
    WindowGenerator::new(scenario, rng_seed).window(&plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Scenario, System};

    fn quiet(system: System) -> Scenario {
        let mut s = Scenario::default_for(system).unwrap();
        s.noise_enabled = false;
        s.clocks_enabled = false;
        s.ambiguity_range = 0;
        s
    }

    #[test]
    fn noiseless_identity() {
        let s = quiet(System::Leo);
        let clocks = ClockSet::zero(s.elements.len());
        let mut amb = AmbiguityMap::new(0);
        let (ue, _) = synthesize_epoch(&s, 0.0, &clocks, &mut amb, 1).unwrap();
        let lambda = s.wavelength();
        for e in &ue.entries {
            let r = (e.sat_state.position_ecef - s.ue).norm();
            assert_eq!(e.pseudorange, r);
            assert!((e.carrier_phase * lambda - r).abs() < 1e-7);
        }
    }

    #[test]
    fn receiver_bias_shifts_everything() {
        let s = quiet(System::Gnss);
        let base = ClockSet::zero(s.elements.len());
        let mut shifted = base.clone();
        let b = 2.5e-4;
        shifted.ue.bias = b;
        let (a, _) = synthesize_epoch(&s, 0.0, &base, &mut AmbiguityMap::new(0), 1).unwrap();
        let (c, _) = synthesize_epoch(&s, 0.0, &shifted, &mut AmbiguityMap::new(0), 1).unwrap();
        let f = s.link.carrier_frequency;
        for (x, y) in a.entries.iter().zip(&c.entries) {
            assert!((y.pseudorange - x.pseudorange - SPEED_OF_LIGHT * b).abs() < 1e-6);
            assert!((y.carrier_phase - x.carrier_phase - f * b).abs() < 1e-5);
        }
    }

    #[test]
    fn seeded_epochs_are_bitwise_identical() {
        let s = Scenario::default_for(System::Leo).unwrap();
        let clocks = ClockSet::zero(s.elements.len());
        let a = synthesize_epoch(&s, 1.0, &clocks, &mut AmbiguityMap::new(1_000_000), 9).unwrap();
        let b = synthesize_epoch(&s, 1.0, &clocks, &mut AmbiguityMap::new(1_000_000), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn four_satellites_give_three_rows() {
        let s = Scenario::default_for(System::Leo).unwrap();
        let dd = synthesize_window(&s, 0.0, 0.01, 0.01, 3).unwrap();
        assert_eq!(dd.len(), 1);
        assert_eq!(dd[0].rows.len(), 3);
        assert!(dd[0].rows.iter().all(|r| r.sat_id != dd[0].ref_sat_id));
    }

    #[test]
    fn self_difference_is_zero() {
        let s = Scenario::default_for(System::Leo).unwrap();
        let clocks = ClockSet::zero(s.elements.len());
        let (ue, _) = synthesize_epoch(&s, 0.0, &clocks, &mut AmbiguityMap::new(10), 4).unwrap();
        let mut other = ue.clone();
        other.receiver = ReceiverId::Reference;
        let dd = double_difference(&ue, &other, ue.entries[0].sat_id).unwrap();
        for r in dd.rows {
            assert_eq!(r.dd_pseudorange, 0.0);
            assert_eq!(r.dd_phase, 0.0);
            assert_eq!(r.true_dd_ambiguity, 0);
        }
    }

    #[test]
    fn missing_reference_is_reported() {
        let s = Scenario::default_for(System::Leo).unwrap();
        let clocks = ClockSet::zero(s.elements.len());
        let (ue, rf) = synthesize_epoch(&s, 0.0, &clocks, &mut AmbiguityMap::new(10), 4).unwrap();
        assert!(matches!(
            double_difference(&ue, &rf, 100_000),
            Err(Error::MissingReference { sat_id: 100_000, .. })
        ));
    }

    #[test]
    fn window_epoch_counts() {
        assert_eq!(epoch_times(0.0, 3.0, 0.01).unwrap().len(), 300);
        assert_eq!(epoch_times(5.0, 0.01, 0.01).unwrap(), vec![5.0]);
        assert!(epoch_times(0.0, 0.0, 0.01).is_err());
        assert!(epoch_times(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn window_is_deterministic() {
        let s = Scenario::default_for(System::Gnss).unwrap();
        let a = synthesize_window(&s, 0.0, 0.2, 0.01, 17).unwrap();
        let b = synthesize_window(&s, 0.0, 0.2, 0.01, 17).unwrap();
        assert_eq!(a, b);
        let c = synthesize_window(&s, 0.0, 0.2, 0.01, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn code_noise_statistics() {
        let s = Scenario::default_for(System::Leo).unwrap();
        let plan = plan_window(&s, &[0.0]).unwrap();
        let mut gen = WindowGenerator::new(&s, 5).with_clocks(ClockSet::zero(s.elements.len()));
        let sat = plan[0].satellites[0];
        let r = (sat.position_ecef - s.ue).norm();
        let mut samples = Vec::new();
        let mut sigma = 0.0;
        for _ in 0..10_000 {
            let (ue, _) = gen.raw_epoch(&plan[0]);
            let e = ue.find(sat.sat_id).unwrap();
            sigma = e.error_model.sigma_delay;
            samples.push(e.pseudorange - r);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.05, "{} vs {}", var.sqrt(), sigma);
    }
}

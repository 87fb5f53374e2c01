//! Scenario configuration: strict JSON loading, defaults, and the resolved
//! runtime [`Scenario`].
//!
//! The config is a flat JSON object. Every key is optional; missing keys take
//! the defaults of the selected `system`. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::link::{LinkConfig, RangingWaveform, TransmitPower};
use crate::measurement::{AmbiguityMap, ClockModel};
use crate::orbit::{
    ecef_to_geodetic, geodetic_to_ecef, offset_enu, ConstellationKind, ConstellationSpec, GeodeticCoord,
    KeplerianElements, Vec3,
};
use crate::phase::wavelength;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Leo,
    Gnss,
}

impl System {
    pub fn name(&self) -> &'static str {
        match self {
            System::Leo => "leo",
            System::Gnss => "gnss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdCovariance {
    /// Full covariance of the differenced noise, including the terms shared
    /// through the reference satellite.
    Exact,
    /// Diagonal approximation, for ablation.
    Diagonal,
}

/// Which epochs of a window carry a delay (code-phase) measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySchedule {
    /// Continuous ranging code, one delay per epoch.
    EveryEpoch,
    /// One PRS occasion at the first epoch of the window.
    SinglePrs,
    /// PRS occasions every `prs_period` seconds from the window start.
    PrsPeriodic,
}

/// Offset of the default reference receiver east of the UE, meters.
pub const REFERENCE_BASELINE_EAST: f64 = 5_000.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub system: System,
    pub constellation: ConstellationSpec,
    pub link: LinkConfig,
    pub ue: GeodeticCoord,
    pub ref_receiver: GeodeticCoord,
    /// Degrees.
    pub elevation_mask: f64,
    pub epoch_interval: f64,
    /// Window length in seconds; `None` lets each experiment pick its own.
    pub duration: Option<f64>,
    pub start_time: f64,
    pub max_satellites: usize,
    pub seeds: Vec<u64>,
    pub prs_period: f64,
    pub delay_schedule: DelaySchedule,
    pub ambiguity_range: i64,
    pub ratio_threshold: f64,
    pub dd_covariance: DdCovariance,
    pub condition_sample_interval: f64,
    pub ambiguity_stride: f64,
}

pub fn default_seeds() -> Vec<u64> {
    (1..=50).collect()
}

impl ScenarioConfig {
    pub fn default_for(system: System) -> Self {
        let (constellation, link, delay_schedule) = match system {
            System::Leo => (
                ConstellationSpec::leo_default(),
                LinkConfig::leo_default(),
                DelaySchedule::SinglePrs,
            ),
            System::Gnss => (
                ConstellationSpec::gps_default(),
                LinkConfig::gnss_default(),
                DelaySchedule::EveryEpoch,
            ),
        };
        let ue = GeodeticCoord::from_degrees(0.0, 0.0, 0.0);
        Self {
            system,
            constellation,
            link,
            ue,
            ref_receiver: default_reference(&ue),
            elevation_mask: 15.0,
            epoch_interval: 0.01,
            duration: None,
            start_time: 0.0,
            max_satellites: 4,
            seeds: default_seeds(),
            prs_period: 0.04,
            delay_schedule,
            ambiguity_range: AmbiguityMap::DEFAULT_RANGE,
            ratio_threshold: 2.0,
            dd_covariance: DdCovariance::Exact,
            condition_sample_interval: 1.0,
            ambiguity_stride: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |key: &str, message: String| Error::ConfigSchema {
            key: key.into(),
            message,
        };
        if !(0.0..90.0).contains(&self.elevation_mask) {
            return Err(schema("elevation_mask", format!("{} not in [0, 90)", self.elevation_mask)));
        }
        if !(self.epoch_interval > 0.0) {
            return Err(schema("epoch_interval", "must be positive".into()));
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(schema("duration", format!("{d} must be finite and non-negative")));
            }
        }
        if !(self.start_time >= 0.0) {
            return Err(schema("start_time", "must be non-negative".into()));
        }
        if self.max_satellites < 2 {
            return Err(schema("max_satellites", "at least 2 satellites are needed to difference".into()));
        }
        if self.seeds.is_empty() {
            return Err(schema("seeds", "seed list is empty".into()));
        }
        if !(self.prs_period > 0.0) {
            return Err(schema("prs_period", "must be positive".into()));
        }
        if self.ambiguity_range < 0 {
            return Err(schema("ambiguity_range", "must be non-negative".into()));
        }
        if !(self.ratio_threshold >= 1.0) {
            return Err(schema("ratio_threshold", "must be at least 1".into()));
        }
        if !(self.condition_sample_interval > 0.0) {
            return Err(schema("condition_sample_interval", "must be positive".into()));
        }
        if !(self.ambiguity_stride > 0.0) {
            return Err(schema("ambiguity_stride", "must be positive".into()));
        }
        for (key, lat) in [("ue_lat_deg", self.ue.latitude), ("ref_lat_deg", self.ref_receiver.latitude)] {
            if lat.abs() > std::f64::consts::FRAC_PI_2 {
                return Err(schema(key, "latitude beyond +-90 degrees".into()));
            }
        }
        let c = &self.constellation;
        if c.planes == 0 || c.sats_per_plane == 0 {
            return Err(schema("planes", "planes and sats_per_plane must be at least 1".into()));
        }
        self.link
            .validate()
            .map_err(|e| schema("link", e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let elements = self.constellation.build()?;
        let ue = geodetic_to_ecef(&self.ue);
        let reference = geodetic_to_ecef(&self.ref_receiver);
        Ok(Scenario {
            system: self.system,
            elements,
            link: self.link,
            ue,
            reference,
            elevation_mask: self.elevation_mask.to_radians(),
            epoch_interval: self.epoch_interval,
            start_time: self.start_time,
            max_satellites: self.max_satellites,
            delay_schedule: self.delay_schedule,
            prs_period: self.prs_period,
            noise_enabled: true,
            clocks_enabled: true,
            ue_clock: ClockModel { bias: 100e-6, drift: 1e-8 },
            ref_clock: ClockModel { bias: -40e-6, drift: 5e-9 },
            ambiguity_range: self.ambiguity_range,
            dd_covariance: self.dd_covariance,
            ratio_threshold: self.ratio_threshold,
        })
    }
}

fn default_reference(ue: &GeodeticCoord) -> GeodeticCoord {
    let p = geodetic_to_ecef(ue);
    ecef_to_geodetic(&offset_enu(&p, REFERENCE_BASELINE_EAST, 0.0, 0.0))
}

/// Resolved scenario consumed by the measurement and estimation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: System,
    pub elements: Vec<KeplerianElements>,
    pub link: LinkConfig,
    pub ue: Vec3,
    pub reference: Vec3,
    /// Radians.
    pub elevation_mask: f64,
    pub epoch_interval: f64,
    pub start_time: f64,
    pub max_satellites: usize,
    pub delay_schedule: DelaySchedule,
    pub prs_period: f64,
    pub noise_enabled: bool,
    pub clocks_enabled: bool,
    pub ue_clock: ClockModel,
    pub ref_clock: ClockModel,
    pub ambiguity_range: i64,
    pub dd_covariance: DdCovariance,
    pub ratio_threshold: f64,
}

impl Scenario {
    pub fn default_for(system: System) -> Result<Self> {
        ScenarioConfig::default_for(system).build()
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.link.carrier_frequency)
    }

    /// Copy with noise, clocks and ambiguity offsets switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            noise_enabled: false,
            clocks_enabled: false,
            ambiguity_range: 0,
            ..self.clone()
        }
    }
}

// Flat on-disk schema. Units are carried in the key names except for the
// three keys documented in plain units (degrees / seconds).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<System>,
    constellation: Option<ConstellationKind>,
    planes: Option<u32>,
    sats_per_plane: Option<u32>,
    altitude_m: Option<f64>,
    inclination_deg: Option<f64>,
    phasing_factor: Option<u32>,
    eirp_density_dbw_per_mhz: Option<f64>,
    received_power_dbw: Option<f64>,
    ranging_waveform: Option<RangingWaveform>,
    carrier_frequency_hz: Option<f64>,
    bandwidth_hz: Option<f64>,
    chip_rate_hz: Option<f64>,
    rx_antenna_gain_dbi: Option<f64>,
    system_noise_temp_k: Option<f64>,
    misc_losses_db: Option<f64>,
    coherent_integration_s: Option<f64>,
    delay_integration_s: Option<f64>,
    ue_lat_deg: Option<f64>,
    ue_lon_deg: Option<f64>,
    ue_alt_m: Option<f64>,
    ref_lat_deg: Option<f64>,
    ref_lon_deg: Option<f64>,
    ref_alt_m: Option<f64>,
    elevation_mask: Option<f64>,
    epoch_interval: Option<f64>,
    duration: Option<f64>,
    start_time: Option<f64>,
    max_satellites: Option<usize>,
    seeds: Option<Vec<u64>>,
    prs_period: Option<f64>,
    delay_schedule: Option<DelaySchedule>,
    ambiguity_range: Option<i64>,
    ratio_threshold: Option<f64>,
    dd_covariance: Option<DdCovariance>,
    condition_sample_interval: Option<f64>,
    ambiguity_stride: Option<f64>,
}

fn map_json_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    if e.classify() == serde_json::error::Category::Data {
        if let Some(rest) = msg.strip_prefix("unknown field `") {
            if let Some(end) = rest.find('`') {
                return Error::ConfigSchema {
                    key: rest[..end].to_string(),
                    message: "unknown key".into(),
                };
            }
        }
    }
    Error::ConfigParse {
        line: e.line(),
        column: e.column(),
        message: msg,
    }
}

/// Parses config text. Empty or whitespace-only text means "all defaults".
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = if text.trim().is_empty() {
        RawConfig::default()
    } else {
        serde_json::from_str(text).map_err(map_json_error)?
    };
    let system = raw.system.unwrap_or(System::Leo);
    let mut cfg = ScenarioConfig::default_for(system);

    if let Some(kind) = raw.constellation {
        cfg.constellation = match kind {
            ConstellationKind::WalkerLeo if cfg.constellation.kind != kind => ConstellationSpec::leo_default(),
            ConstellationKind::GpsNominal if cfg.constellation.kind != kind => ConstellationSpec::gps_default(),
            _ => cfg.constellation,
        };
    }
    let c = &mut cfg.constellation;
    set(&mut c.planes, raw.planes);
    set(&mut c.sats_per_plane, raw.sats_per_plane);
    set(&mut c.altitude, raw.altitude_m);
    if let Some(i) = raw.inclination_deg {
        c.inclination = i.to_radians();
    }
    set(&mut c.phasing_factor, raw.phasing_factor);

    let l = &mut cfg.link;
    match (raw.eirp_density_dbw_per_mhz, raw.received_power_dbw) {
        (Some(_), Some(_)) => {
            return Err(Error::ConfigSchema {
                key: "received_power_dbw".into(),
                message: "give either eirp_density_dbw_per_mhz or received_power_dbw, not both".into(),
            })
        }
        (Some(d), None) => l.power = TransmitPower::EirpDensity(d),
        (None, Some(p)) => l.power = TransmitPower::ReceivedPower(p),
        (None, None) => {}
    }
    set(&mut l.waveform, raw.ranging_waveform);
    set(&mut l.carrier_frequency, raw.carrier_frequency_hz);
    set(&mut l.bandwidth, raw.bandwidth_hz);
    set(&mut l.chip_or_symbol_rate, raw.chip_rate_hz);
    set(&mut l.rx_antenna_gain, raw.rx_antenna_gain_dbi);
    set(&mut l.system_noise_temp, raw.system_noise_temp_k);
    set(&mut l.misc_losses, raw.misc_losses_db);
    set(&mut l.coherent_integration, raw.coherent_integration_s);
    set(&mut l.delay_integration, raw.delay_integration_s);

    let ue_given = raw.ue_lat_deg.is_some() || raw.ue_lon_deg.is_some() || raw.ue_alt_m.is_some();
    if ue_given {
        cfg.ue = GeodeticCoord::from_degrees(
            raw.ue_lat_deg.unwrap_or(0.0),
            raw.ue_lon_deg.unwrap_or(0.0),
            raw.ue_alt_m.unwrap_or(0.0),
        );
    }
    if raw.ref_lat_deg.is_some() || raw.ref_lon_deg.is_some() || raw.ref_alt_m.is_some() {
        match (raw.ref_lat_deg, raw.ref_lon_deg) {
            (Some(lat), Some(lon)) => {
                cfg.ref_receiver = GeodeticCoord::from_degrees(lat, lon, raw.ref_alt_m.unwrap_or(0.0));
            }
            _ => {
                return Err(Error::ConfigSchema {
                    key: "ref_lat_deg".into(),
                    message: "ref_lat_deg and ref_lon_deg must be given together".into(),
                })
            }
        }
    } else if ue_given {
        cfg.ref_receiver = default_reference(&cfg.ue);
    }

    set(&mut cfg.elevation_mask, raw.elevation_mask);
    set(&mut cfg.epoch_interval, raw.epoch_interval);
    if raw.duration.is_some() {
        cfg.duration = raw.duration;
    }
    set(&mut cfg.start_time, raw.start_time);
    set(&mut cfg.max_satellites, raw.max_satellites);
    set(&mut cfg.seeds, raw.seeds);
    set(&mut cfg.prs_period, raw.prs_period);
    set(&mut cfg.delay_schedule, raw.delay_schedule);
    set(&mut cfg.ambiguity_range, raw.ambiguity_range);
    set(&mut cfg.ratio_threshold, raw.ratio_threshold);
    set(&mut cfg.dd_covariance, raw.dd_covariance);
    set(&mut cfg.condition_sample_interval, raw.condition_sample_interval);
    set(&mut cfg.ambiguity_stride, raw.ambiguity_stride);

    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_leo_default() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default_for(System::Leo));
        assert_eq!(parse_config("{}").unwrap(), cfg);
        assert_eq!(cfg.constellation.total(), 840);
        assert_eq!(cfg.constellation.altitude, 600e3);
        assert!((cfg.constellation.inclination.to_degrees() - 70.0).abs() < 1e-12);
        assert_eq!(cfg.link.carrier_frequency, 2e9);
        assert_eq!(cfg.link.bandwidth, 1e6);
        assert_eq!(cfg.link.power, TransmitPower::EirpDensity(34.0));
        assert_eq!(cfg.elevation_mask, 15.0);
        assert_eq!(cfg.epoch_interval, 0.01);
        assert_eq!(cfg.ue, GeodeticCoord::from_degrees(0.0, 0.0, 0.0));
        assert_eq!(cfg.seeds, (1..=50).collect::<Vec<u64>>());
    }

    #[test]
    fn gnss_defaults() {
        let cfg = parse_config(r#"{"system": "gnss"}"#).unwrap();
        assert_eq!(cfg.constellation.kind, ConstellationKind::GpsNominal);
        assert_eq!(cfg.link.carrier_frequency, 1575.42e6);
        assert_eq!(cfg.link.chip_or_symbol_rate, 1.023e6);
        assert_eq!(cfg.link.power, TransmitPower::ReceivedPower(-158.5));
    }

    #[test]
    fn mask_override() {
        let cfg = parse_config(r#"{"elevation_mask": 15}"#).unwrap();
        assert_eq!(cfg.elevation_mask, 15.0);
        let cfg = parse_config(r#"{"elevation_mask": 20.5}"#).unwrap();
        assert_eq!(cfg.build().unwrap().elevation_mask, 20.5f64.to_radians());
    }

    #[test]
    fn unknown_key_names_the_key() {
        match parse_config(r#"{"foo": 1}"#) {
            Err(Error::ConfigSchema { key, .. }) => assert_eq!(key, "foo"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_has_line() {
        match parse_config("{\n  \"duration\": 3,\n  oops\n}") {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            r#"{"elevation_mask": 90}"#,
            r#"{"epoch_interval": 0}"#,
            r#"{"duration": -1}"#,
            r#"{"seeds": []}"#,
            r#"{"planes": 0}"#,
            r#"{"max_satellites": 1}"#,
            r#"{"eirp_density_dbw_per_mhz": 30, "received_power_dbw": -150}"#,
            r#"{"ue_lat_deg": 95}"#,
            r#"{"ref_lat_deg": 1.0}"#,
        ] {
            assert!(matches!(parse_config(text), Err(Error::ConfigSchema { .. })), "{text}");
        }
    }

    #[test]
    fn reference_follows_ue() {
        let cfg = parse_config(r#"{"ue_lat_deg": 40.0, "ue_lon_deg": -105.0}"#).unwrap();
        let s = cfg.build().unwrap();
        assert!(((s.reference - s.ue).norm() - REFERENCE_BASELINE_EAST).abs() < 1e-3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config("{}").unwrap();
        let b = parse_config(r#"{"duration": 3}"#).unwrap();
        assert_eq!(a.hash(), parse_config("").unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}

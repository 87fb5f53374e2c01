//! Constellation generation, two-body propagation and ground visibility.
//!
//! Orbits are point-mass Keplerian (no J2, no drag). The Earth is a rotating
//! WGS-84 ellipsoid for receiver placement and local-up directions.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth gravitational parameter, m³/s².
pub const MU_EARTH: f64 = 3.986_004_418e14;
/// Earth rotation rate, rad/s.
pub const OMEGA_EARTH: f64 = 7.292_115_146_7e-5;
/// WGS-84 semi-major axis, m.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// Nominal GPS semi-major axis, m.
pub const GPS_SEMI_MAJOR_AXIS: f64 = 26_559_710.0;

const KEPLER_TOL: f64 = 1e-12;
const KEPLER_MAX_ITER: usize = 30;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerianElements {
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub raan: f64,
    pub arg_perigee: f64,
    pub mean_anomaly_epoch: f64,
    pub epoch: f64,
}

impl KeplerianElements {
    pub fn circular(semi_major_axis: f64, inclination: f64, raan: f64, mean_anomaly: f64) -> Self {
        Self {
            semi_major_axis,
            eccentricity: 0.0,
            inclination,
            raan,
            arg_perigee: 0.0,
            mean_anomaly_epoch: mean_anomaly,
            epoch: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.semi_major_axis > WGS84_A) {
            return Err(Error::InvalidSpec(format!(
                "semi-major axis {} m is inside the Earth",
                self.semi_major_axis
            )));
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(Error::InvalidSpec(format!("eccentricity {} outside [0, 1)", self.eccentricity)));
        }
        if !(0.0..=PI).contains(&self.inclination) {
            return Err(Error::InvalidSpec(format!("inclination {} rad outside [0, pi]", self.inclination)));
        }
        Ok(())
    }

    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH / self.semi_major_axis.powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        TAU / self.mean_motion()
    }

    /// Circular orbital speed sqrt(mu / a).
    pub fn circular_speed(&self) -> f64 {
        (MU_EARTH / self.semi_major_axis).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub sat_id: u32,
    pub position_ecef: Vec3,
    pub velocity_ecef: Vec3,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstellationKind {
    WalkerLeo,
    GpsNominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub kind: ConstellationKind,
    pub planes: u32,
    pub sats_per_plane: u32,
    pub altitude: f64,
    pub inclination: f64,
    pub phasing_factor: u32,
}

impl ConstellationSpec {
    /// 30 planes of 28 satellites at 600 km, 70 degrees.
    pub fn leo_default() -> Self {
        Self {
            kind: ConstellationKind::WalkerLeo,
            planes: 30,
            sats_per_plane: 28,
            altitude: 600e3,
            inclination: 70f64.to_radians(),
            phasing_factor: 1,
        }
    }

    pub fn gps_default() -> Self {
        Self {
            kind: ConstellationKind::GpsNominal,
            planes: 6,
            sats_per_plane: 4,
            altitude: GPS_SEMI_MAJOR_AXIS - WGS84_A,
            inclination: 55f64.to_radians(),
            phasing_factor: 0,
        }
    }

    pub fn total(&self) -> u32 {
        self.planes * self.sats_per_plane
    }

    pub fn build(&self) -> Result<Vec<KeplerianElements>> {
        match self.kind {
            ConstellationKind::WalkerLeo => build_walker_leo(self),
            ConstellationKind::GpsNominal => Ok(build_gps_nominal()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticCoord {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeodeticCoord {
    pub fn from_degrees(latitude_deg: f64, longitude_deg: f64, altitude: f64) -> Self {
        Self {
            latitude: latitude_deg.to_radians(),
            longitude: longitude_deg.to_radians(),
            altitude,
        }
    }
}

/// Walker-delta constellation: RAAN spread over 2*pi, in-plane anomalies
/// spread over 2*pi, plane `p` offset by `phasing * 2*pi * p / total`.
pub fn build_walker_leo(spec: &ConstellationSpec) -> Result<Vec<KeplerianElements>> {
    if spec.kind != ConstellationKind::WalkerLeo {
        return Err(Error::InvalidSpec("build_walker_leo called with a non-Walker spec".into()));
    }
    if spec.planes == 0 || spec.sats_per_plane == 0 {
        return Err(Error::InvalidSpec(format!(
            "planes ({}) and sats_per_plane ({}) must be at least 1",
            spec.planes, spec.sats_per_plane
        )));
    }
    let a = WGS84_A + spec.altitude;
    let total = f64::from(spec.total());
    let mut out = Vec::with_capacity(spec.total() as usize);
    for p in 0..spec.planes {
        let raan = TAU * f64::from(p) / f64::from(spec.planes);
        let offset = f64::from(spec.phasing_factor) * TAU * f64::from(p) / total;
        for s in 0..spec.sats_per_plane {
            let m0 = (TAU * f64::from(s) / f64::from(spec.sats_per_plane) + offset).rem_euclid(TAU);
            let el = KeplerianElements::circular(a, spec.inclination, raan, m0);
            el.validate()?;
            out.push(el);
        }
    }
    Ok(out)
}

// Nominal 24-slot baseline (planes A..F). RAAN and argument of latitude at
// the reference epoch, degrees. Circular orbits, so the argument of latitude
// is used directly as the mean anomaly.
const GPS_PLANE_RAAN_DEG: [f64; 6] = [272.847, 332.847, 32.847, 92.847, 152.847, 212.847];
const GPS_SLOT_ARG_LAT_DEG: [[f64; 4]; 6] = [
    [268.126, 161.786, 11.676, 41.806],
    [80.956, 173.336, 309.976, 204.376],
    [111.876, 11.796, 339.666, 241.556],
    [135.226, 265.446, 35.156, 167.356],
    [197.046, 302.596, 66.066, 333.686],
    [238.886, 345.226, 105.206, 135.346],
];

/// 24-slot nominal GPS constellation: 6 planes x 4 slots, 55 degrees, e = 0.
pub fn build_gps_nominal() -> Vec<KeplerianElements> {
    let incl = 55f64.to_radians();
    GPS_PLANE_RAAN_DEG
        .iter()
        .zip(GPS_SLOT_ARG_LAT_DEG.iter())
        .flat_map(|(raan, slots)| {
            slots.iter().map(move |u| {
                KeplerianElements::circular(GPS_SEMI_MAJOR_AXIS, incl, raan.to_radians(), u.to_radians())
            })
        })
        .collect()
}

/// Solves Kepler's equation `M = E - e sin E` for the eccentric anomaly.
pub fn solve_kepler(mean_anomaly: f64, eccentricity: f64) -> Result<f64> {
    let m = mean_anomaly.rem_euclid(TAU);
    if eccentricity == 0.0 {
        return Ok(m);
    }
    let mut e_anom = if eccentricity < 0.8 { m } else { PI };
    for _ in 0..KEPLER_MAX_ITER {
        let f = e_anom - eccentricity * e_anom.sin() - m;
        let step = f / (1.0 - eccentricity * e_anom.cos());
        e_anom -= step;
        if step.abs() < KEPLER_TOL {
            return Ok(e_anom);
        }
    }
    Err(Error::Numeric(format!(
        "Kepler iteration did not converge for M = {mean_anomaly}, e = {eccentricity}"
    )))
}

/// Position and velocity in the Earth-centred inertial frame that coincides
/// with ECEF at t = 0.
pub fn propagate_inertial(elements: &KeplerianElements, t: f64) -> Result<(Vec3, Vec3)> {
    let a = elements.semi_major_axis;
    let e = elements.eccentricity;
    let n = elements.mean_motion();
    let m = elements.mean_anomaly_epoch + n * (t - elements.epoch);
    let ea = solve_kepler(m, e)?;
    let (sin_e, cos_e) = ea.sin_cos();
    let root = (1.0 - e * e).sqrt();
    let r = a * (1.0 - e * cos_e);

    let pos_pf = Vec3::new(a * (cos_e - e), a * root * sin_e, 0.0);
    let vfac = (MU_EARTH * a).sqrt() / r;
    let vel_pf = Vec3::new(-vfac * sin_e, vfac * root * cos_e, 0.0);

    let rot = rot_z(elements.raan) * rot_x(elements.inclination) * rot_z(elements.arg_perigee);
    Ok((rot * pos_pf, rot * vel_pf))
}

/// Two-body propagation to ECEF at time `t` (seconds since the simulation
/// origin). The returned state carries `sat_id = 0`.
pub fn propagate_to_ecef(elements: &KeplerianElements, t: f64) -> Result<SatelliteState> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("propagation time {t} must be non-negative")));
    }
    let (r_i, v_i) = propagate_inertial(elements, t)?;
    let to_ecef = rot_z(-OMEGA_EARTH * t);
    let r_e = to_ecef * r_i;
    let omega = Vec3::new(0.0, 0.0, OMEGA_EARTH);
    let v_e = to_ecef * v_i - omega.cross(&r_e);
    Ok(SatelliteState {
        sat_id: 0,
        position_ecef: r_e,
        velocity_ecef: v_e,
        time: t,
    })
}

/// Propagates every element set; satellite ids are the slice indices.
pub fn propagate_constellation(elements: &[KeplerianElements], t: f64) -> Result<Vec<SatelliteState>> {
    elements
        .iter()
        .enumerate()
        .map(|(id, el)| {
            propagate_to_ecef(el, t).map(|mut s| {
                s.sat_id = id as u32;
                s
            })
        })
        .collect()
}

fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn geodetic_to_ecef(coord: &GeodeticCoord) -> Vec3 {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (sin_lat, cos_lat) = coord.latitude.sin_cos();
    let (sin_lon, cos_lon) = coord.longitude.sin_cos();
    let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
    Vec3::new(
        (n + coord.altitude) * cos_lat * cos_lon,
        (n + coord.altitude) * cos_lat * sin_lon,
        (n * (1.0 - e2) + coord.altitude) * sin_lat,
    )
}

/// Iterative inverse of [`geodetic_to_ecef`]; converges to sub-millimetre in
/// a handful of steps for terrestrial points.
pub fn ecef_to_geodetic(p: &Vec3) -> GeodeticCoord {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let rho = p.x.hypot(p.y);
    let longitude = p.y.atan2(p.x);
    let mut lat = p.z.atan2(rho * (1.0 - e2));
    let mut alt = 0.0;
    for _ in 0..10 {
        let sin_lat = lat.sin();
        let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
        alt = if lat.cos().abs() > 1e-10 {
            rho / lat.cos() - n
        } else {
            p.z.abs() - n * (1.0 - e2)
        };
        let next = p.z.atan2(rho * (1.0 - e2 * n / (n + alt)));
        if (next - lat).abs() < 1e-14 {
            lat = next;
            break;
        }
        lat = next;
    }
    GeodeticCoord {
        latitude: lat,
        longitude,
        altitude: alt,
    }
}

/// Geodetic local-up unit vector at an ECEF point.
pub fn local_up(p: &Vec3) -> Vec3 {
    let g = ecef_to_geodetic(p);
    let (sl, cl) = g.latitude.sin_cos();
    let (so, co) = g.longitude.sin_cos();
    Vec3::new(cl * co, cl * so, sl)
}

/// Rows are the East, North and Up unit vectors at `p`.
pub fn enu_rotation(p: &Vec3) -> Matrix3<f64> {
    let g = ecef_to_geodetic(p);
    let (sl, cl) = g.latitude.sin_cos();
    let (so, co) = g.longitude.sin_cos();
    Matrix3::new(-so, co, 0.0, -sl * co, -sl * so, cl, cl * co, cl * so, sl)
}

/// Point displaced from `origin` by a local East/North/Up offset.
pub fn offset_enu(origin: &Vec3, east: f64, north: f64, up: f64) -> Vec3 {
    origin + enu_rotation(origin).transpose() * Vec3::new(east, north, up)
}

/// Elevation of `sat_ecef` above the geodetic horizon at `ue_ecef`, radians.
pub fn elevation_angle(ue_ecef: &Vec3, sat_ecef: &Vec3) -> Result<f64> {
    if ue_ecef.norm() < 1.0 {
        return Err(Error::InvalidGeometry("receiver at the Earth's centre".into()));
    }
    let los = sat_ecef - ue_ecef;
    let dist = los.norm();
    if dist < 1e-6 {
        return Err(Error::InvalidGeometry("receiver and satellite coincide".into()));
    }
    let up = local_up(ue_ecef);
    let u = up.dot(&los);
    Ok(u.atan2((los - up * u).norm()))
}

/// Satellites above `mask`, highest elevation first (ties by ascending id),
/// truncated to `k`.
pub fn visible_and_select(
    constellation: &[SatelliteState],
    ue: &Vec3,
    mask: f64,
    k: usize,
) -> Result<Vec<u32>> {
    Ok(ranked_visible(constellation, ue, mask)?
        .into_iter()
        .take(k)
        .map(|(id, _)| id)
        .collect())
}

/// Same ordering as [`visible_and_select`] but fails when fewer than
/// `required` satellites are visible.
pub fn select_for_positioning(
    constellation: &[SatelliteState],
    ue: &Vec3,
    mask: f64,
    k: usize,
    required: usize,
) -> Result<Vec<u32>> {
    let chosen = visible_and_select(constellation, ue, mask, k)?;
    if chosen.len() < required {
        return Err(Error::InsufficientGeometry {
            visible: chosen.len(),
            required,
        });
    }
    Ok(chosen)
}

/// All satellites strictly above the mask with their elevations, sorted.
pub fn ranked_visible(constellation: &[SatelliteState], ue: &Vec3, mask: f64) -> Result<Vec<(u32, f64)>> {
    let mut vis = Vec::new();
    for s in constellation {
        let el = elevation_angle(ue, &s.position_ecef)?;
        if el > mask {
            vis.push((s.sat_id, el));
        }
    }
    vis.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(vis)
}

//! Circular-orbit propagation for Walker-delta constellations, Earth-fixed
//! parameter-server positions and elevation-mask visibility.
//!
//! Positions live in an Earth-centred inertial frame whose x axis points at
//! the Greenwich meridian at `t = 0`. The Earth is a sphere of radius
//! `earth_radius` rotating about +z at `earth_rotation_rate`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default sampling step for visibility scans, seconds.
pub const DEFAULT_VISIBILITY_STEP: f64 = 10.0;
/// Boundary precision of refined visibility windows, seconds.
pub const WINDOW_PRECISION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyConstants {
    /// Gravitational parameter GM, m^3/s^2.
    pub gm: f64,
    /// Mean Earth radius, m.
    pub earth_radius: f64,
    /// Sidereal rotation rate, rad/s.
    pub earth_rotation_rate: f64,
    /// Speed of light, m/s.
    pub light_speed: f64,
}

impl Default for BodyConstants {
    fn default() -> Self {
        Self {
            gm: 3.986004418e14,
            earth_radius: 6.371e6,
            earth_rotation_rate: 7.2921159e-5,
            light_speed: 2.99792458e8,
        }
    }
}

impl BodyConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gm", self.gm),
            ("earth_radius", self.earth_radius),
            ("earth_rotation_rate", self.earth_rotation_rate),
            ("light_speed", self.light_speed),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }

    /// One sidereal day, seconds.
    pub fn sidereal_day(&self) -> f64 {
        TAU / self.earth_rotation_rate
    }
}

/// Circular orbital speed at `altitude` above the reference sphere.
pub fn orbital_velocity(constants: &BodyConstants, altitude: f64) -> Result<f64> {
    if !(altitude > 0.0) || !altitude.is_finite() {
        return Err(invalid(format!("altitude must be positive, got {altitude}")));
    }
    Ok((constants.gm / (constants.earth_radius + altitude)).sqrt())
}

/// Orbital period `2π(R_E + h) / v`.
pub fn orbital_period(constants: &BodyConstants, altitude: f64) -> Result<f64> {
    let v = orbital_velocity(constants, altitude)?;
    Ok(TAU * (constants.earth_radius + altitude) / v)
}

pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    /// Altitude above the reference sphere, m.
    pub altitude: f64,
    pub inclination: f64,
    /// Right ascension of the ascending node, rad.
    pub raan: f64,
    pub num_sats: usize,
    /// Argument of latitude of slot 0 at the time origin, rad.
    pub phase_offset: f64,
}

impl OrbitSpec {
    pub fn new(
        altitude: f64,
        inclination: f64,
        raan: f64,
        num_sats: usize,
        phase_offset: f64,
    ) -> Self {
        Self {
            altitude,
            inclination: normalize_angle(inclination),
            raan: normalize_angle(raan),
            num_sats,
            phase_offset: normalize_angle(phase_offset),
        }
    }
}

/// Allowed altitude band for orbit validation. Defaults to the LEO band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for AltitudeBounds {
    fn default() -> Self {
        Self { min: 5.0e5, max: 2.0e6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSpec {
    pub constants: BodyConstants,
    pub orbits: Vec<OrbitSpec>,
    /// Simulation time at which every orbit is at its `phase_offset`, s.
    pub epoch_time_origin: f64,
}

impl ConstellationSpec {
    /// Builds and validates a constellation against the default LEO band.
    pub fn new(constants: BodyConstants, orbits: Vec<OrbitSpec>) -> Result<Self> {
        Self::with_bounds(constants, orbits, AltitudeBounds::default())
    }

    pub fn with_bounds(
        constants: BodyConstants,
        orbits: Vec<OrbitSpec>,
        bounds: AltitudeBounds,
    ) -> Result<Self> {
        constants.validate()?;
        if orbits.is_empty() {
            return Err(invalid("constellation needs at least one orbit"));
        }
        for (i, o) in orbits.iter().enumerate() {
            if !(o.altitude >= bounds.min && o.altitude <= bounds.max) {
                return Err(invalid(format!(
                    "orbit {i}: altitude {} outside [{}, {}]",
                    o.altitude, bounds.min, bounds.max
                )));
            }
            if o.num_sats == 0 {
                return Err(invalid(format!("orbit {i}: num_sats must be >= 1")));
            }
        }
        Ok(Self {
            constants,
            orbits,
            epoch_time_origin: 0.0,
        })
    }

    /// Walker-delta layout: `num_orbits` planes with RAANs evenly spread over
    /// a full turn, each plane shifted by `phasing` in argument of latitude
    /// relative to the previous one.
    pub fn walker_delta(
        constants: BodyConstants,
        num_orbits: usize,
        sats_per_orbit: usize,
        altitude: f64,
        inclination: f64,
        phasing: f64,
    ) -> Result<Self> {
        let orbits = (0..num_orbits)
            .map(|o| {
                OrbitSpec::new(
                    altitude,
                    inclination,
                    TAU * o as f64 / num_orbits as f64,
                    sats_per_orbit,
                    phasing * o as f64,
                )
            })
            .collect();
        Self::new(constants, orbits)
    }

    /// An empty constellation. Only useful as a vacuous input.
    pub fn empty(constants: BodyConstants) -> Self {
        Self {
            constants,
            orbits: Vec::new(),
            epoch_time_origin: 0.0,
        }
    }

    pub fn num_orbits(&self) -> usize {
        self.orbits.len()
    }

    pub fn num_satellites(&self) -> usize {
        self.orbits.iter().map(|o| o.num_sats).sum()
    }

    /// All satellites in ascending (orbit, slot) order.
    pub fn satellites(&self) -> Vec<SatelliteId> {
        self.orbits
            .iter()
            .enumerate()
            .flat_map(|(o, spec)| (0..spec.num_sats).map(move |s| SatelliteId::new(o, s)))
            .collect()
    }

    /// Dense 0-based index of a satellite in `satellites()` order.
    pub fn flat_index(&self, sat: SatelliteId) -> Result<usize> {
        self.check(sat)?;
        Ok(self.orbits[..sat.orbit].iter().map(|o| o.num_sats).sum::<usize>() + sat.slot)
    }

    pub fn check(&self, sat: SatelliteId) -> Result<&OrbitSpec> {
        let orbit = self
            .orbits
            .get(sat.orbit)
            .ok_or_else(|| Error::NotFound(format!("satellite {sat}: no such orbit")))?;
        if sat.slot >= orbit.num_sats {
            return Err(Error::NotFound(format!("satellite {sat}: no such slot")));
        }
        Ok(orbit)
    }

    pub fn period(&self, orbit: usize) -> Result<f64> {
        let o = self
            .orbits
            .get(orbit)
            .ok_or_else(|| Error::NotFound(format!("orbit {orbit}")))?;
        orbital_period(&self.constants, o.altitude)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatelliteId {
    pub orbit: usize,
    pub slot: usize,
}

impl SatelliteId {
    pub const fn new(orbit: usize, slot: usize) -> Self {
        Self { orbit, slot }
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sat-{}-{}", self.orbit, self.slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Gs,
    Hap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    pub min_elevation: f64,
}

impl NodeSpec {
    pub const DEFAULT_HAP_ALTITUDE: f64 = 2.0e4;
    pub const DEFAULT_MIN_ELEVATION_DEG: f64 = 10.0;

    pub fn hap(id: impl Into<String>, lat_deg: f64, lon_deg: f64) -> Self {
        Self {
            id: id.into(),
            role: NodeRole::Hap,
            latitude: lat_deg.to_radians(),
            longitude: lon_deg.to_radians(),
            altitude: Self::DEFAULT_HAP_ALTITUDE,
            min_elevation: Self::DEFAULT_MIN_ELEVATION_DEG.to_radians(),
        }
    }

    pub fn ground_station(id: impl Into<String>, lat_deg: f64, lon_deg: f64) -> Self {
        Self {
            altitude: 0.0,
            role: NodeRole::Gs,
            ..Self::hap(id, lat_deg, lon_deg)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latitude.abs() <= FRAC_PI_2) {
            return Err(invalid(format!("node {}: latitude out of range", self.id)));
        }
        if !self.longitude.is_finite() {
            return Err(invalid(format!("node {}: longitude not finite", self.id)));
        }
        if !(self.altitude >= 0.0) || !self.altitude.is_finite() {
            return Err(invalid(format!("node {}: altitude must be >= 0", self.id)));
        }
        if !(self.min_elevation >= 0.0 && self.min_elevation < FRAC_PI_2) {
            return Err(invalid(format!(
                "node {}: min_elevation must be in [0, 90) degrees",
                self.id
            )));
        }
        Ok(())
    }
}

/// A point in the inertial frame, metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EciPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EciPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for EciPosition {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for EciPosition {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for EciPosition {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

pub fn satellite_position(spec: &ConstellationSpec, sat: SatelliteId, t: f64) -> Result<EciPosition> {
    let orbit = spec.check(sat)?;
    let period = orbital_period(&spec.constants, orbit.altitude)?;
    Ok(position_on_orbit(
        &spec.constants,
        orbit,
        sat.slot,
        period,
        t - spec.epoch_time_origin,
    ))
}

fn position_on_orbit(
    constants: &BodyConstants,
    orbit: &OrbitSpec,
    slot: usize,
    period: f64,
    t: f64,
) -> EciPosition {
    let r = constants.earth_radius + orbit.altitude;
    // reduce the time term first so large t keeps full angular precision
    let u = TAU * slot as f64 / orbit.num_sats as f64
        + orbit.phase_offset
        + TAU * (t.rem_euclid(period) / period);
    let (su, cu) = u.sin_cos();
    let (si, ci) = orbit.inclination.sin_cos();
    let (so, co) = orbit.raan.sin_cos();
    EciPosition::new(
        r * (co * cu - so * su * ci),
        r * (so * cu + co * su * ci),
        r * (su * si),
    )
}

/// Angle of `sat` from its ascending node at time `t`, in `[0, 2 pi)`.
pub fn argument_of_latitude(spec: &ConstellationSpec, sat: SatelliteId, t: f64) -> Result<f64> {
    let orbit = spec.check(sat)?;
    let period = orbital_period(&spec.constants, orbit.altitude)?;
    let t = t - spec.epoch_time_origin;
    Ok(normalize_angle(
        TAU * sat.slot as f64 / orbit.num_sats as f64
            + orbit.phase_offset
            + TAU * (t.rem_euclid(period) / period),
    ))
}

pub fn node_position(constants: &BodyConstants, node: &NodeSpec, t: f64) -> EciPosition {
    let r = constants.earth_radius + node.altitude;
    let lon = node.longitude + constants.earth_rotation_rate * t.rem_euclid(constants.sidereal_day());
    let (slat, clat) = node.latitude.sin_cos();
    let (slon, clon) = lon.sin_cos();
    EciPosition::new(r * clat * clon, r * clat * slon, r * slat)
}

/// Angle between the node's zenith and the node-to-satellite direction.
pub fn zenith_angle(sat_pos: EciPosition, node_pos: EciPosition) -> Result<f64> {
    let look = sat_pos - node_pos;
    let (nz, nl) = (node_pos.norm(), look.norm());
    if nz == 0.0 || nl == 0.0 {
        return Err(invalid("zero-length vector in visibility test"));
    }
    Ok((node_pos.dot(look) / (nz * nl)).clamp(-1.0, 1.0).acos())
}

/// True when the satellite sits at or above the node's elevation mask.
pub fn is_visible(sat_pos: EciPosition, node_pos: EciPosition, min_elevation: f64) -> Result<bool> {
    Ok(zenith_angle(sat_pos, node_pos)? <= FRAC_PI_2 - min_elevation)
}

/// Signed visibility margin in radians; non-negative exactly when visible.
fn visibility_margin(
    spec: &ConstellationSpec,
    orbit: &OrbitSpec,
    slot: usize,
    period: f64,
    node: &NodeSpec,
    t: f64,
) -> f64 {
    let sat = position_on_orbit(&spec.constants, orbit, slot, period, t - spec.epoch_time_origin);
    let ground = node_position(&spec.constants, node, t);
    // both vectors are non-zero for any validated geometry
    let angle = zenith_angle(sat, ground).unwrap_or(PI);
    FRAC_PI_2 - node.min_elevation - angle
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityWindow {
    pub sat: SatelliteId,
    pub enter: f64,
    pub exit: f64,
}

/// Maximal intervals where `margin(t) >= 0` over `[t_start, t_end]`.
///
/// Sign changes between samples are bisected; sample triples with an interior
/// local maximum are searched with golden-section so that passes shorter than
/// `step` are still found. Returned boundaries are visible instants within
/// `WINDOW_PRECISION` of the true crossing.
pub fn scan_windows(
    margin: impl Fn(f64) -> f64,
    t_start: f64,
    t_end: f64,
    step: f64,
) -> Vec<(f64, f64)> {
    let n = ((t_end - t_start) / step).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=n)
        .map(|i| if i == n { t_end } else { t_start + step * i as f64 })
        .collect();
    let values: Vec<f64> = times.iter().map(|&t| margin(t)).collect();

    let mut out = Vec::new();
    let mut open: Option<f64> = (values[0] >= 0.0).then_some(t_start);
    for i in 1..times.len() {
        let (a, b) = (times[i - 1], times[i]);
        let (ga, gb) = (values[i - 1], values[i]);
        match (ga >= 0.0, gb >= 0.0) {
            (false, true) => open = Some(bisect_enter(&margin, a, b)),
            (true, false) => {
                let exit = bisect_exit(&margin, a, b);
                out.push((open.take().unwrap_or(a), exit));
            }
            (false, false) => {
                // a hidden pass must peak between samples i-1 and i+1
                if i + 1 < times.len() {
                    let gc = values[i + 1];
                    if gb >= ga && gb >= gc && gc < 0.0 {
                        let c = times[i + 1];
                        let (tm, gm) = golden_max(&margin, a, c);
                        if gm >= 0.0 {
                            let enter = bisect_enter(&margin, a, tm);
                            let exit = bisect_exit(&margin, tm, c);
                            out.push((enter, exit));
                        }
                    }
                }
            }
            (true, true) => {}
        }
    }
    if let Some(enter) = open {
        out.push((enter, t_end));
    }
    // a golden-section hit can duplicate a window already found on the next pair
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out.dedup_by(|later, earlier| later.0 <= earlier.1);
    out
}

fn bisect_enter(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > WINDOW_PRECISION {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn bisect_exit(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > WINDOW_PRECISION {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while b - a > WINDOW_PRECISION {
        if gc.max(gd) >= 0.0 {
            break;
        }
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d);
        }
    }
    if gc >= gd {
        (c, gc)
    } else {
        (d, gd)
    }
}

/// Visibility windows of every satellite to `node`, sorted by entry time.
pub fn visibility_windows(
    spec: &ConstellationSpec,
    node: &NodeSpec,
    t_start: f64,
    t_end: f64,
    step: f64,
) -> Result<Vec<VisibilityWindow>> {
    if !(t_start < t_end) {
        return Err(invalid("visibility horizon must satisfy t_start < t_end"));
    }
    if !(step > 0.0) {
        return Err(invalid("visibility step must be positive"));
    }
    let mut out = Vec::new();
    for (o, orbit) in spec.orbits.iter().enumerate() {
        let period = orbital_period(&spec.constants, orbit.altitude)?;
        for slot in 0..orbit.num_sats {
            let g = |t: f64| visibility_margin(spec, orbit, slot, period, node, t);
            for (enter, exit) in scan_windows(g, t_start, t_end, step) {
                out.push(VisibilityWindow {
                    sat: SatelliteId::new(o, slot),
                    enter,
                    exit,
                });
            }
        }
    }
    out.sort_by(|a, b| a.enter.total_cmp(&b.enter).then(a.sat.cmp(&b.sat)));
    Ok(out)
}

/// First instant at or after `t` when `sat` is visible from `node`, searched
/// over one orbital period plus one sidereal day.
pub fn next_visit_time(
    spec: &ConstellationSpec,
    sat: SatelliteId,
    node: &NodeSpec,
    t: f64,
) -> Result<Option<f64>> {
    let orbit = spec.check(sat)?;
    let period = orbital_period(&spec.constants, orbit.altitude)?;
    let horizon = period + spec.constants.sidereal_day();
    let g = |x: f64| visibility_margin(spec, orbit, sat.slot, period, node, x);
    if g(t) >= 0.0 {
        return Ok(Some(t));
    }
    Ok(scan_windows(g, t, t + horizon, DEFAULT_VISIBILITY_STEP)
        .first()
        .map(|w| w.0))
}

/// Ring neighbours `(slot - 1, slot + 1)` within the satellite's own orbit.
pub fn intra_orbit_neighbors(
    spec: &ConstellationSpec,
    sat: SatelliteId,
) -> Result<(SatelliteId, SatelliteId)> {
    let orbit = spec.check(sat)?;
    let n = orbit.num_sats;
    if n < 3 {
        return Err(Error::DegenerateRing {
            orbit: sat.orbit,
            num_sats: n,
        });
    }
    Ok((
        SatelliteId::new(sat.orbit, (sat.slot + n - 1) % n),
        SatelliteId::new(sat.orbit, (sat.slot + 1) % n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn reference() -> ConstellationSpec {
        ConstellationSpec::walker_delta(BodyConstants::default(), 5, 8, 2.0e6, 80f64.to_radians(), 0.0)
            .unwrap()
    }

    #[test]
    fn velocity_and_period_at_2000_km() {
        let c = BodyConstants::default();
        assert!(rel(orbital_velocity(&c, 2.0e6).unwrap(), 6900.5) < 1e-3);
        assert!(rel(orbital_period(&c, 2.0e6).unwrap(), 7622.0) < 1e-3);
    }

    #[test]
    fn unit_constants() {
        let c = BodyConstants {
            gm: 1.0,
            earth_radius: 1.0,
            ..Default::default()
        };
        assert!((orbital_velocity(&c, 1.0).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_positive_altitude_rejected() {
        let c = BodyConstants::default();
        assert!(matches!(orbital_velocity(&c, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(orbital_period(&c, -1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kepler_scaling() {
        let c = BodyConstants::default();
        let h = 1.0e6;
        let h2 = 2.0 * (c.earth_radius + h) - c.earth_radius;
        let r = orbital_velocity(&c, h2).unwrap() / orbital_velocity(&c, h).unwrap();
        assert!((r - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let p = orbital_period(&c, h2).unwrap() / orbital_period(&c, h).unwrap();
        assert!((p - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn satellite_at_zero_angles() {
        let spec = ConstellationSpec::new(
            BodyConstants::default(),
            vec![OrbitSpec::new(1.0e6, 0.0, 0.0, 4, 0.0)],
        )
        .unwrap();
        let p = satellite_position(&spec, SatelliteId::new(0, 0), 0.0).unwrap();
        assert_eq!(p, EciPosition::new(7.371e6, 0.0, 0.0));
    }

    #[test]
    fn satellite_periodic_and_antipodal() {
        let spec = reference();
        let sat = SatelliteId::new(2, 3);
        let t_o = spec.period(2).unwrap();
        let r = spec.constants.earth_radius + 2.0e6;
        let p0 = satellite_position(&spec, sat, 0.0).unwrap();
        let p1 = satellite_position(&spec, sat, t_o).unwrap();
        assert!(p0.distance(p1) <= 1e-6 * r);

        let a = satellite_position(&spec, SatelliteId::new(1, 0), 123.0).unwrap();
        let b = satellite_position(&spec, SatelliteId::new(1, 4), 123.0).unwrap();
        assert!(rel(a.dot(b), -r * r) < 1e-9);
    }

    #[test]
    fn invalid_satellite_is_not_found() {
        let spec = reference();
        assert!(matches!(
            satellite_position(&spec, SatelliteId::new(5, 0), 0.0),
            Err(Error::NotFound(_))
        ));
        assert!(matches!(
            satellite_position(&spec, SatelliteId::new(0, 8), 0.0),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn node_positions() {
        let c = BodyConstants::default();
        let mut gs = NodeSpec::ground_station("origin", 0.0, 0.0);
        assert_eq!(node_position(&c, &gs, 0.0), EciPosition::new(c.earth_radius, 0.0, 0.0));

        gs.longitude = 1.1;
        gs.latitude = 0.4;
        let a = node_position(&c, &gs, 0.0);
        let b = node_position(&c, &gs, c.sidereal_day());
        assert!(a.distance(b) <= 1e-6 * c.earth_radius);

        let pole = NodeSpec::hap("pole", 90.0, 17.0);
        for t in [0.0, 1000.0, 54321.0] {
            let p = node_position(&c, &pole, t);
            assert!(p.x.abs() < 1e-6 && p.y.abs() < 1e-6);
            assert!((p.z - (c.earth_radius + pole.altitude)).abs() < 1e-6);
        }
    }

    #[test]
    fn zenith_and_horizon() {
        let g = EciPosition::new(6.371e6, 0.0, 0.0);
        assert!(is_visible(g * 2.0, g, 1.5).unwrap());
        // due east along the local horizontal
        let horizon = g + EciPosition::new(0.0, 1.0e6, 0.0);
        assert!(!is_visible(horizon, g, 10f64.to_radians()).unwrap());
        assert!(is_visible(g, g, 0.1).is_err());
        assert!(is_visible(g, EciPosition::default(), 0.1).is_err());
    }

    #[test]
    fn ring_neighbors() {
        let spec = ConstellationSpec::new(
            BodyConstants::default(),
            vec![
                OrbitSpec::new(1.0e6, 0.0, 0.0, 8, 0.0),
                OrbitSpec::new(1.0e6, 0.0, 0.0, 3, 0.0),
                OrbitSpec::new(1.0e6, 0.0, 0.0, 2, 0.0),
            ],
        )
        .unwrap();
        let (l, r) = intra_orbit_neighbors(&spec, SatelliteId::new(0, 0)).unwrap();
        assert_eq!((l.slot, r.slot), (7, 1));
        let (l, r) = intra_orbit_neighbors(&spec, SatelliteId::new(1, 2)).unwrap();
        assert_eq!((l.slot, r.slot), (1, 0));
        assert!(matches!(
            intra_orbit_neighbors(&spec, SatelliteId::new(2, 0)),
            Err(Error::DegenerateRing { .. })
        ));
        for a in 0..8 {
            let sa = SatelliteId::new(0, a);
            let (l, r) = intra_orbit_neighbors(&spec, sa).unwrap();
            for b in [l, r] {
                let (bl, br) = intra_orbit_neighbors(&spec, b).unwrap();
                assert!(bl == sa || br == sa);
            }
        }
    }

    #[test]
    fn empty_constellation_has_no_windows() {
        let spec = ConstellationSpec::empty(BodyConstants::default());
        let node = NodeSpec::hap("rolla", 37.95, -91.77);
        assert!(visibility_windows(&spec, &node, 0.0, 3600.0, 10.0).unwrap().is_empty());
    }

    #[test]
    fn constant_predicate_gives_single_window() {
        let w = scan_windows(|_| 1.0, 5.0, 100.0, 7.0);
        assert_eq!(w, vec![(5.0, 100.0)]);
        assert!(scan_windows(|_| -1.0, 5.0, 100.0, 7.0).is_empty());
    }

    #[test]
    fn short_bump_between_samples_is_found() {
        // visible only for |t - 53| <= 1, well inside one 10 s step
        let w = scan_windows(|t: f64| 1.0 - (t - 53.0).abs(), 0.0, 200.0, 10.0);
        assert_eq!(w.len(), 1);
        assert!((w[0].0 - 52.0).abs() <= 1e-3);
        assert!((w[0].1 - 54.0).abs() <= 1e-3);
    }

    #[test]
    fn currently_visible_next_visit_is_now() {
        let c = BodyConstants::default();
        let spec = ConstellationSpec::new(c, vec![OrbitSpec::new(1.0e6, 0.0, 0.0, 1, 0.0)]).unwrap();
        let node = NodeSpec::ground_station("eq", 0.0, 0.0);
        assert_eq!(
            next_visit_time(&spec, SatelliteId::new(0, 0), &node, 0.0).unwrap(),
            Some(0.0)
        );
    }
}

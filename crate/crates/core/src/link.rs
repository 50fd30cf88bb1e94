//! RF link budget between any two points: line of sight, free-space path
//! loss, SNR, Shannon capacity and end-to-end transfer delay.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::orbital::{BodyConstants, EciPosition, NodeSpec};

/// Relative slack on the clearance radius so that an endpoint sitting exactly
/// on the sphere is not classified as blocked by rounding.
const LOS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// Prescribed data rate `fixed_rate`.
    #[default]
    Fixed,
    /// `B log2(1 + SNR)` from the current geometry.
    Shannon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub carrier_freq: f64,
    pub noise_temp: f64,
    pub bandwidth: f64,
    pub boltzmann: f64,
    pub rate_mode: RateMode,
    /// bits/s; used when `rate_mode` is `Fixed`.
    pub fixed_rate: f64,
    pub proc_delay_tx: f64,
    pub proc_delay_rx: f64,
    /// Grazing margin above the Earth's surface for line of sight, m.
    pub earth_clearance: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            tx_power_dbm: 40.0,
            tx_gain_dbi: 6.98,
            rx_gain_dbi: 6.98,
            carrier_freq: 2.4e9,
            noise_temp: 354.81,
            bandwidth: 1.0e6,
            boltzmann: 1.380649e-23,
            rate_mode: RateMode::Fixed,
            fixed_rate: 16.0e6,
            proc_delay_tx: 0.01,
            proc_delay_rx: 0.01,
            earth_clearance: 0.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq", self.carrier_freq),
            ("noise_temp", self.noise_temp),
            ("bandwidth", self.bandwidth),
            ("boltzmann", self.boltzmann),
            ("fixed_rate", self.fixed_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("link.{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("proc_delay_tx", self.proc_delay_tx),
            ("proc_delay_rx", self.proc_delay_rx),
            ("earth_clearance", self.earth_clearance),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("link.{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("tx_gain_dbi", self.tx_gain_dbi),
            ("rx_gain_dbi", self.rx_gain_dbi),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("link.{name} must be finite")));
            }
        }
        Ok(())
    }

    /// The same link seen from the other end: gains swap roles.
    pub fn reversed(&self) -> Self {
        Self {
            tx_gain_dbi: self.rx_gain_dbi,
            rx_gain_dbi: self.tx_gain_dbi,
            proc_delay_tx: self.proc_delay_rx,
            proc_delay_rx: self.proc_delay_tx,
            ..*self
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Power in watts for a level in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// True when the segment `[a, b]` stays at least `R_E + clearance` from the
/// Earth's centre. Endpoints below that shell (ground stations) only require
/// the segment not to dip below their own radius.
pub fn line_of_sight(
    a: EciPosition,
    b: EciPosition,
    constants: &BodyConstants,
    clearance: f64,
) -> Result<bool> {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return Err(invalid("line of sight between coincident points"));
    }
    let s = (-a.dot(ab) / len2).clamp(0.0, 1.0);
    let closest = (a + ab * s).norm();
    let limit = (constants.earth_radius + clearance).min(a.norm()).min(b.norm());
    Ok(closest >= limit * (1.0 - LOS_TOLERANCE))
}

/// Free-space path loss as a linear power ratio, `f64::INFINITY` when blocked.
pub fn free_space_path_loss(
    a: EciPosition,
    b: EciPosition,
    freq: f64,
    constants: &BodyConstants,
    clearance: f64,
) -> Result<f64> {
    let d = a.distance(b);
    if d == 0.0 {
        return Err(invalid("path loss over zero distance"));
    }
    if !line_of_sight(a, b, constants, clearance)? {
        return Ok(f64::INFINITY);
    }
    let x = 4.0 * PI * d * freq / constants.light_speed;
    Ok(x * x)
}

/// Linear SNR for a transmission from `a` to `b`; zero on a blocked link.
pub fn snr(
    params: &LinkParams,
    constants: &BodyConstants,
    a: EciPosition,
    b: EciPosition,
) -> Result<f64> {
    if !(params.bandwidth > 0.0) {
        return Err(invalid("bandwidth must be positive"));
    }
    let loss = free_space_path_loss(a, b, params.carrier_freq, constants, params.earth_clearance)?;
    if loss.is_infinite() {
        return Ok(0.0);
    }
    let signal = dbm_to_watts(params.tx_power_dbm)
        * db_to_linear(params.tx_gain_dbi)
        * db_to_linear(params.rx_gain_dbi);
    let noise = params.boltzmann * params.noise_temp * params.bandwidth;
    Ok(signal / (noise * loss))
}

pub fn shannon_rate(bandwidth: f64, snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(invalid(format!("snr must be non-negative, got {snr}")));
    }
    Ok(bandwidth * (1.0 + snr).log2())
}

/// Data rate used for a transfer from `a` to `b` under the configured mode.
pub fn link_rate(
    params: &LinkParams,
    constants: &BodyConstants,
    a: EciPosition,
    b: EciPosition,
) -> Result<f64> {
    match params.rate_mode {
        RateMode::Fixed => Ok(params.fixed_rate),
        RateMode::Shannon => shannon_rate(params.bandwidth, snr(params, constants, a, b)?),
    }
}

/// Total delay `t_t + t_p + t_x + t_y` to move `payload_bits` from `a` to
/// `b`, or `None` when there is no line of sight (or no capacity).
pub fn transfer_delay(
    params: &LinkParams,
    constants: &BodyConstants,
    a: EciPosition,
    b: EciPosition,
    payload_bits: f64,
) -> Result<Option<f64>> {
    if !(payload_bits > 0.0) {
        return Err(invalid("payload must be positive"));
    }
    if !line_of_sight(a, b, constants, params.earth_clearance)? {
        return Ok(None);
    }
    let rate = link_rate(params, constants, a, b)?;
    if !(rate > 0.0) {
        return Ok(None);
    }
    let transmission = payload_bits / rate;
    let propagation = a.distance(b) / constants.light_speed;
    Ok(Some(
        transmission + propagation + params.proc_delay_tx + params.proc_delay_rx,
    ))
}

/// Great-circle distance between two nodes on the reference sphere, m.
pub fn great_circle_distance(constants: &BodyConstants, a: &NodeSpec, b: &NodeSpec) -> f64 {
    let dlat = b.latitude - a.latitude;
    let dlon = b.longitude - a.longitude;
    let h = (dlat / 2.0).sin().powi(2)
        + a.latitude.cos() * b.latitude.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * constants.earth_radius * h.sqrt().clamp(0.0, 1.0).asin()
}

/// Delay over an inter-HAP backbone edge. The edge is always available and
/// always runs at `fixed_rate`, whatever the rate mode.
pub fn backbone_delay(
    params: &LinkParams,
    constants: &BodyConstants,
    a: &NodeSpec,
    b: &NodeSpec,
    payload_bits: f64,
) -> f64 {
    great_circle_distance(constants, a, b) / constants.light_speed + payload_bits / params.fixed_rate
}

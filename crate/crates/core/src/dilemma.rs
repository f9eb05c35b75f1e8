//! Closed-form dilemma-zone boundaries.
//!
//! A vehicle approaching the yield line at speed `v0` can clear the conflict
//! from anywhere closer than the pass distance and can stop comfortably from
//! anywhere farther than the stop distance. When the stop distance exceeds
//! the pass distance the band in between is the dilemma zone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metres per second in one mile per hour.
pub const MPH: f64 = 0.44704;

/// Speed band (m/s) used for approach-wide zone computations, 15 to 25 mph.
pub const APPROACH_SPEED_RANGE: (f64, f64) = (6.7, 11.2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DzParams {
    /// Driver perception-reaction time, seconds.
    pub reaction_time: f64,
    /// Safe acceleration used when clearing the conflict, m/s^2.
    pub a_acc: f64,
    /// Safe braking deceleration (positive magnitude), m/s^2.
    pub a_dec: f64,
    /// Width of the road to clear, metres.
    pub road_width: f64,
    /// Vehicle length, metres.
    pub vehicle_length: f64,
}

impl Default for DzParams {
    fn default() -> Self {
        Self {
            reaction_time: 1.0,
            a_acc: 4.0,
            a_dec: 3.05,
            road_width: 6.0,
            vehicle_length: 4.5,
        }
    }
}

impl DzParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("reaction_time", self.reaction_time),
            ("a_acc", self.a_acc),
            ("a_dec", self.a_dec),
            ("road_width", self.road_width),
            ("vehicle_length", self.vehicle_length),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("dz.{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Same parameters for a vehicle of a different length.
    pub fn with_vehicle_length(self, length: f64) -> Self {
        Self {
            vehicle_length: length,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZoneKind {
    Dilemma,
    Option,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneResult {
    pub s_pass: f64,
    pub s_stop: f64,
    pub kind: ZoneKind,
    /// `(min(s_pass, s_stop), max(s_pass, s_stop))`.
    pub interval: (f64, f64),
}

/// Largest distance from which the vehicle can still clear the conflict.
pub fn s_pass(params: &DzParams) -> f64 {
    let t = params.reaction_time;
    params.road_width + params.vehicle_length + 0.5 * params.a_acc * t * t
}

/// Shortest distance in which the vehicle can come to a stop.
pub fn s_stop(v0: f64, params: &DzParams) -> f64 {
    v0 * params.reaction_time + v0 * v0 / (2.0 * params.a_dec)
}

pub fn classify_zone(v0: f64, params: &DzParams) -> ZoneResult {
    let pass = s_pass(params);
    let stop = s_stop(v0, params);
    let kind = if stop > pass {
        ZoneKind::Dilemma
    } else {
        ZoneKind::Option
    };
    ZoneResult {
        s_pass: pass,
        s_stop: stop,
        kind,
        interval: (pass.min(stop), pass.max(stop)),
    }
}

/// True when `distance` to the yield line lies strictly inside the dilemma band.
pub fn in_dilemma_zone(distance: f64, v0: f64, params: &DzParams) -> bool {
    let zone = classify_zone(v0, params);
    zone.kind == ZoneKind::Dilemma && zone.s_pass < distance && distance < zone.s_stop
}

/// Speed used for approach-wide zone maps: the posted limit clamped to the
/// 15-25 mph band.
pub fn approach_speed(speed_limit_mph: f64) -> f64 {
    (speed_limit_mph * MPH).clamp(APPROACH_SPEED_RANGE.0, APPROACH_SPEED_RANGE.1)
}

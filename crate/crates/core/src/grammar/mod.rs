//! Shot-description language: a closed keyword=value grammar that compiles
//! to a validated [`ShotPlan`] of timed cinematic primitives.
//!
//! A plan is a semicolon-separated list of statements:
//!
//! ```text
//! target(0, 0, 1); blend(0.5s); orbit(radius=3, speed=15deg/s, dir=ccw) for 12s; hold for 2s
//! ```
//!
//! Statements:
//! - `target(x, y, z)` — subject position in world meters (required, once).
//! - `blend(d)` — C1 blend window at segment joins, seconds (optional, once;
//!   defaults to 0.5 s capped at half the shortest segment).
//! - `<primitive> for <duration>` — one flight segment.
//!
//! Primitives: `orbit(radius=, speed=, dir=, climb=)`,
//! `dolly(speed=, stop=)`, `pan_orbit(radius=, speed=, dir=, pan=)`,
//! `reveal(speed=, climb=)`, `hold`. Angular quantities accept `deg`/`rad`
//! suffixes (`deg/s`, `rad/s` for rates); the canonical unit is radians.
//! Unknown keys are errors: silent misconfiguration of flight parameters is
//! unsafe.

mod parse;

pub use parse::parse;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Default blend window applied when a plan does not specify one.
pub const DEFAULT_BLEND_SECONDS: f64 = 0.5;

/// Minimum orbit/pan-orbit standoff radius in meters.
pub const MIN_ORBIT_RADIUS: f64 = 0.5;

/// Minimum dolly stop distance in meters.
pub const MIN_STOP_DISTANCE: f64 = 0.5;

/// Orbit sense, viewed from above (+z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Cw,
    Ccw,
}

impl Direction {
    /// Sign of the angular rate: ccw is +1 (right-handed, z up).
    pub fn sign(self) -> f64 {
        match self {
            Direction::Ccw => 1.0,
            Direction::Cw => -1.0,
        }
    }
}

/// One cinematic maneuver. Angular speeds are rad/s, lengths meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Circle the target at fixed horizontal standoff, camera locked on it.
    Orbit {
        radius: f64,
        angular_speed: f64,
        direction: Direction,
        climb_rate: f64,
    },
    /// Fly straight at the target, stopping short of it.
    DollyToward { speed: f64, stop_distance: f64 },
    /// Orbit while easing the camera heading away from pure target lock.
    PanOrbit {
        radius: f64,
        angular_speed: f64,
        direction: Direction,
        pan_offset: f64,
    },
    /// Retreat and climb away from the target, heading held on it.
    Reveal { retreat_speed: f64, climb_rate: f64 },
    /// Stay put.
    Hold,
}

impl Primitive {
    /// Grammar keyword for this primitive.
    pub fn keyword(&self) -> &'static str {
        match self {
            Primitive::Orbit { .. } => "orbit",
            Primitive::DollyToward { .. } => "dolly",
            Primitive::PanOrbit { .. } => "pan_orbit",
            Primitive::Reveal { .. } => "reveal",
            Primitive::Hold => "hold",
        }
    }
}

/// A primitive with its run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub primitive: Primitive,
    /// Seconds, > 0.
    pub duration: f64,
}

/// A validated, timed sequence of cinematic primitives around one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    /// Subject position in world meters.
    pub target: [f64; 3],
    /// Blend window at segment joins, seconds; at most half the shortest
    /// segment duration.
    pub blend_duration: f64,
    pub segments: Vec<Segment>,
}

/// Parse or validation failure. Syntax errors carry the byte offset and the
/// expected tokens; validation errors name the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("syntax error at byte {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

impl PlanError {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        PlanError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

fn require_finite(field: &str, value: f64) -> Result<(), PlanError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(PlanError::validation(field, format!("must be finite, got {value}")))
    }
}

impl ShotPlan {
    /// Checks every type invariant; parse and JSON loading both go through
    /// this before handing a plan out.
    pub fn validate(&self) -> Result<(), PlanError> {
        for (axis, v) in ["x", "y", "z"].iter().zip(self.target) {
            require_finite(&format!("target.{axis}"), v)?;
        }
        if self.segments.is_empty() {
            return Err(PlanError::validation("segments", "plan has no segments"));
        }
        let mut shortest = f64::INFINITY;
        for (i, seg) in self.segments.iter().enumerate() {
            let name = format!("segments[{i}].duration");
            require_finite(&name, seg.duration)?;
            if seg.duration <= 0.0 {
                return Err(PlanError::validation(
                    &name,
                    format!("must be > 0 s, got {}", seg.duration),
                ));
            }
            shortest = shortest.min(seg.duration);
            seg.primitive.validate(i)?;
        }
        require_finite("blend_duration", self.blend_duration)?;
        if self.blend_duration < 0.0 {
            return Err(PlanError::validation(
                "blend_duration",
                format!("must be >= 0 s, got {}", self.blend_duration),
            ));
        }
        if self.blend_duration > shortest / 2.0 {
            return Err(PlanError::validation(
                "blend_duration",
                format!(
                    "must be at most half the shortest segment ({} s), got {} s",
                    shortest, self.blend_duration
                ),
            ));
        }
        Ok(())
    }

    /// Total plan duration in seconds.
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Canonical text form; [`parse`] of the result yields an identical plan.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let [tx, ty, tz] = self.target;
        write!(out, "target({tx}, {ty}, {tz}); blend({}s)", self.blend_duration).unwrap();
        for seg in &self.segments {
            out.push_str("; ");
            match &seg.primitive {
                Primitive::Orbit {
                    radius,
                    angular_speed,
                    direction,
                    climb_rate,
                } => {
                    write!(
                        out,
                        "orbit(radius={radius}, speed={angular_speed}rad/s, dir={}, climb={climb_rate})",
                        dir_str(*direction)
                    )
                    .unwrap();
                }
                Primitive::DollyToward {
                    speed,
                    stop_distance,
                } => {
                    write!(out, "dolly(speed={speed}, stop={stop_distance})").unwrap();
                }
                Primitive::PanOrbit {
                    radius,
                    angular_speed,
                    direction,
                    pan_offset,
                } => {
                    write!(
                        out,
                        "pan_orbit(radius={radius}, speed={angular_speed}rad/s, dir={}, pan={pan_offset}rad)",
                        dir_str(*direction)
                    )
                    .unwrap();
                }
                Primitive::Reveal {
                    retreat_speed,
                    climb_rate,
                } => {
                    write!(out, "reveal(speed={retreat_speed}, climb={climb_rate})").unwrap();
                }
                Primitive::Hold => out.push_str("hold"),
            }
            write!(out, " for {}s", seg.duration).unwrap();
        }
        out
    }

    /// Serializes to the `plan.json` document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Loads and validates a plan from its JSON document.
    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let plan: ShotPlan = serde_json::from_str(text)
            .map_err(|e| PlanError::validation("plan.json", e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

fn dir_str(d: Direction) -> &'static str {
    match d {
        Direction::Cw => "cw",
        Direction::Ccw => "ccw",
    }
}

impl Primitive {
    fn validate(&self, index: usize) -> Result<(), PlanError> {
        let field = |key: &str| format!("segments[{index}].{}.{key}", self.keyword());
        match self {
            Primitive::Orbit {
                radius,
                angular_speed,
                climb_rate,
                ..
            } => {
                check_radius(&field("radius"), *radius)?;
                check_angular_speed(&field("speed"), *angular_speed)?;
                require_finite(&field("climb"), *climb_rate)?;
            }
            Primitive::DollyToward {
                speed,
                stop_distance,
            } => {
                require_finite(&field("speed"), *speed)?;
                if *speed <= 0.0 {
                    return Err(PlanError::validation(
                        &field("speed"),
                        format!("must be > 0 m/s, got {speed}"),
                    ));
                }
                require_finite(&field("stop"), *stop_distance)?;
                if *stop_distance < MIN_STOP_DISTANCE {
                    return Err(PlanError::validation(
                        &field("stop"),
                        format!("must be >= {MIN_STOP_DISTANCE} m, got {stop_distance}"),
                    ));
                }
            }
            Primitive::PanOrbit {
                radius,
                angular_speed,
                pan_offset,
                ..
            } => {
                check_radius(&field("radius"), *radius)?;
                check_angular_speed(&field("speed"), *angular_speed)?;
                require_finite(&field("pan"), *pan_offset)?;
                if pan_offset.abs() > PI {
                    return Err(PlanError::validation(
                        &field("pan"),
                        format!("|pan| must be <= pi rad, got {pan_offset}"),
                    ));
                }
            }
            Primitive::Reveal {
                retreat_speed,
                climb_rate,
            } => {
                require_finite(&field("speed"), *retreat_speed)?;
                if *retreat_speed <= 0.0 {
                    return Err(PlanError::validation(
                        &field("speed"),
                        format!("must be > 0 m/s, got {retreat_speed}"),
                    ));
                }
                require_finite(&field("climb"), *climb_rate)?;
                if *climb_rate < 0.0 {
                    return Err(PlanError::validation(
                        &field("climb"),
                        format!("must be >= 0 m/s, got {climb_rate}"),
                    ));
                }
            }
            Primitive::Hold => {}
        }
        Ok(())
    }
}

fn check_radius(field: &str, radius: f64) -> Result<(), PlanError> {
    require_finite(field, radius)?;
    if radius < MIN_ORBIT_RADIUS {
        return Err(PlanError::validation(
            field,
            format!("must be >= {MIN_ORBIT_RADIUS} m (minimum safe standoff), got {radius}"),
        ));
    }
    Ok(())
}

fn check_angular_speed(field: &str, speed: f64) -> Result<(), PlanError> {
    require_finite(field, speed)?;
    if speed <= 0.0 {
        return Err(PlanError::validation(
            field,
            format!("must be > 0 rad/s, got {speed}"),
        ));
    }
    Ok(())
}

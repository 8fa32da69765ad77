//! Trajectory synthesis: compiles a [`ShotPlan`] into a uniformly sampled,
//! C1-blended pose sequence with derived speeds, plus the `traj.csv`
//! interchange format used by every downstream stage.
//!
//! Conventions: world frame is right-handed with z up; yaw is the heading
//! about +z, zero along +x, positive counterclockwise, stored in (-pi, pi].

use crate::angles::{angle_diff, lerp_angle, look_at_yaw, smoothstep, wrap_angle};
use crate::grammar::{PlanError, Primitive, ShotPlan};
use crate::io::format_sig;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Supported sample periods for reference synthesis, seconds.
pub const SYNTH_DT_RANGE: (f64, f64) = (0.01, 0.5);

/// Supported sample periods for resampling, seconds.
pub const RESAMPLE_DT_RANGE: (f64, f64) = (0.001, 0.5);

/// A timed pose on the reference grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Seconds from trajectory start.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Heading in (-pi, pi].
    pub yaw: f64,
}

impl Pose {
    pub fn new(t: f64, x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Pose {
            t,
            x,
            y,
            z,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.yaw.is_finite()
    }
}

/// Uniformly sampled pose sequence with derived scalar speeds.
///
/// Speeds are positional, from central differences with one-sided stencils at
/// the endpoints; they are always recomputed from the samples, including when
/// a trajectory is read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    samples: Vec<Pose>,
    speeds: Vec<f64>,
}

/// Per-step state (pose + speed) and the finite-difference command linking it
/// to the next state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateAction {
    pub pose: Pose,
    /// Scalar positional speed at this sample, m/s.
    pub speed: f64,
    /// Commanded velocity over the step, m/s (forward difference).
    pub velocity: Vector3<f64>,
    /// Commanded yaw rate over the step, rad/s (wrapped forward difference).
    pub yaw_rate: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajError {
    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),
    #[error("trajectory too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    InvalidPlan(#[from] PlanError),
}

/// `traj.csv` read failures, with 1-based line numbers for row errors.
#[derive(Debug, thiserror::Error)]
pub enum TrajCsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: expected columns starting with t,x,y,z,yaw,v, got {found}")]
    Header { found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl Trajectory {
    /// Builds a trajectory from samples, wrapping yaw and checking the
    /// uniform-spacing invariant (tolerance 1e-6 s, covering CSV rounding).
    pub fn from_samples(dt: f64, samples: Vec<Pose>) -> Result<Self, TrajError> {
        if samples.is_empty() {
            return Err(TrajError::TooShort { need: 1, got: 0 });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TrajError::BadInput(format!("dt must be > 0, got {dt}")));
        }
        let mut samples = samples;
        for (i, pose) in samples.iter_mut().enumerate() {
            if !pose.is_finite() {
                return Err(TrajError::BadInput(format!("sample {i} is not finite")));
            }
            pose.yaw = wrap_angle(pose.yaw);
        }
        for i in 1..samples.len() {
            let spacing = samples[i].t - samples[i - 1].t;
            if spacing <= 0.0 || (spacing - dt).abs() > 1e-6 {
                return Err(TrajError::BadInput(format!(
                    "timestamps not uniform at index {i}: spacing {spacing}, expected {dt}"
                )));
            }
        }
        let speeds = derive_speeds(&samples, dt);
        Ok(Trajectory {
            dt,
            samples,
            speeds,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[Pose] {
        &self.samples
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Linear position / shortest-arc yaw interpolation at time `t`, clamped
    /// to the trajectory's time range.
    pub fn sample_at(&self, t: f64) -> Pose {
        let first = self.samples[0];
        let last = self.samples[self.samples.len() - 1];
        if t <= first.t || self.samples.len() == 1 {
            return Pose { t, ..first };
        }
        if t >= last.t {
            return Pose { t, ..last };
        }
        let raw = (t - first.t) / self.dt;
        let i = (raw.floor() as usize).min(self.samples.len() - 2);
        let frac = ((t - self.samples[i].t) / self.dt).clamp(0.0, 1.0);
        let a = self.samples[i];
        let b = self.samples[i + 1];
        Pose {
            t,
            x: a.x + frac * (b.x - a.x),
            y: a.y + frac * (b.y - a.y),
            z: a.z + frac * (b.z - a.z),
            yaw: lerp_angle(a.yaw, b.yaw, frac),
        }
    }

    /// Resamples onto a new uniform grid over the same span. Grid points that
    /// land on an original sample are copied exactly, so resampling to the
    /// same `dt` is the identity and both endpoints are preserved.
    pub fn resample(&self, new_dt: f64) -> Result<Trajectory, TrajError> {
        if !(new_dt >= RESAMPLE_DT_RANGE.0 && new_dt <= RESAMPLE_DT_RANGE.1) {
            return Err(TrajError::BadInput(format!(
                "resample dt {new_dt} outside [{}, {}]",
                RESAMPLE_DT_RANGE.0, RESAMPLE_DT_RANGE.1
            )));
        }
        if self.samples.len() < 2 {
            return Err(TrajError::TooShort {
                need: 2,
                got: self.samples.len(),
            });
        }
        let t0 = self.start_time();
        let span = self.end_time() - t0;
        let steps = (span / new_dt + 1e-9).floor() as usize;
        let mut samples = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let t = t0 + j as f64 * new_dt;
            let raw = (t - t0) / self.dt;
            let mut i = raw.floor() as usize;
            let mut frac = raw - i as f64;
            if frac > 1.0 - 1e-9 && i + 1 < self.samples.len() {
                i += 1;
                frac = 0.0;
            }
            let i = i.min(self.samples.len() - 1);
            if frac < 1e-9 || i + 1 >= self.samples.len() {
                samples.push(Pose {
                    t,
                    ..self.samples[i]
                });
            } else {
                let a = self.samples[i];
                let b = self.samples[i + 1];
                samples.push(Pose {
                    t,
                    x: a.x + frac * (b.x - a.x),
                    y: a.y + frac * (b.y - a.y),
                    z: a.z + frac * (b.z - a.z),
                    yaw: lerp_angle(a.yaw, b.yaw, frac),
                });
            }
        }
        Trajectory::from_samples(new_dt, samples)
    }

    /// Writes the `traj.csv` format: header `t,x,y,z,yaw,v`, one row per
    /// sample, 9 significant digits, LF line endings.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TrajCsvError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t", "x", "y", "z", "yaw", "v"])
            .map_err(csv_io)?;
        for (pose, v) in self.samples.iter().zip(&self.speeds) {
            out.write_record([
                format_sig(pose.t, 9),
                format_sig(pose.x, 9),
                format_sig(pose.y, 9),
                format_sig(pose.z, 9),
                format_sig(pose.yaw, 9),
                format_sig(*v, 9),
            ])
            .map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads the `traj.csv` format. Extra columns after the canonical six
    /// (e.g. the estimator's `status` column) are ignored.
    pub fn read_csv<R: Read>(reader: R) -> Result<Trajectory, TrajCsvError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_row_error)?.clone();
        let expected = ["t", "x", "y", "z", "yaw", "v"];
        let got: Vec<&str> = headers.iter().take(6).collect();
        if got != expected {
            return Err(TrajCsvError::Header {
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_row_error)?;
            let line = record
                .position()
                .map(|p| p.line())
                .unwrap_or(samples.len() as u64 + 2);
            if record.len() < 6 {
                return Err(TrajCsvError::Row {
                    line,
                    message: format!("expected at least 6 fields, got {}", record.len()),
                });
            }
            let mut fields = [0.0f64; 6];
            for (slot, (name, raw)) in fields
                .iter_mut()
                .zip(expected.iter().zip(record.iter()))
            {
                *slot = raw.trim().parse::<f64>().map_err(|_| TrajCsvError::Row {
                    line,
                    message: format!("field `{name}`: cannot parse {raw:?} as a number"),
                })?;
            }
            samples.push(Pose::new(fields[0], fields[1], fields[2], fields[3], fields[4]));
        }
        if samples.len() < 2 {
            return Err(TrajCsvError::Invalid(format!(
                "need at least 2 rows, got {}",
                samples.len()
            )));
        }
        let dt = samples[1].t - samples[0].t;
        Trajectory::from_samples(dt, samples).map_err(|e| TrajCsvError::Invalid(e.to_string()))
    }
}

fn csv_io(err: csv::Error) -> TrajCsvError {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => TrajCsvError::Io(io),
        other => TrajCsvError::Invalid(format!("csv error: {other:?}")),
    }
}

fn csv_row_error(err: csv::Error) -> TrajCsvError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(io) => TrajCsvError::Io(io),
        other => TrajCsvError::Row {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn derive_speeds(samples: &[Pose], dt: f64) -> Vec<f64> {
    let n = samples.len();
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (samples[1].position() - samples[0].position()).norm() / dt
            } else if i == n - 1 {
                (samples[n - 1].position() - samples[n - 2].position()).norm() / dt
            } else {
                (samples[i + 1].position() - samples[i - 1].position()).norm() / (2.0 * dt)
            }
        })
        .collect()
}

/// Compiles a plan into a trajectory sampled every `dt` seconds from t = 0.
///
/// Each segment's curve is seeded from the pose where the previous segment
/// ends (`start` for the first). Joins are blended over the plan's blend
/// window with a cosine ramp, which keeps velocity continuous.
pub fn synthesize(plan: &ShotPlan, start: &Pose, dt: f64) -> Result<Trajectory, TrajError> {
    if !(dt >= SYNTH_DT_RANGE.0 && dt <= SYNTH_DT_RANGE.1) {
        return Err(TrajError::BadInput(format!(
            "dt {dt} outside [{}, {}]",
            SYNTH_DT_RANGE.0, SYNTH_DT_RANGE.1
        )));
    }
    if !start.is_finite() {
        return Err(TrajError::BadInput("start pose is not finite".to_string()));
    }
    plan.validate()?;

    let program = SegmentProgram::compile(plan, start)?;
    let total = plan.total_duration();
    let steps = (total / dt + 1e-9).floor() as usize;
    let samples = (0..=steps)
        .map(|i| {
            let t = i as f64 * dt;
            let (p, yaw) = program.eval(t);
            Pose::new(t, p.x, p.y, p.z, yaw)
        })
        .collect();
    Trajectory::from_samples(dt, samples)
}

/// Extracts per-step state-action pairs; actions are forward differences, so
/// integrating an action over `dt` from its state reproduces the next state.
pub fn state_action_pairs(traj: &Trajectory) -> Result<Vec<StateAction>, TrajError> {
    let n = traj.len();
    if n < 2 {
        return Err(TrajError::TooShort { need: 2, got: n });
    }
    let dt = traj.dt();
    Ok((0..n - 1)
        .map(|i| {
            let a = traj.samples[i];
            let b = traj.samples[i + 1];
            StateAction {
                pose: a,
                speed: traj.speeds[i],
                velocity: (b.position() - a.position()) / dt,
                yaw_rate: angle_diff(b.yaw, a.yaw) / dt,
            }
        })
        .collect())
}

/// One plan segment compiled to an evaluable curve with its start time.
struct CompiledSegment {
    start_time: f64,
    duration: f64,
    curve: Curve,
}

struct SegmentProgram {
    segments: Vec<CompiledSegment>,
    blend: f64,
    total: f64,
}

impl SegmentProgram {
    fn compile(plan: &ShotPlan, start: &Pose) -> Result<Self, TrajError> {
        let target = Vector3::new(plan.target[0], plan.target[1], plan.target[2]);
        let mut segments = Vec::with_capacity(plan.segments.len());
        let mut cursor_pos = start.position();
        let mut cursor_yaw = wrap_angle(start.yaw);
        let mut start_time = 0.0;
        for (i, seg) in plan.segments.iter().enumerate() {
            let curve =
                Curve::build(&seg.primitive, cursor_pos, cursor_yaw, target, seg.duration, i)?;
            let (end_pos, end_yaw) = curve.eval(seg.duration);
            segments.push(CompiledSegment {
                start_time,
                duration: seg.duration,
                curve,
            });
            cursor_pos = end_pos;
            cursor_yaw = end_yaw;
            start_time += seg.duration;
        }
        Ok(SegmentProgram {
            segments,
            blend: plan.blend_duration,
            total: start_time,
        })
    }

    fn segment_index(&self, t: f64) -> usize {
        let mut k = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if t < seg.start_time + seg.duration {
                k = i;
                break;
            }
        }
        k
    }

    fn eval(&self, t: f64) -> (Vector3<f64>, f64) {
        let t = t.clamp(0.0, self.total);
        let k = self.segment_index(t);
        let seg = &self.segments[k];
        let half = self.blend / 2.0;
        if self.blend > 0.0 {
            // Join with the previous segment: window straddles seg.start_time.
            if k > 0 && t < seg.start_time + half {
                return self.blend_pair(k - 1, k, t);
            }
            // Join with the next segment.
            let end = seg.start_time + seg.duration;
            if k + 1 < self.segments.len() && t > end - half {
                return self.blend_pair(k, k + 1, t);
            }
        }
        seg.curve.eval(t - seg.start_time)
    }

    fn blend_pair(&self, a: usize, b: usize, t: f64) -> (Vector3<f64>, f64) {
        let prev = &self.segments[a];
        let next = &self.segments[b];
        let join = next.start_time;
        let s = ((t - (join - self.blend / 2.0)) / self.blend).clamp(0.0, 1.0);
        let w = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
        let (p1, y1) = prev.curve.eval(t - prev.start_time);
        let (p2, y2) = next.curve.eval(t - next.start_time);
        (p1 + w * (p2 - p1), lerp_angle(y1, y2, w))
    }
}

/// Closed-form position/yaw as a function of segment-local time. Curves
/// extrapolate smoothly outside [0, duration] so blend windows can evaluate
/// both sides of a join.
enum Curve {
    Orbit {
        target: Vector3<f64>,
        radius: f64,
        /// Signed angular rate, ccw positive.
        rate: f64,
        climb: f64,
        theta0: f64,
        z0: f64,
    },
    Dolly {
        start: Vector3<f64>,
        dir: Vector3<f64>,
        speed: f64,
        max_travel: f64,
        target: Vector3<f64>,
        yaw_fallback: f64,
    },
    PanOrbit {
        target: Vector3<f64>,
        radius: f64,
        rate: f64,
        theta0: f64,
        z0: f64,
        pan_offset: f64,
        duration: f64,
    },
    Reveal {
        start: Vector3<f64>,
        bearing: f64,
        speed: f64,
        climb: f64,
        target: Vector3<f64>,
    },
    Hold { pose: Vector3<f64>, yaw: f64 },
}

impl Curve {
    fn build(
        primitive: &Primitive,
        pos: Vector3<f64>,
        yaw: f64,
        target: Vector3<f64>,
        duration: f64,
        index: usize,
    ) -> Result<Curve, TrajError> {
        let bearing_from_target = || {
            let dx = pos.x - target.x;
            let dy = pos.y - target.y;
            if dx.hypot(dy) < 1e-12 {
                log::warn!(
                    "segment {index}: start pose is at the target's horizontal position; \
                     using phase angle 0"
                );
                0.0
            } else {
                dy.atan2(dx)
            }
        };
        Ok(match *primitive {
            Primitive::Orbit {
                radius,
                angular_speed,
                direction,
                climb_rate,
            } => Curve::Orbit {
                target,
                radius,
                rate: direction.sign() * angular_speed,
                climb: climb_rate,
                theta0: bearing_from_target(),
                z0: pos.z,
            },
            Primitive::DollyToward {
                speed,
                stop_distance,
            } => {
                let offset = target - pos;
                let dist = offset.norm();
                if dist < stop_distance {
                    return Err(TrajError::InfeasiblePlan(format!(
                        "segment {index}: dolly starts {dist:.3} m from the target, \
                         inside its stop distance {stop_distance} m"
                    )));
                }
                Curve::Dolly {
                    start: pos,
                    dir: offset / dist,
                    speed,
                    max_travel: dist - stop_distance,
                    target,
                    yaw_fallback: yaw,
                }
            }
            Primitive::PanOrbit {
                radius,
                angular_speed,
                direction,
                pan_offset,
            } => Curve::PanOrbit {
                target,
                radius,
                rate: direction.sign() * angular_speed,
                theta0: bearing_from_target(),
                z0: pos.z,
                pan_offset,
                duration,
            },
            Primitive::Reveal {
                retreat_speed,
                climb_rate,
            } => Curve::Reveal {
                start: pos,
                bearing: bearing_from_target(),
                speed: retreat_speed,
                climb: climb_rate,
                target,
            },
            Primitive::Hold => Curve::Hold { pose: pos, yaw },
        })
    }

    fn eval(&self, u: f64) -> (Vector3<f64>, f64) {
        match *self {
            Curve::Orbit {
                target,
                radius,
                rate,
                climb,
                theta0,
                z0,
            } => {
                let theta = theta0 + rate * u;
                let p = Vector3::new(
                    target.x + radius * theta.cos(),
                    target.y + radius * theta.sin(),
                    z0 + climb * u,
                );
                let yaw = look_at_yaw(p.x, p.y, target.x, target.y);
                (p, yaw)
            }
            Curve::Dolly {
                start,
                dir,
                speed,
                max_travel,
                target,
                yaw_fallback,
            } => {
                let travel = (speed * u).min(max_travel);
                let p = start + travel * dir;
                let dx = target.x - p.x;
                let dy = target.y - p.y;
                let yaw = if dx.hypot(dy) < 1e-12 {
                    yaw_fallback
                } else {
                    dy.atan2(dx)
                };
                (p, yaw)
            }
            Curve::PanOrbit {
                target,
                radius,
                rate,
                theta0,
                z0,
                pan_offset,
                duration,
            } => {
                let theta = theta0 + rate * u;
                let p = Vector3::new(
                    target.x + radius * theta.cos(),
                    target.y + radius * theta.sin(),
                    z0,
                );
                let ramp = if duration > 0.0 {
                    smoothstep(u / duration)
                } else {
                    1.0
                };
                let yaw = look_at_yaw(p.x, p.y, target.x, target.y) + pan_offset * ramp;
                (p, wrap_angle(yaw))
            }
            Curve::Reveal {
                start,
                bearing,
                speed,
                climb,
                target,
            } => {
                let p = Vector3::new(
                    start.x + speed * u * bearing.cos(),
                    start.y + speed * u * bearing.sin(),
                    start.z + climb * u,
                );
                let yaw = look_at_yaw(p.x, p.y, target.x, target.y);
                (p, yaw)
            }
            Curve::Hold { pose, yaw } => (pose, yaw),
        }
    }
}

#[cfg(test)]
mod tests;

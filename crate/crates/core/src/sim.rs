//! Closed-loop flight simulation: a per-axis double-integrator UAV with
//! acceleration and velocity clamps tracks the reference trajectory under
//! per-channel PID control (x, y, z acceleration commands, yaw rate
//! command). The estimated state feeding the controller is the true state
//! plus seeded Gaussian noise, standing in for an onboard estimator.

use crate::angles::{angle_diff, wrap_angle};
use crate::io::format_sig;
use crate::traj::{Pose, Trajectory};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("diverged at t={t:.2}: position error {error:.2} m exceeds abort radius {abort:.2} m")]
    Diverged { t: f64, error: f64, abort: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One control channel's gains and conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Clamp on the accumulated integral (anti-windup).
    pub i_max: f64,
    /// Low-pass coefficient for the derivative term, in [0, 1).
    pub alpha: f64,
}

impl PidGains {
    pub fn validate(&self, channel: &str) -> Result<(), SimError> {
        let ok = self.kp >= 0.0
            && self.ki >= 0.0
            && self.kd >= 0.0
            && self.i_max > 0.0
            && (0.0..1.0).contains(&self.alpha)
            && [self.kp, self.ki, self.kd, self.i_max].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::BadInput(format!("invalid gains for {channel}: {self:?}")))
        }
    }
}

/// Discrete PID accumulator: trapezoidal integral, previous error for the
/// backward difference, and the filtered derivative estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
    pub filtered_derivative: f64,
}

/// One discrete PID update.
///
/// `u = kp*e + ki*clamp(I, ±i_max) + kd*d̂` where the integral accumulates
/// trapezoidally (the first step counts a full `dt*e`) and `d̂` is the
/// alpha-low-pass-filtered backward difference of the error. Total and
/// deterministic.
pub fn pid_step(gains: &PidGains, error: f64, state: &PidState, dt: f64) -> (f64, PidState) {
    let prev = state.prev_error.unwrap_or(error);
    let integral = (state.integral + dt * (error + prev) / 2.0).clamp(-gains.i_max, gains.i_max);
    let raw_derivative = (error - prev) / dt;
    let filtered = gains.alpha * state.filtered_derivative + (1.0 - gains.alpha) * raw_derivative;
    let u = gains.kp * error + gains.ki * integral + gains.kd * filtered;
    (
        u,
        PidState {
            integral,
            prev_error: Some(error),
            filtered_derivative: filtered,
        },
    )
}

/// Gains for the three position channels and the yaw-rate channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub x: PidGains,
    pub y: PidGains,
    pub z: PidGains,
    pub yaw: PidGains,
}

impl GainSet {
    pub fn validate(&self) -> Result<(), SimError> {
        self.x.validate("x")?;
        self.y.validate("y")?;
        self.z.validate("z")?;
        self.yaw.validate("yaw")
    }
}

/// Per-axis double integrator with clamps, plus a rate-commanded yaw channel
/// and a constant-wind + Gaussian-acceleration disturbance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavModel {
    /// Acceleration command clamp per axis, m/s^2.
    pub a_max: f64,
    /// Velocity clamp per axis, m/s.
    pub v_max: f64,
    /// Yaw rate clamp, rad/s.
    pub omega_max: f64,
    /// Control/integration period, seconds.
    pub dt_sim: f64,
    /// Constant wind acceleration, m/s^2.
    pub wind: [f64; 3],
    /// Std of zero-mean Gaussian acceleration disturbance, m/s^2.
    pub accel_noise_sigma: f64,
    /// Position error that aborts the run, m.
    pub abort_radius: f64,
}

impl Default for UavModel {
    fn default() -> Self {
        UavModel {
            a_max: 4.0,
            v_max: 5.0,
            omega_max: std::f64::consts::PI,
            dt_sim: 0.01,
            wind: [0.0, 0.0, 0.0],
            accel_noise_sigma: 0.0,
            abort_radius: 50.0,
        }
    }
}

impl UavModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.a_max > 0.0
            && self.v_max > 0.0
            && self.omega_max > 0.0
            && self.dt_sim > 0.0
            && self.abort_radius > 0.0
            && self.accel_noise_sigma >= 0.0
            && self.wind.iter().all(|w| w.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::BadInput(format!("invalid UAV model: {self:?}")))
        }
    }
}

/// The repository's documented default gains for the default model.
///
/// Position channels: stiff PD with a small integral for steady disturbance
/// rejection. Yaw: proportional rate command. Validated by the step-response
/// and closed-loop tracking bounds in the test suite.
pub fn tune_default_gains(model: &UavModel) -> GainSet {
    let _ = model;
    let position = PidGains {
        kp: 9.0,
        ki: 0.4,
        kd: 6.0,
        i_max: 0.5,
        alpha: 0.9,
    };
    let yaw = PidGains {
        kp: 6.0,
        ki: 0.5,
        kd: 0.0,
        i_max: 1.0,
        alpha: 0.0,
    };
    GainSet {
        x: position,
        y: position,
        z: position,
        yaw,
    }
}

/// Channel values in fixed order x, y, z, yaw.
pub type Channels = [f64; 4];

/// One control step of the loop: everything the controller saw and did, plus
/// the true state it acted on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlStep {
    pub t: f64,
    pub desired: Channels,
    pub estimated: Channels,
    pub error: Channels,
    pub control: Channels,
    pub true_state: Channels,
}

/// Full closed-loop record (`control_log.csv`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlLog {
    pub steps: Vec<ControlStep>,
}

impl ControlLog {
    /// Columns: t, desired, estimated, error, and control per channel, then
    /// the true state.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), SimError> {
        writeln!(
            writer,
            "t,des_x,des_y,des_z,des_yaw,est_x,est_y,est_z,est_yaw,\
             err_x,err_y,err_z,err_yaw,u_x,u_y,u_z,u_yaw,true_x,true_y,true_z,true_yaw"
        )?;
        for s in &self.steps {
            let mut row = vec![format_sig(s.t, 9)];
            for group in [&s.desired, &s.estimated, &s.error, &s.control, &s.true_state] {
                for v in group.iter() {
                    row.push(format_sig(*v, 9));
                }
            }
            writeln!(writer, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Runs the PID loop at `1/dt_sim` Hz against setpoints interpolated from
/// the reference, integrating the double-integrator plant. The executed
/// trajectory is sampled back onto the reference grid.
///
/// The UAV starts at `start` (default: the first reference pose) with zero
/// velocity. The estimated state the controller sees is the true state plus
/// seeded Gaussian noise of `estimator_noise_sigma` on each channel.
pub fn simulate_tracking(
    reference: &Trajectory,
    gains: &GainSet,
    model: &UavModel,
    start: Option<&Pose>,
    estimator_noise_sigma: f64,
    seed: u64,
) -> Result<(Trajectory, ControlLog), SimError> {
    gains.validate()?;
    model.validate()?;
    if reference.is_empty() {
        return Err(SimError::BadInput("reference trajectory is empty".into()));
    }
    if model.dt_sim > reference.dt() + 1e-12 {
        return Err(SimError::BadInput(format!(
            "dt_sim {} must not exceed the reference dt {}",
            model.dt_sim,
            reference.dt()
        )));
    }
    if !(estimator_noise_sigma.is_finite() && estimator_noise_sigma >= 0.0) {
        return Err(SimError::BadInput(format!(
            "estimator noise sigma must be >= 0, got {estimator_noise_sigma}"
        )));
    }

    let dt = model.dt_sim;
    let t0 = reference.start_time();
    let span = reference.end_time() - t0;
    let steps = (span / dt + 1e-9).floor() as usize;

    let mut est_rng = ChaCha8Rng::seed_from_u64(seed);
    est_rng.set_stream(0);
    let mut acc_rng = ChaCha8Rng::seed_from_u64(seed);
    acc_rng.set_stream(1);
    let est_noise = normal(estimator_noise_sigma)?;
    let acc_noise = normal(model.accel_noise_sigma)?;
    let wind = Vector3::new(model.wind[0], model.wind[1], model.wind[2]);

    let start_pose = match start {
        Some(p) => *p,
        None => reference.samples()[0],
    };
    let mut position = start_pose.position();
    let mut velocity = Vector3::zeros();
    let mut yaw = wrap_angle(start_pose.yaw);

    let mut pid = [PidState::default(); 4];
    let mut log = ControlLog::default();
    let mut dense: Vec<Pose> = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        let setpoint = reference.sample_at(t);
        let desired = [setpoint.x, setpoint.y, setpoint.z, setpoint.yaw];

        let estimated = [
            position.x + draw(&mut est_rng, &est_noise),
            position.y + draw(&mut est_rng, &est_noise),
            position.z + draw(&mut est_rng, &est_noise),
            wrap_angle(yaw + draw(&mut est_rng, &est_noise)),
        ];
        let error = [
            desired[0] - estimated[0],
            desired[1] - estimated[1],
            desired[2] - estimated[2],
            angle_diff(desired[3], estimated[3]),
        ];

        let mut control = [0.0; 4];
        let channel_gains = [&gains.x, &gains.y, &gains.z, &gains.yaw];
        for c in 0..4 {
            let (u, next) = pid_step(channel_gains[c], error[c], &pid[c], dt);
            pid[c] = next;
            control[c] = if c < 3 {
                u.clamp(-model.a_max, model.a_max)
            } else {
                u.clamp(-model.omega_max, model.omega_max)
            };
        }

        log.steps.push(ControlStep {
            t,
            desired,
            estimated,
            error,
            control,
            true_state: [position.x, position.y, position.z, yaw],
        });
        dense.push(Pose::new(t, position.x, position.y, position.z, yaw));

        let disturbance = Vector3::new(
            draw(&mut acc_rng, &acc_noise),
            draw(&mut acc_rng, &acc_noise),
            draw(&mut acc_rng, &acc_noise),
        );
        let accel = Vector3::new(control[0], control[1], control[2]) + wind + disturbance;
        velocity += accel * dt;
        for a in 0..3 {
            velocity[a] = velocity[a].clamp(-model.v_max, model.v_max);
        }
        position += velocity * dt;
        yaw = wrap_angle(yaw + control[3] * dt);

        let deviation = (position - setpoint.position()).norm();
        if deviation > model.abort_radius {
            return Err(SimError::Diverged {
                t,
                error: deviation,
                abort: model.abort_radius,
            });
        }
    }

    let dense_traj = Trajectory::from_samples(dt, dense)
        .map_err(|e| SimError::BadInput(format!("internal sampling error: {e}")))?;
    let executed = sample_onto(&dense_traj, reference);
    Ok((executed, log))
}

fn normal(sigma: f64) -> Result<Option<Normal<f64>>, SimError> {
    if sigma > 0.0 {
        Ok(Some(
            Normal::new(0.0, sigma).map_err(|e| SimError::BadInput(e.to_string()))?,
        ))
    } else {
        Ok(None)
    }
}

fn draw(rng: &mut ChaCha8Rng, dist: &Option<Normal<f64>>) -> f64 {
    match dist {
        Some(d) => d.sample(rng),
        None => 0.0,
    }
}

/// Samples the dense simulated states onto the reference grid; grid hits are
/// copied exactly.
fn sample_onto(dense: &Trajectory, reference: &Trajectory) -> Trajectory {
    let samples: Vec<Pose> = reference
        .samples()
        .iter()
        .map(|r| {
            let p = dense.sample_at(r.t);
            Pose::new(r.t, p.x, p.y, p.z, p.yaw)
        })
        .collect();
    Trajectory::from_samples(reference.dt(), samples).expect("reference grid is uniform")
}

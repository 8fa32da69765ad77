//! Synthetic scene rendering: projects a landmark field through a pinhole
//! camera riding the ground-truth trajectory, producing per-frame 2D feature
//! tracks with landmark identities (`observations.jsonl`) instead of pixels.
//!
//! Frames: the world is right-handed z-up; the camera is x right, y down,
//! z forward. The optical axis points along the UAV heading, tilted down by
//! `mount_pitch`. Data association is perfect by construction, which isolates
//! the geometric estimation problem from feature matching.

use crate::traj::Trajectory;
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};

/// Landmarks closer than this along the optical axis are not observed.
pub const MIN_DEPTH: f64 = 0.1;

/// Two-view initialization needs at least this many correspondences; scenes
/// and frames below it are degenerate.
pub const MIN_LANDMARKS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Pinhole intrinsics plus the fixed gimbal tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Downward gimbal tilt in radians; 0 is a level camera.
    pub mount_pitch: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            mount_pitch: 0.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(RenderError::BadParams(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::BadParams("image must be non-empty".into()));
        }
        let inside = self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if !inside {
            return Err(RenderError::BadParams(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if !self.mount_pitch.is_finite() {
            return Err(RenderError::BadParams("mount_pitch must be finite".into()));
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<(f64, f64)> {
        if p_cam.z <= MIN_DEPTH {
            return None;
        }
        Some((
            self.fx * (p_cam.x / p_cam.z) + self.cx,
            self.fy * (p_cam.y / p_cam.z) + self.cy,
        ))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64
    }

    /// Normalized image coordinates for a pixel.
    pub fn normalize(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }
}

/// World-from-camera rotation of the onboard camera for a UAV heading.
///
/// At yaw 0 and pitch 0 the optical axis is world +x, camera x is world -y
/// (right of the heading), camera y is world -z (down).
pub fn camera_rotation(yaw: f64, mount_pitch: f64) -> Rotation3<f64> {
    let base = Rotation3::from_matrix_unchecked(Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    ));
    Rotation3::from_axis_angle(&Vector3::z_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), mount_pitch)
        * base
}

/// One fixed 3D feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u64,
    pub position: [f64; 3],
}

impl Landmark {
    pub fn position_vec(&self) -> Vector3<f64> {
        Vector3::new(self.position[0], self.position[1], self.position[2])
    }
}

/// Spatial distribution of generated landmarks: an annulus around the target
/// in the horizontal plane, absolute height range in z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub target: [f64; 3],
    pub count: usize,
    /// Inner/outer horizontal radius around the target, meters.
    pub annulus: [f64; 2],
    /// World z range, meters.
    pub height: [f64; 2],
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            target: [0.0, 0.0, 1.0],
            count: 300,
            annulus: [1.5, 10.0],
            height: [-1.0, 4.0],
        }
    }
}

/// How a scene was produced; stored so runs are reproducible from artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneGeneration {
    pub seed: u64,
    pub params: SceneParams,
}

/// A synthetic landmark field with its generation record (`scene.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub generation: SceneGeneration,
    pub landmarks: Vec<Landmark>,
}

impl Scene {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene, RenderError> {
        serde_json::from_str(text).map_err(|e| RenderError::BadParams(e.to_string()))
    }
}

/// Samples `params.count` landmarks uniformly over the annulus/height box.
/// Deterministic for a fixed seed; ids run 0..count in generation order.
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<Scene, RenderError> {
    if params.count < MIN_LANDMARKS {
        return Err(RenderError::BadParams(format!(
            "count must be >= {MIN_LANDMARKS}, got {}",
            params.count
        )));
    }
    let [inner, outer] = params.annulus;
    if !(inner.is_finite() && outer.is_finite() && inner >= 0.0 && inner <= outer) {
        return Err(RenderError::BadParams(format!(
            "annulus must satisfy 0 <= inner <= outer, got [{inner}, {outer}]"
        )));
    }
    let [zmin, zmax] = params.height;
    if !(zmin.is_finite() && zmax.is_finite() && zmin <= zmax) {
        return Err(RenderError::BadParams(format!(
            "height range must satisfy min <= max, got [{zmin}, {zmax}]"
        )));
    }
    if params.target.iter().any(|v| !v.is_finite()) {
        return Err(RenderError::BadParams("target must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = |lo: f64, hi: f64| {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    let landmarks = (0..params.count as u64)
        .map(|id| {
            let angle = sample(0.0, std::f64::consts::TAU);
            let radius = sample(inner, outer);
            let z = sample(zmin, zmax);
            Landmark {
                id,
                position: [
                    params.target[0] + radius * angle.cos(),
                    params.target[1] + radius * angle.sin(),
                    z,
                ],
            }
        })
        .collect();
    Ok(Scene {
        generation: SceneGeneration {
            seed,
            params: *params,
        },
        landmarks,
    })
}

/// `(landmark_id, u_px, v_px)`.
pub type Observation = (u64, f64, f64);

/// All feature measurements of one rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    #[serde(rename = "obs")]
    pub observations: Vec<Observation>,
}

impl Frame {
    pub fn observation_of(&self, id: u64) -> Option<(f64, f64)> {
        self.observations
            .iter()
            .find(|(lid, _, _)| *lid == id)
            .map(|&(_, u, v)| (u, v))
    }
}

/// Per-frame 2D feature tracks with landmark identities; the stand-in for a
/// generated video's feature content.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub frames: Vec<Frame>,
    pub camera: CameraModel,
    pub noise_sigma: f64,
}

impl ObservationSequence {
    /// Indices of frames that see fewer than [`MIN_LANDMARKS`] landmarks.
    pub fn degenerate_frames(&self) -> Vec<usize> {
        self.frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.observations.len() < MIN_LANDMARKS)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes `observations.jsonl`: one `{"t":…, "obs":[[id,u,v],…]}` object
    /// per line. Camera intrinsics are carried by the run config, not the
    /// file.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), RenderError> {
        for frame in &self.frames {
            serde_json::to_writer(&mut writer, frame)
                .map_err(|e| RenderError::BadParams(e.to_string()))?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("jsonl is utf-8")
    }

    /// Reads `observations.jsonl`, reattaching the camera model it was
    /// rendered with.
    pub fn read_jsonl<R: Read>(
        reader: R,
        camera: CameraModel,
        noise_sigma: f64,
    ) -> Result<ObservationSequence, RenderError> {
        let mut frames = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let frame: Frame = serde_json::from_str(&line).map_err(|e| RenderError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            frames.push(frame);
        }
        Ok(ObservationSequence {
            frames,
            camera,
            noise_sigma,
        })
    }
}

/// Renders the trajectory against the scene: every landmark in front of the
/// camera whose (noisy) projection lands inside the image yields one
/// observation. Pixel noise is Gaussian with the given sigma, seeded; each
/// frame draws from its own stream of `seed`, so frames are independent of
/// one another.
pub fn render(
    scene: &Scene,
    traj: &Trajectory,
    camera: &CameraModel,
    noise_sigma: f64,
    seed: u64,
) -> Result<ObservationSequence, RenderError> {
    camera.validate()?;
    if traj.is_empty() {
        return Err(RenderError::BadParams("trajectory is empty".into()));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(RenderError::BadParams(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let noise = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).map_err(|e| RenderError::BadParams(e.to_string()))?)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(traj.len());
    for (frame_idx, pose) in traj.samples().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(frame_idx as u64);
        let rotation = camera_rotation(pose.yaw, camera.mount_pitch);
        let center = pose.position();
        let mut observations = Vec::new();
        for landmark in &scene.landmarks {
            let p_cam = rotation.inverse() * (landmark.position_vec() - center);
            let Some((u0, v0)) = camera.project(&p_cam) else {
                continue;
            };
            if !camera.contains(u0, v0) {
                continue;
            }
            let (u, v) = match &noise {
                Some(dist) => (u0 + dist.sample(&mut rng), v0 + dist.sample(&mut rng)),
                None => (u0, v0),
            };
            if camera.contains(u, v) {
                observations.push((landmark.id, u, v));
            }
        }
        if observations.len() < MIN_LANDMARKS {
            log::warn!(
                "degenerate frame {frame_idx} at t={}: sees {} landmarks",
                pose.t,
                observations.len()
            );
        }
        frames.push(Frame {
            t: pose.t,
            observations,
        });
    }
    Ok(ObservationSequence {
        frames,
        camera: *camera,
        noise_sigma,
    })
}

/// Replaces roughly `rate` of all observations with uniform random in-bounds
/// pixels while keeping their landmark ids: gross association outliers for
/// exercising robust estimation. Deterministic for a fixed seed.
pub fn inject_outliers(seq: &ObservationSequence, rate: f64, seed: u64) -> ObservationSequence {
    let mut out = seq.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (seq.camera.width as f64, seq.camera.height as f64);
    for frame in &mut out.frames {
        for obs in &mut frame.observations {
            if rng.gen::<f64>() < rate {
                obs.1 = rng.gen_range(0.0..w);
                obs.2 = rng.gen_range(0.0..h);
            }
        }
    }
    out
}

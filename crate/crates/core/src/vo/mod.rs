//! Monocular visual odometry over identity-labeled feature tracks: two-view
//! bootstrap, perspective-n-point tracking of every frame, and on-the-fly
//! triangulation of newly visible landmarks. Keyframe-free by design: loop
//! closure and relocalization add nothing for short single-shot clips.
//!
//! The output is up to scale in the gauge frame of the first camera: first
//! pose is the identity, init-pair baseline has length 1.

mod pnp;
mod two_view;

pub use pnp::{track_frame, visible_points, PnpPoint};
pub use two_view::{
    eight_point, epipolar_residual, initialize_two_view, median_bearing_disparity,
    sampson_error, shared_correspondences, triangulate_from_poses, triangulate_relative,
    Correspondence, TwoViewInit,
};

use crate::angles::angle_diff;
use crate::io::format_sig;
use crate::metrics::PoseSeries;
use crate::render::{CameraModel, ObservationSequence};
use crate::traj::StateAction;
use nalgebra::{Rotation3, Vector2, Vector3};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum VoError {
    #[error("insufficient correspondences: need at least {need}, got {got}")]
    InsufficientCorrespondences { need: usize, got: usize },
    #[error("insufficient parallax: median {median_deg:.4} deg below threshold {threshold_deg} deg")]
    InsufficientParallax {
        median_deg: f64,
        threshold_deg: f64,
    },
    #[error("cheirality ambiguous: no decomposition places the scene in front of both cameras")]
    CheiralityAmbiguous,
    #[error("initialization failed: no frame reaches the parallax threshold against frame 0")]
    InitializationFailed,
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("too short: need at least 2 tracked poses, got {got}")]
    TooShort { got: usize },
    #[error("tracking lost: {0}")]
    TrackingLost(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}

/// Robust-estimation policy for the two-view bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustMode {
    /// RANSAC when the observation sequence carries pixel noise, direct
    /// least squares otherwise.
    Auto,
    Direct,
    Ransac,
}

/// Tunables for the extraction pass. Defaults suit the desk-scale noise
/// regime.
#[derive(Debug, Clone)]
pub struct VoConfig {
    /// Median triangulated parallax needed to initialize, degrees.
    pub parallax_threshold_deg: f64,
    /// With pixel noise present, the effective init threshold is raised to
    /// at least this multiple of the per-observation bearing noise: the
    /// two-view geometry is unusable when parallax sits near the noise
    /// floor.
    pub min_parallax_snr: f64,
    pub robust: RobustMode,
    pub ransac_iterations: usize,
    /// Epipolar inlier threshold, pixels at the configured intrinsics.
    pub ransac_threshold_px: f64,
    pub ransac_seed: u64,
    /// Pixel noise the sequence was rendered with; resolved from the
    /// observation sequence by the extraction pass. Widens the consensus
    /// expansion so the inlier tail is kept.
    pub noise_sigma_px: f64,
    /// Minimum triangulated landmarks to attempt a frame pose.
    pub min_track_points: usize,
    pub max_refine_iterations: usize,
    /// Gauss-Newton stops when the accepted step norm falls below this.
    pub refine_step_tolerance: f64,
    /// RMS reprojection above this marks the frame lost, pixels.
    pub tracking_rms_px: f64,
    /// Landmarks whose residual exceeds this are excluded from the pose fit,
    /// pixels.
    pub track_trim_px: f64,
    /// Consecutive trimmed sightings before a stale landmark leaves the map
    /// (it re-triangulates later at a wider baseline).
    pub evict_after_misses: u32,
    /// Triangulation angle required before a new landmark enters the map,
    /// degrees.
    pub new_landmark_parallax_deg: f64,
    /// Anchor observations roll forward once the refresh pair subtends this
    /// angle, degrees. Wide pairs carry most of the depth information, so
    /// anchors stay old.
    pub anchor_roll_deg: f64,
}

impl Default for VoConfig {
    fn default() -> Self {
        VoConfig {
            parallax_threshold_deg: 1.0,
            min_parallax_snr: 200.0,
            robust: RobustMode::Auto,
            ransac_iterations: 200,
            ransac_threshold_px: 1.0,
            ransac_seed: 0,
            noise_sigma_px: 0.0,
            min_track_points: 4,
            max_refine_iterations: 50,
            refine_step_tolerance: 1e-10,
            tracking_rms_px: 3.0,
            track_trim_px: 2.5,
            evict_after_misses: 3,
            new_landmark_parallax_deg: 2.0,
            anchor_roll_deg: 25.0,
        }
    }
}

impl VoConfig {
    /// Whether the two-view bootstrap runs RANSAC. `Auto` counts as direct;
    /// the sequence-level pipeline resolves it against the noise sigma first.
    pub fn use_ransac(&self) -> bool {
        matches!(self.robust, RobustMode::Ransac)
    }

    fn resolved_for(&self, noise_sigma: f64, camera: &CameraModel) -> VoConfig {
        let robust = match self.robust {
            RobustMode::Auto => {
                if noise_sigma > 0.0 {
                    RobustMode::Ransac
                } else {
                    RobustMode::Direct
                }
            }
            other => other,
        };
        let bearing_noise_deg = (noise_sigma / camera.fx).to_degrees();
        let parallax_threshold_deg = self
            .parallax_threshold_deg
            .max(self.min_parallax_snr * bearing_noise_deg);
        VoConfig {
            robust,
            parallax_threshold_deg,
            noise_sigma_px: noise_sigma,
            ..self.clone()
        }
    }
}

/// World(gauge)-from-camera pose: `rotation` maps camera axes into the gauge
/// frame, `position` is the camera center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Rotation3<f64>,
    pub position: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: Rotation3::identity(),
            position: Vector3::zeros(),
        }
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.position)
    }

    /// Optical axis direction in the gauge frame.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    /// Pose fixed by the two-view bootstrap.
    Initialized,
    /// Pose estimated by PnP tracking.
    Tracked,
    /// Tracking failed; pose propagated from the previous frame.
    Lost,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Initialized => "initialized",
            TrackStatus::Tracked => "tracked",
            TrackStatus::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedPose {
    pub t: f64,
    pub pose: CameraPose,
    pub status: TrackStatus,
}

/// Up-to-scale camera trajectory in the gauge frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTrajectory {
    pub poses: Vec<EstimatedPose>,
}

impl EstimatedTrajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn tracked_count(&self) -> usize {
        self.poses
            .iter()
            .filter(|p| p.status != TrackStatus::Lost)
            .count()
    }

    /// Heading of the optical axis projected onto the gauge ground plane.
    ///
    /// The gauge frame is the first camera's frame (x right, y down,
    /// z forward), so heading is measured about the y (down) axis, zero along
    /// the initial optical axis: `atan2(-f_x, f_z)`.
    pub fn gauge_yaw(pose: &CameraPose) -> f64 {
        let f = pose.forward();
        (-f.x).atan2(f.z)
    }

    /// Positions/headings for comparison against metric trajectories.
    pub fn pose_series(&self) -> PoseSeries {
        PoseSeries {
            times: self.poses.iter().map(|p| p.t).collect(),
            positions: self.poses.iter().map(|p| p.pose.position).collect(),
            forwards: self.poses.iter().map(|p| p.pose.forward()).collect(),
        }
    }

    /// Central-difference positional speeds (gauge units per second).
    pub fn speeds(&self, dt: f64) -> Vec<f64> {
        let n = self.poses.len();
        (0..n)
            .map(|i| {
                if n < 2 {
                    0.0
                } else if i == 0 {
                    (self.poses[1].pose.position - self.poses[0].pose.position).norm() / dt
                } else if i == n - 1 {
                    (self.poses[n - 1].pose.position - self.poses[n - 2].pose.position).norm() / dt
                } else {
                    (self.poses[i + 1].pose.position - self.poses[i - 1].pose.position).norm()
                        / (2.0 * dt)
                }
            })
            .collect()
    }

    /// Largest deviation from orthonormality (R^T R - I, det - 1) over all
    /// rotations.
    pub fn max_rotation_defect(&self) -> f64 {
        self.poses
            .iter()
            .map(|p| {
                let r = p.pose.rotation.matrix();
                let ortho = (r.transpose() * r - nalgebra::Matrix3::identity()).norm();
                let det = (r.determinant() - 1.0).abs();
                ortho.max(det)
            })
            .fold(0.0, f64::max)
    }

    /// Writes `traj_est.csv`: the `traj.csv` columns plus a `status` column.
    /// Yaw is the gauge heading, speeds are central differences.
    pub fn write_csv<W: Write>(&self, mut writer: W, dt: f64) -> std::io::Result<()> {
        writeln!(writer, "t,x,y,z,yaw,v,status")?;
        let speeds = self.speeds(dt);
        for (p, v) in self.poses.iter().zip(speeds) {
            writeln!(
                writer,
                "{},{},{},{},{},{},{}",
                format_sig(p.t, 9),
                format_sig(p.pose.position.x, 9),
                format_sig(p.pose.position.y, 9),
                format_sig(p.pose.position.z, 9),
                format_sig(Self::gauge_yaw(&p.pose), 9),
                format_sig(v, 9),
                p.status.as_str()
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, dt: f64) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, dt).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// One triangulated landmark in the gauge frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    /// Number of frames whose tracking used this landmark.
    pub observations: u32,
}

/// The sparse landmark map built during extraction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapPoints {
    pub points: BTreeMap<u64, MapPoint>,
}

impl MapPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `map.json`: id-sorted triangulated points with observation counts.
    pub fn to_json(&self) -> String {
        #[derive(serde::Serialize)]
        struct Row<'a> {
            id: u64,
            position: [f64; 3],
            observations: u32,
            #[serde(skip)]
            _marker: std::marker::PhantomData<&'a ()>,
        }
        let rows: Vec<Row> = self
            .points
            .iter()
            .map(|(&id, p)| Row {
                id,
                position: [p.position.x, p.position.y, p.position.z],
                observations: p.observations,
                _marker: std::marker::PhantomData,
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "points": rows }))
            .expect("map serializes")
    }
}

/// A reference observation of a landmark: the frame pose and normalized
/// image point. Used both for landmarks waiting to triangulate and as the
/// rolling anchor that re-triangulates mapped ones.
#[derive(Debug, Clone, Copy)]
struct AnchorObs {
    pose: CameraPose,
    observed: Vector2<f64>,
}

struct Extractor<'a> {
    camera: &'a CameraModel,
    cfg: VoConfig,
    map: MapPoints,
    /// Landmarks seen but not yet triangulated: their first tracked sighting.
    pending: BTreeMap<u64, AnchorObs>,
    /// Per-landmark reference sighting for continued two-view refreshes.
    anchors: BTreeMap<u64, AnchorObs>,
    /// Accumulated refresh weight per landmark (sum of squared pair
    /// angles); new pairs are folded in by inverse-variance weighting.
    refresh_weight: BTreeMap<u64, f64>,
    misses: BTreeMap<u64, u32>,
}

impl Extractor<'_> {
    /// Folds one frame into the map. `inliers`/`outliers` are the landmark
    /// ids that supported/contradicted the frame's pose fit.
    fn update(
        &mut self,
        frame: &crate::render::Frame,
        pose: &CameraPose,
        inliers: &[u64],
        outliers: &[u64],
    ) {
        // Persistent offenders are stale (triangulated at too small a
        // baseline or from drifted geometry); drop them so the pending path
        // rebuilds them from fresher pairs.
        for id in outliers {
            let misses = self.misses.entry(*id).or_insert(0);
            *misses += 1;
            if *misses >= self.cfg.evict_after_misses {
                self.map.points.remove(id);
                self.anchors.remove(id);
                self.refresh_weight.remove(id);
                self.misses.remove(id);
            }
        }

        let inlier_set: std::collections::BTreeSet<u64> = inliers.iter().copied().collect();
        let min_angle = self.cfg.new_landmark_parallax_deg.to_radians();
        for &(id, u, v) in &frame.observations {
            let (x, y) = self.camera.normalize(u, v);
            let observed = Vector2::new(x, y);
            let current = AnchorObs {
                pose: *pose,
                observed,
            };
            // Observations hugging the image border carry a truncation bias
            // (noise that would push them outside is never observed), and a
            // landmark's first sighting always hugs the border it entered
            // through. Biased anchors would skew every triangulation the
            // same way, so border sightings never become anchors.
            let margin = 4.0;
            let anchor_grade = u >= margin
                && u < self.camera.width as f64 - margin
                && v >= margin
                && v < self.camera.height as f64 - margin;
            if self.map.points.contains_key(&id) {
                if inlier_set.contains(&id) {
                    self.misses.remove(&id);
                    if let Some(entry) = self.map.points.get_mut(&id) {
                        entry.observations += 1;
                    }
                    self.refresh(id, &current, min_angle, anchor_grade);
                }
                continue;
            }
            self.promote_or_queue(id, &current, min_angle, anchor_grade);
        }
    }

    /// Two-view re-triangulation of a mapped landmark against its rolling
    /// anchor, folded in with inverse-variance weighting: a pair's depth
    /// noise (and its small-angle depth bias) scales with 1/angle^2, so each
    /// sample weighs in proportionally to its squared angle. Wide pairs
    /// dominate, narrow early pairs wash out, and mature landmarks barely
    /// move, anchoring the map instead of dead-reckoning with pose drift.
    fn refresh(&mut self, id: u64, current: &AnchorObs, min_angle: f64, anchor_grade: bool) {
        let Some(anchor) = self.anchors.get(&id).copied() else {
            if anchor_grade {
                self.anchors.insert(id, *current);
            }
            return;
        };
        let Some(point) = triangulate_from_poses(
            &anchor.pose,
            &anchor.observed,
            &current.pose,
            &current.observed,
        ) else {
            return;
        };
        let angle = (anchor.pose.position - point).angle(&(current.pose.position - point));
        if angle < min_angle || !self.reprojects(&point, &anchor, current) {
            return;
        }
        let sample_weight = angle * angle;
        let total = self.refresh_weight.entry(id).or_insert(sample_weight);
        *total += sample_weight;
        if let Some(entry) = self.map.points.get_mut(&id) {
            entry.position += (sample_weight / *total) * (point - entry.position);
        }
        // Roll the anchor forward only once the pair is very wide: depth
        // accuracy scales with the subtended angle, so anchors stay old.
        if anchor_grade && angle > self.cfg.anchor_roll_deg.to_radians() {
            self.anchors.insert(id, *current);
        }
    }

    /// Triangulates a pending landmark once the rays subtend enough angle,
    /// or queues its first sighting.
    fn promote_or_queue(&mut self, id: u64, current: &AnchorObs, min_angle: f64, anchor_grade: bool) {
        let Some(first) = self.pending.get(&id).copied() else {
            if anchor_grade {
                self.pending.insert(id, *current);
            }
            return;
        };
        let Some(point) = triangulate_from_poses(
            &first.pose,
            &first.observed,
            &current.pose,
            &current.observed,
        ) else {
            // Usually a too-small baseline; wait for a wider one.
            return;
        };
        let angle = (first.pose.position - point).angle(&(current.pose.position - point));
        if angle < min_angle {
            return;
        }
        if !self.reprojects(&point, &first, current) {
            // Wide baseline but inconsistent rays: the first observation was
            // bad. Start over from the current one.
            if anchor_grade {
                self.pending.insert(id, *current);
            } else {
                self.pending.remove(&id);
            }
            return;
        }
        self.pending.remove(&id);
        self.anchors
            .insert(id, if anchor_grade { *current } else { first });
        self.refresh_weight.insert(id, angle * angle);
        self.map.points.insert(
            id,
            MapPoint {
                position: point,
                observations: 2,
            },
        );
    }

    fn reprojects(&self, point: &Vector3<f64>, a: &AnchorObs, b: &AnchorObs) -> bool {
        let bound = self.cfg.tracking_rms_px;
        for obs in [a, b] {
            let q = obs.pose.world_to_camera(point);
            if q.z <= 0.0 {
                return false;
            }
            let du = (q.x / q.z - obs.observed.x) * self.camera.fx;
            let dv = (q.y / q.z - obs.observed.y) * self.camera.fy;
            if du.hypot(dv) > bound {
                return false;
            }
        }
        true
    }
}

/// Runs the full extraction pass: picks the init pair (frame 0 and the first
/// frame with enough parallax), bootstraps the map, then tracks every other
/// frame in order, triangulating newly visible landmarks from their first two
/// sufficiently separated tracked frames. Lost frames carry the previous
/// pose.
pub fn estimate_trajectory(
    obs: &ObservationSequence,
    cfg: &VoConfig,
) -> Result<(EstimatedTrajectory, MapPoints), VoError> {
    let frames = &obs.frames;
    if frames.len() < 2 {
        return Err(VoError::TooFewFrames {
            need: 2,
            got: frames.len(),
        });
    }
    let camera = &obs.camera;
    let cfg = cfg.resolved_for(obs.noise_sigma, camera);

    // Init pair scan: first frame whose shared landmarks reach the parallax
    // threshold against frame 0 and initialize cleanly.
    let mut init: Option<(usize, TwoViewInit)> = None;
    let mut hard_failure: Option<VoError> = None;
    for j in 1..frames.len() {
        match initialize_two_view(&frames[0], &frames[j], camera, &cfg) {
            Ok(tv) => {
                init = Some((j, tv));
                break;
            }
            Err(VoError::InsufficientParallax { .. })
            | Err(VoError::InsufficientCorrespondences { .. }) => continue,
            Err(other) => {
                if hard_failure.is_none() {
                    hard_failure = Some(other);
                }
            }
        }
    }
    let Some((init_idx, two_view)) = init else {
        return Err(hard_failure.unwrap_or(VoError::InitializationFailed));
    };

    let pose0 = CameraPose::identity();
    let pose_j = CameraPose {
        rotation: two_view.rotation.inverse(),
        position: -(two_view.rotation.inverse() * two_view.translation),
    };

    let mut extractor = Extractor {
        camera,
        cfg: cfg.clone(),
        map: MapPoints::default(),
        pending: BTreeMap::new(),
        anchors: BTreeMap::new(),
        refresh_weight: BTreeMap::new(),
        misses: BTreeMap::new(),
    };
    for (&id, &point) in &two_view.points {
        extractor.map.points.insert(
            id,
            MapPoint {
                position: point,
                observations: 0,
            },
        );
    }
    for (frame, pose) in [(&frames[0], &pose0), (&frames[init_idx], &pose_j)] {
        let mapped: Vec<u64> = frame
            .observations
            .iter()
            .map(|&(id, _, _)| id)
            .filter(|id| extractor.map.points.contains_key(id))
            .collect();
        extractor.update(frame, pose, &mapped, &[]);
    }

    let mut poses: Vec<Option<EstimatedPose>> = vec![None; frames.len()];
    poses[0] = Some(EstimatedPose {
        t: frames[0].t,
        pose: pose0,
        status: TrackStatus::Initialized,
    });
    poses[init_idx] = Some(EstimatedPose {
        t: frames[init_idx].t,
        pose: pose_j,
        status: TrackStatus::Initialized,
    });

    let mut prev = pose0;
    for i in 1..frames.len() {
        if i == init_idx {
            prev = pose_j;
            continue;
        }
        let points = visible_points(&frames[i], &extractor.map, camera);
        match pnp::track_points(&points, camera, &prev, &cfg) {
            Ok(outcome) => {
                extractor.update(
                    &frames[i],
                    &outcome.pose,
                    &outcome.inlier_ids,
                    &outcome.outlier_ids,
                );
                poses[i] = Some(EstimatedPose {
                    t: frames[i].t,
                    pose: outcome.pose,
                    status: TrackStatus::Tracked,
                });
                prev = outcome.pose;
            }
            Err(VoError::TrackingLost(reason)) => {
                log::warn!("frame {i} at t={}: tracking lost ({reason})", frames[i].t);
                poses[i] = Some(EstimatedPose {
                    t: frames[i].t,
                    pose: prev,
                    status: TrackStatus::Lost,
                });
            }
            Err(other) => return Err(other),
        }
    }

    let trajectory = EstimatedTrajectory {
        poses: poses.into_iter().map(|p| p.expect("pose assigned")).collect(),
    };
    Ok((trajectory, extractor.map))
}

/// Which frame the extracted states are expressed in, fixing the yaw
/// convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateFrame {
    /// First-camera gauge frame: yaw about the camera down-axis, zero along
    /// the initial optical axis.
    Gauge,
    /// Poses already similarity-aligned into the world frame: yaw about
    /// world +z, zero along +x.
    World,
}

/// Converts an estimated trajectory into state-action pairs matching the
/// reference extraction conventions: yaw from the projected optical axis,
/// central-difference speeds, forward-difference actions.
pub fn to_states(
    est: &EstimatedTrajectory,
    dt: f64,
    frame: StateFrame,
) -> Result<Vec<StateAction>, VoError> {
    if est.tracked_count() < 2 {
        return Err(VoError::TooShort {
            got: est.tracked_count(),
        });
    }
    let yaw_of = |pose: &CameraPose| -> f64 {
        match frame {
            StateFrame::Gauge => EstimatedTrajectory::gauge_yaw(pose),
            StateFrame::World => {
                let f = pose.forward();
                f.y.atan2(f.x)
            }
        }
    };
    let speeds = est.speeds(dt);
    let n = est.poses.len();
    Ok((0..n - 1)
        .map(|i| {
            let a = &est.poses[i];
            let b = &est.poses[i + 1];
            let yaw_a = yaw_of(&a.pose);
            let yaw_b = yaw_of(&b.pose);
            StateAction {
                pose: crate::traj::Pose::new(
                    a.t,
                    a.pose.position.x,
                    a.pose.position.y,
                    a.pose.position.z,
                    yaw_a,
                ),
                speed: speeds[i],
                velocity: (b.pose.position - a.pose.position) / dt,
                yaw_rate: angle_diff(yaw_b, yaw_a) / dt,
            }
        })
        .collect())
}

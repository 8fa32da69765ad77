//! Text-to-flight pipeline at desk scale: compile a shot description into a
//! cinematic UAV trajectory, render it into synthetic camera feature tracks,
//! recover the camera path with monocular visual odometry, fly the reference
//! on a PID-tracked simulated UAV, and compare everything.
//!
//! Stages and their modules:
//!
//! ```text
//! prompt --grammar--> ShotPlan --traj--> Trajectory --render--> ObservationSequence
//!                                   |                                   |
//!                                   |                                   vo
//!                                   |                                   v
//!                                   +--sim--> executed        EstimatedTrajectory
//!                                                 \               /
//!                                                  metrics + overlay
//! ```
//!
//! Conventions shared by every module: the world frame is right-handed with
//! z up; yaw is the heading about +z, zero along +x, positive
//! counterclockwise, stored in (-pi, pi]; the camera frame is x right,
//! y down, z forward along the heading.

pub mod angles;
pub mod grammar;
pub mod io;
pub mod metrics;
pub mod overlay;
pub mod render;
pub mod sim;
pub mod traj;
pub mod vo;

pub use grammar::{Direction, PlanError, Primitive, Segment, ShotPlan};
pub use metrics::{AlignMode, PoseSeries, SimilarityTransform, TrajectoryReport};
pub use render::{CameraModel, ObservationSequence, Scene, SceneParams};
pub use sim::{ControlLog, GainSet, PidGains, UavModel};
pub use traj::{Pose, StateAction, Trajectory};
pub use vo::{EstimatedTrajectory, MapPoints, VoConfig};

//! Per-frame pose tracking: DLT-initialized perspective-n-point refined by
//! Gauss-Newton on total squared reprojection error, with the previous pose
//! as fallback initializer when the linear solve is unavailable.

use super::{CameraPose, MapPoints, VoConfig, VoError};
use crate::render::{CameraModel, Frame};
use nalgebra::{
    DMatrix, Matrix2x3, Matrix2x6, Matrix3, Matrix6, Rotation3, Vector2, Vector3, Vector6,
};

/// One 3D-2D correspondence: gauge frame point and normalized observation.
#[derive(Debug, Clone, Copy)]
pub struct PnpPoint {
    pub id: u64,
    pub world: Vector3<f64>,
    pub observed: Vector2<f64>,
}

/// Camera-from-world pose as the solver works with it.
#[derive(Debug, Clone, Copy)]
struct WorldToCamera {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl WorldToCamera {
    fn from_camera_pose(pose: &CameraPose) -> Self {
        let rotation = pose.rotation.inverse();
        WorldToCamera {
            rotation,
            translation: -(rotation * pose.position),
        }
    }

    fn to_camera_pose(self) -> CameraPose {
        let rotation = self.rotation.inverse();
        CameraPose {
            rotation,
            position: -(rotation * self.translation),
        }
    }

    fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Linear pose estimate from 6+ points: solves the 2n x 12 projection system
/// with normalized 3D coordinates and projects the leading block onto SO(3).
fn dlt_pose(points: &[PnpPoint]) -> Option<WorldToCamera> {
    let n = points.len();
    if n < 6 {
        return None;
    }
    let centroid: Vector3<f64> = points.iter().map(|p| p.world).sum::<Vector3<f64>>() / n as f64;
    let mean_dist =
        points.iter().map(|p| (p.world - centroid).norm()).sum::<f64>() / n as f64;
    if mean_dist < 1e-12 {
        return None;
    }
    let scale = 3.0_f64.sqrt() / mean_dist;

    let mut design = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, p) in points.iter().enumerate() {
        let w = (p.world - centroid) * scale;
        let (x, y) = (p.observed.x, p.observed.y);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        for (c, v) in [w.x, w.y, w.z, 1.0].into_iter().enumerate() {
            design[(r0, c)] = v;
            design[(r0, 8 + c)] = -x * v;
            design[(r1, 4 + c)] = v;
            design[(r1, 8 + c)] = -y * v;
        }
    }
    let svd = design.svd(false, true);
    let v_t = svd.v_t?;
    let sol = v_t.row(v_t.nrows() - 1);

    // P acts on normalized world coordinates; undo the conditioning.
    let mut m = Matrix3::zeros();
    let mut t = Vector3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            m[(r, c)] = sol[4 * r + c] * scale;
        }
        t[r] = sol[4 * r + 3] - (0..3).map(|c| m[(r, c)] * centroid[c]).sum::<f64>();
    }

    // Fix the homogeneous sign so depths come out positive.
    let mut positive = 0usize;
    for p in points {
        if (m * p.world + t).z > 0.0 {
            positive += 1;
        }
    }
    let (mut m, mut t) = (m, t);
    if positive * 2 < n {
        m = -m;
        t = -t;
    }

    let row_scale = (m.row(0).norm() + m.row(1).norm() + m.row(2).norm()) / 3.0;
    if !(row_scale.is_finite() && row_scale > 1e-12) {
        return None;
    }
    let m_scaled = m / row_scale;
    let svd = m_scaled.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)) * v_t;
    }
    if !r.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(WorldToCamera {
        rotation: Rotation3::from_matrix_unchecked(r),
        translation: t / row_scale,
    })
}

#[derive(Debug)]
pub(crate) struct RefineReport {
    /// Cost after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

fn reprojection_cost(pose: &WorldToCamera, points: &[PnpPoint]) -> f64 {
    points
        .iter()
        .map(|p| {
            let q = pose.transform(&p.world);
            let z = q.z.max(1e-9);
            let rx = q.x / z - p.observed.x;
            let ry = q.y / z - p.observed.y;
            rx * rx + ry * ry
        })
        .sum()
}

/// Gauss-Newton on total squared reprojection error with step-halving on
/// cost increase; the accepted-cost sequence is non-increasing.
fn refine_pose(
    initial: WorldToCamera,
    points: &[PnpPoint],
    cfg: &VoConfig,
) -> (WorldToCamera, RefineReport) {
    let mut pose = initial;
    let mut cost = reprojection_cost(&pose, points);
    let mut history = vec![cost];

    for _ in 0..cfg.max_refine_iterations {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for p in points {
            let q = pose.transform(&p.world);
            let z = q.z.max(1e-9);
            let inv_z = 1.0 / z;
            let proj_jac = Matrix2x3::new(
                inv_z,
                0.0,
                -q.x * inv_z * inv_z,
                0.0,
                inv_z,
                -q.y * inv_z * inv_z,
            );
            // Left-multiplied twist, columns (translation | rotation).
            let mut point_jac = Matrix2x6::zeros();
            point_jac
                .view_mut((0, 0), (2, 3))
                .copy_from(&proj_jac);
            let skew = Matrix3::new(0.0, -q.z, q.y, q.z, 0.0, -q.x, -q.y, q.x, 0.0);
            point_jac
                .view_mut((0, 3), (2, 3))
                .copy_from(&(proj_jac * (-skew)));
            let residual = Vector2::new(q.x / z - p.observed.x, q.y / z - p.observed.y);
            h += point_jac.transpose() * point_jac;
            g += point_jac.transpose() * residual;
        }
        let Some(chol) = (h + Matrix6::identity() * 1e-15).cholesky() else {
            break;
        };
        let full_step: Vector6<f64> = chol.solve(&(-g));

        // Halve on increase; accept the first improving candidate.
        let mut accepted = None;
        let mut step = full_step;
        for _ in 0..24 {
            let delta_t = Vector3::new(step[0], step[1], step[2]);
            let delta_w = Vector3::new(step[3], step[4], step[5]);
            let rot = Rotation3::from_scaled_axis(delta_w);
            let candidate = WorldToCamera {
                rotation: rot * pose.rotation,
                translation: rot * pose.translation + delta_t,
            };
            let candidate_cost = reprojection_cost(&candidate, points);
            if candidate_cost <= cost {
                accepted = Some((candidate, candidate_cost, step.norm()));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_cost, step_norm)) = accepted else {
            break;
        };
        pose = next;
        cost = next_cost;
        history.push(cost);
        if step_norm < cfg.refine_step_tolerance {
            break;
        }
    }
    (pose, RefineReport { cost_history: history })
}

/// Map landmarks visible in this frame, id-ordered.
pub fn visible_points(frame: &Frame, map: &MapPoints, camera: &CameraModel) -> Vec<PnpPoint> {
    frame
        .observations
        .iter()
        .filter_map(|&(id, u, v)| {
            map.points.get(&id).map(|entry| {
                let (x, y) = camera.normalize(u, v);
                PnpPoint {
                    id,
                    world: entry.position,
                    observed: Vector2::new(x, y),
                }
            })
        })
        .collect()
}

/// Tracking result with the landmark ids that supported and contradicted the
/// pose, for map maintenance.
#[derive(Debug, Clone)]
pub(crate) struct TrackOutcome {
    pub pose: CameraPose,
    pub inlier_ids: Vec<u64>,
    pub outlier_ids: Vec<u64>,
}

/// Estimates the camera pose for one frame against the triangulated map.
///
/// DLT seeds the refinement when at least 6 landmarks are visible; otherwise
/// (or when the linear solve degenerates) the previous pose seeds it. Errors
/// with `TrackingLost` when fewer than `min_track_points` landmarks are
/// visible or the refined RMS reprojection error stays above the threshold.
pub fn track_frame(
    frame: &Frame,
    map: &MapPoints,
    camera: &CameraModel,
    prev_pose: &CameraPose,
    cfg: &VoConfig,
) -> Result<CameraPose, VoError> {
    let points = visible_points(frame, map, camera);
    track_points(&points, camera, prev_pose, cfg).map(|outcome| outcome.pose)
}

pub(crate) fn track_points(
    points: &[PnpPoint],
    camera: &CameraModel,
    prev_pose: &CameraPose,
    cfg: &VoConfig,
) -> Result<TrackOutcome, VoError> {
    if points.len() < cfg.min_track_points {
        return Err(VoError::TrackingLost(format!(
            "{} visible landmarks, need {}",
            points.len(),
            cfg.min_track_points
        )));
    }
    // The previous pose and the linear solve can disagree when the map holds
    // conflicting landmark generations; run both seeds through the robust
    // fit and keep whichever explains more of the map.
    let fallback = WorldToCamera::from_camera_pose(prev_pose);
    let mut candidates = vec![fallback];
    if let Some(linear) = dlt_pose(points) {
        if reprojection_cost(&linear, points).is_finite() {
            candidates.push(linear);
        }
    }
    let mut best: Option<(WorldToCamera, Vec<PnpPoint>, f64)> = None;
    for (i, seed) in candidates.into_iter().enumerate() {
        let Some((pose, survivors)) = trimmed_fit(seed, points, camera, cfg) else {
            continue;
        };
        let rms = rms_pixel_error(&pose, &survivors, camera);
        let better = match &best {
            None => true,
            // The previous-pose candidate ran first; the linear seed must
            // beat it clearly, not just flicker between landmark modes.
            Some((_, inliers, best_rms)) => {
                let need = if i > 0 {
                    inliers.len() + inliers.len() / 5
                } else {
                    inliers.len() + 1
                };
                survivors.len() >= need
                    || (survivors.len() == inliers.len() && rms < *best_rms)
            }
        };
        if better {
            best = Some((pose, survivors, rms));
        }
    }
    let Some((pose, survivors, rms_px)) = best else {
        return Err(VoError::TrackingLost(format!(
            "no seed kept {} of {} landmarks within {} px",
            cfg.min_track_points,
            points.len(),
            cfg.track_trim_px
        )));
    };
    if rms_px > cfg.tracking_rms_px {
        return Err(VoError::TrackingLost(format!(
            "rms reprojection {rms_px:.3} px above {} px",
            cfg.tracking_rms_px
        )));
    }
    let inlier_ids: Vec<u64> = survivors.iter().map(|p| p.id).collect();
    let outlier_ids: Vec<u64> = points
        .iter()
        .map(|p| p.id)
        .filter(|id| !inlier_ids.contains(id))
        .collect();
    Ok(TrackOutcome {
        pose: pose.to_camera_pose(),
        inlier_ids,
        outlier_ids,
    })
}

/// Projection-gated robust fit: keep only landmarks consistent with the
/// current pose, refine on them, and repeat until the gated set is stable.
/// Gating before the first refinement keeps conflicting landmark
/// populations (e.g. stale generations) from dragging the fit to a blend of
/// modes. `None` when fewer than the minimum survive a gate.
fn trimmed_fit(
    seed: WorldToCamera,
    points: &[PnpPoint],
    camera: &CameraModel,
    cfg: &VoConfig,
) -> Option<(WorldToCamera, Vec<PnpPoint>)> {
    let trim = cfg.track_trim_px;
    // The seed is a prediction, not a fit; gate generously on the first
    // round so honest motion between frames is not trimmed away.
    let mut gate = (4.0 * trim).max(16.0);
    let mut pose = seed;
    let mut active: Vec<PnpPoint> = Vec::new();
    for _ in 0..6 {
        let survivors: Vec<PnpPoint> = points
            .iter()
            .copied()
            .filter(|p| pixel_residual(&pose, p, camera) <= gate)
            .collect();
        if survivors.len() < cfg.min_track_points {
            return None;
        }
        let stable = gate == trim
            && survivors.len() == active.len()
            && survivors.iter().zip(&active).all(|(a, b)| a.id == b.id);
        if stable {
            break;
        }
        let (refined, _) = refine_pose(pose, &survivors, cfg);
        pose = refined;
        active = survivors;
        gate = trim;
    }
    let survivors: Vec<PnpPoint> = points
        .iter()
        .copied()
        .filter(|p| pixel_residual(&pose, p, camera) <= trim)
        .collect();
    if survivors.len() < cfg.min_track_points {
        return None;
    }
    Some((pose, survivors))
}

fn pixel_residual(pose: &WorldToCamera, point: &PnpPoint, camera: &CameraModel) -> f64 {
    let q = pose.transform(&point.world);
    let z = q.z.max(1e-9);
    let rx = (q.x / z - point.observed.x) * camera.fx;
    let ry = (q.y / z - point.observed.y) * camera.fy;
    rx.hypot(ry)
}

fn rms_pixel_error(pose: &WorldToCamera, points: &[PnpPoint], camera: &CameraModel) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|p| {
            let r = pixel_residual(pose, p, camera);
            r * r
        })
        .sum();
    (sum / points.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-1.0..3.0),
                )
            })
            .collect()
    }

    fn observe(pose: &CameraPose, world: &[Vector3<f64>]) -> Vec<PnpPoint> {
        world
            .iter()
            .enumerate()
            .filter_map(|(id, w)| {
                let q = pose.world_to_camera(w);
                if q.z < 0.2 {
                    return None;
                }
                Some(PnpPoint {
                    id: id as u64,
                    world: *w,
                    observed: Vector2::new(q.x / q.z, q.y / q.z),
                })
            })
            .collect()
    }

    fn truth_pose() -> CameraPose {
        CameraPose {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.05, 0.6, -0.1)),
            position: Vector3::new(5.0, -1.0, 1.2),
        }
    }

    fn pose_error(a: &CameraPose, b: &CameraPose) -> (f64, f64) {
        (
            (a.rotation.matrix() - b.rotation.matrix()).norm(),
            (a.position - b.position).norm(),
        )
    }

    #[test]
    fn recovers_a_known_pose_from_noiseless_projections() {
        let truth = truth_pose();
        // Points ahead of the camera: along its optical axis.
        let world: Vec<Vector3<f64>> = scene_points(40, 3)
            .into_iter()
            .map(|p| truth.position + truth.rotation * (p + Vector3::new(0.0, 0.0, 6.0)))
            .collect();
        let points = observe(&truth, &world);
        assert!(points.len() >= 30);
        let off = CameraPose {
            rotation: Rotation3::identity(),
            position: Vector3::zeros(),
        };
        let outcome = track_points(&points, &CameraModel::default(), &off, &VoConfig::default())
            .expect("tracked");
        let pose = outcome.pose;
        let (rot_err, pos_err) = pose_error(&pose, &truth);
        assert!(rot_err < 1e-6, "rotation error {rot_err}");
        assert!(pos_err < 1e-6, "position error {pos_err}");
    }

    #[test]
    fn stationary_frame_keeps_the_previous_pose() {
        let truth = truth_pose();
        let world: Vec<Vector3<f64>> = scene_points(20, 5)
            .into_iter()
            .map(|p| truth.position + truth.rotation * (p + Vector3::new(0.0, 0.0, 6.0)))
            .collect();
        let points = observe(&truth, &world);
        let outcome = track_points(&points, &CameraModel::default(), &truth, &VoConfig::default())
            .expect("tracked");
        let pose = outcome.pose;
        let (rot_err, pos_err) = pose_error(&pose, &truth);
        assert!(rot_err < 1e-9 && pos_err < 1e-9, "{rot_err} {pos_err}");
    }

    #[test]
    fn three_points_is_tracking_lost() {
        let truth = truth_pose();
        let world: Vec<Vector3<f64>> = scene_points(3, 6)
            .into_iter()
            .map(|p| truth.position + truth.rotation * (p + Vector3::new(0.0, 0.0, 6.0)))
            .collect();
        let points = observe(&truth, &world);
        let err = track_points(&points, &CameraModel::default(), &truth, &VoConfig::default())
            .unwrap_err();
        assert!(matches!(err, VoError::TrackingLost(_)), "{err}");
    }

    #[test]
    fn five_points_fall_back_to_the_previous_pose_seed() {
        // Below the 6-point DLT minimum: refinement must start from
        // prev_pose and still converge given a nearby guess.
        let truth = truth_pose();
        let world: Vec<Vector3<f64>> = scene_points(5, 8)
            .into_iter()
            .map(|p| truth.position + truth.rotation * (p + Vector3::new(0.0, 0.0, 6.0)))
            .collect();
        let points = observe(&truth, &world);
        assert_eq!(points.len(), 5);
        let near = CameraPose {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.06, 0.58, -0.11)),
            position: truth.position + Vector3::new(0.05, -0.02, 0.01),
        };
        let outcome = track_points(&points, &CameraModel::default(), &near, &VoConfig::default())
            .expect("tracked");
        let pose = outcome.pose;
        let (rot_err, pos_err) = pose_error(&pose, &truth);
        assert!(rot_err < 1e-6 && pos_err < 1e-6, "{rot_err} {pos_err}");
    }

    #[test]
    fn refinement_cost_is_monotone_nonincreasing() {
        let truth = truth_pose();
        let world: Vec<Vector3<f64>> = scene_points(30, 9)
            .into_iter()
            .map(|p| truth.position + truth.rotation * (p + Vector3::new(0.0, 0.0, 6.0)))
            .collect();
        let mut points = observe(&truth, &world);
        // Perturb observations so the solver has real work to do.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for p in &mut points {
            p.observed.x += rng.gen_range(-1e-3..1e-3);
            p.observed.y += rng.gen_range(-1e-3..1e-3);
        }
        let rough = CameraPose {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.0, 0.5, 0.0)),
            position: truth.position + Vector3::new(0.3, 0.2, -0.1),
        };
        let initial = WorldToCamera::from_camera_pose(&rough);
        let (_, report) = refine_pose(initial, &points, &VoConfig::default());
        assert!(report.cost_history.len() > 1);
        for pair in report.cost_history.windows(2) {
            assert!(pair[1] <= pair[0], "cost increased: {pair:?}");
        }
    }

    #[test]
    fn high_residual_is_tracking_lost() {
        let truth = truth_pose();
        let world: Vec<Vector3<f64>> = scene_points(12, 11)
            .into_iter()
            .map(|p| truth.position + truth.rotation * (p + Vector3::new(0.0, 0.0, 6.0)))
            .collect();
        let mut points = observe(&truth, &world);
        // Scramble every observation: no pose explains any consistent subset.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for p in points.iter_mut() {
            p.observed.x = rng.gen_range(-0.5..0.5);
            p.observed.y = rng.gen_range(-0.5..0.5);
        }
        let err = track_points(&points, &CameraModel::default(), &truth, &VoConfig::default())
            .unwrap_err();
        assert!(matches!(err, VoError::TrackingLost(_)), "{err}");
    }
}

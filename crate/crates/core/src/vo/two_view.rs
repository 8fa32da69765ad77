//! Two-view bootstrap: normalized eight-point essential matrix (direct or
//! RANSAC), four-way decomposition resolved by cheirality, and linear
//! two-view triangulation.
//!
//! Conventions: correspondences are normalized image coordinates; the
//! relative pose maps frame-a camera coordinates to frame-b via
//! `X_b = R * X_a + t`, with `t` normalized to unit length (the monocular
//! scale gauge). Triangulated points live in the frame-a camera frame.

use super::{CameraPose, VoConfig, VoError};
use crate::render::{CameraModel, Frame};
use nalgebra::{DMatrix, Matrix3, Matrix4, Rotation3, RowVector4, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// One landmark seen in both initialization frames, in normalized
/// coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub id: u64,
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
}

/// Result of the two-view bootstrap.
#[derive(Debug, Clone)]
pub struct TwoViewInit {
    /// Relative rotation: `X_b = rotation * X_a + translation`.
    pub rotation: Rotation3<f64>,
    /// Unit-length relative translation.
    pub translation: Vector3<f64>,
    /// The essential matrix the pose was decomposed from.
    pub essential: Matrix3<f64>,
    /// Ids of epipolar inliers.
    pub inlier_ids: Vec<u64>,
    /// Triangulated landmarks in the frame-a camera frame, cheirality
    /// verified in both views.
    pub points: BTreeMap<u64, Vector3<f64>>,
}

/// Landmarks observed in both frames, sorted by id.
pub fn shared_correspondences(
    frame_a: &Frame,
    frame_b: &Frame,
    camera: &CameraModel,
) -> Vec<Correspondence> {
    let index_b: BTreeMap<u64, (f64, f64)> = frame_b
        .observations
        .iter()
        .map(|&(id, u, v)| (id, (u, v)))
        .collect();
    let mut out: Vec<Correspondence> = frame_a
        .observations
        .iter()
        .filter_map(|&(id, ua, va)| {
            index_b.get(&id).map(|&(ub, vb)| {
                let (ax, ay) = camera.normalize(ua, va);
                let (bx, by) = camera.normalize(ub, vb);
                Correspondence {
                    id,
                    a: Vector2::new(ax, ay),
                    b: Vector2::new(bx, by),
                }
            })
        })
        .collect();
    out.sort_by_key(|c| c.id);
    out
}

fn bearing(p: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0).normalize()
}

/// Median angle between the raw bearing rays of the correspondences, radians.
/// Zero-baseline pairs score near zero regardless of noise; any real motion
/// (rotation or translation) scores higher. Cheap prefilter only: camera
/// rotation inflates it, so it says nothing about triangulability.
pub fn median_bearing_disparity(correspondences: &[Correspondence]) -> f64 {
    if correspondences.is_empty() {
        return 0.0;
    }
    let mut angles: Vec<f64> = correspondences
        .iter()
        .map(|c| bearing(&c.a).dot(&bearing(&c.b)).clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles[angles.len() / 2]
}

/// Median triangulation angle of the candidate's points: the angle each
/// point subtends between the two camera centers. This is the
/// rotation-compensated parallax that decides whether the pair can
/// bootstrap a map.
fn median_triangulation_parallax(candidate: &Candidate) -> f64 {
    if candidate.points.is_empty() {
        return 0.0;
    }
    // Camera a sits at the origin of the frame-a coordinates; camera b at
    // -R^T t.
    let center_b = -(candidate.rotation.inverse() * candidate.translation);
    let mut angles: Vec<f64> = candidate
        .points
        .values()
        .map(|p| (-p).angle(&(center_b - p)))
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles[angles.len() / 2]
}

/// Hartley conditioning: translate the centroid to the origin and scale the
/// mean radius to sqrt(2).
fn normalizing_transform(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector2<f64>>() / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0)
}

fn apply_h(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = t * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Normalized eight-point estimate of the essential matrix over the given
/// correspondences (at least 8), with the essential structure (two equal
/// singular values, one zero) enforced.
pub fn eight_point(correspondences: &[Correspondence]) -> Result<Matrix3<f64>, VoError> {
    let n = correspondences.len();
    if n < 8 {
        return Err(VoError::InsufficientCorrespondences { need: 8, got: n });
    }
    let pts_a: Vec<Vector2<f64>> = correspondences.iter().map(|c| c.a).collect();
    let pts_b: Vec<Vector2<f64>> = correspondences.iter().map(|c| c.b).collect();
    let t_a = normalizing_transform(&pts_a);
    let t_b = normalizing_transform(&pts_b);

    let mut design = DMatrix::<f64>::zeros(n, 9);
    for (i, c) in correspondences.iter().enumerate() {
        let a = apply_h(&t_a, &c.a);
        let b = apply_h(&t_b, &c.b);
        design[(i, 0)] = b.x * a.x;
        design[(i, 1)] = b.x * a.y;
        design[(i, 2)] = b.x;
        design[(i, 3)] = b.y * a.x;
        design[(i, 4)] = b.y * a.y;
        design[(i, 5)] = b.y;
        design[(i, 6)] = a.x;
        design[(i, 7)] = a.y;
        design[(i, 8)] = 1.0;
    }
    // Null direction via the normal matrix: a thin SVD of the n x 9 design
    // omits the null space entirely in the minimal n = 8 case.
    let normal = design.transpose() * &design;
    let eigen = nalgebra::SymmetricEigen::new(normal);
    let mut smallest = 0;
    for i in 1..9 {
        if eigen.eigenvalues[i] < eigen.eigenvalues[smallest] {
            smallest = i;
        }
    }
    let e = eigen.eigenvectors.column(smallest);
    let e_hat = Matrix3::new(e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8]);
    let denorm = t_b.transpose() * e_hat * t_a;

    // Project onto the essential manifold.
    let svd = denorm.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| VoError::Degenerate("essential projection failed".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| VoError::Degenerate("essential projection failed".into()))?;
    let fixed = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * v_t;
    Ok(fixed)
}

/// First-order (Sampson) squared epipolar distance in normalized units.
pub fn sampson_error(e: &Matrix3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let d = sampson_residual(e, a, b);
    d * d
}

/// Signed first-order epipolar distance, the residual the relative-pose
/// refinement minimizes.
fn sampson_residual(e: &Matrix3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ah = Vector3::new(a.x, a.y, 1.0);
    let bh = Vector3::new(b.x, b.y, 1.0);
    let ea = e * ah;
    let etb = e.transpose() * bh;
    let num = bh.dot(&ea);
    let denom = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    num / denom.sqrt()
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gauss-Newton refinement of the relative pose on the summed squared
/// Sampson error, with the translation constrained to the unit sphere.
///
/// The linear eight-point estimate is algebraically biased when the
/// disparity field is rotation-dominated (small baseline); minimizing the
/// geometric first-order error removes most of that bias. Jacobians are
/// numeric: 5 parameters, a handful of correspondences, desk scale.
fn refine_relative_pose(
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
    correspondences: &[Correspondence],
    iterations: usize,
) -> (Rotation3<f64>, Vector3<f64>) {
    let residuals = |r: &Rotation3<f64>, t: &Vector3<f64>| -> Vec<f64> {
        let e = skew(t) * r.matrix();
        correspondences
            .iter()
            .map(|c| sampson_residual(&e, &c.a, &c.b))
            .collect()
    };
    let cost_of = |f: &[f64]| f.iter().map(|r| r * r).sum::<f64>();

    let mut r = rotation;
    let mut t = translation.normalize();
    let mut cost = cost_of(&residuals(&r, &t));
    let n = correspondences.len();
    let eps = 1e-7;

    for _ in 0..iterations {
        // Tangent basis of the unit sphere at t.
        let anchor = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = t.cross(&anchor).normalize();
        let e2 = t.cross(&e1).normalize();

        let apply = |delta: &nalgebra::SVector<f64, 5>| -> (Rotation3<f64>, Vector3<f64>) {
            let dr = Rotation3::from_scaled_axis(Vector3::new(delta[0], delta[1], delta[2]));
            let rt = dr * r;
            let tt = (t + delta[3] * e1 + delta[4] * e2).normalize();
            (rt, tt)
        };

        let base = residuals(&r, &t);
        let mut jac = DMatrix::<f64>::zeros(n, 5);
        for p in 0..5 {
            let mut d = nalgebra::SVector::<f64, 5>::zeros();
            d[p] = eps;
            let (rp, tp) = apply(&d);
            let plus = residuals(&rp, &tp);
            d[p] = -eps;
            let (rm, tm) = apply(&d);
            let minus = residuals(&rm, &tm);
            for i in 0..n {
                jac[(i, p)] = (plus[i] - minus[i]) / (2.0 * eps);
            }
        }
        let jt = jac.transpose();
        let h = &jt * &jac + DMatrix::identity(5, 5) * 1e-12;
        let g = &jt * DMatrix::from_column_slice(n, 1, &base);
        let Some(delta) = h.lu().solve(&(-&g)) else {
            break;
        };
        let mut step = nalgebra::SVector::<f64, 5>::from_iterator(delta.iter().copied());

        let mut accepted = false;
        for _ in 0..16 {
            let (rc, tc) = apply(&step);
            let c = cost_of(&residuals(&rc, &tc));
            if c <= cost {
                let improvement = cost - c;
                r = rc;
                t = tc;
                cost = c;
                accepted = true;
                if improvement < 1e-18 {
                    return (r, t);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.norm() < 1e-12 {
            break;
        }
    }
    (r, t)
}

/// Algebraic epipolar residual `|b^T E a|` with E scaled to unit Frobenius
/// norm, over homogeneous normalized coordinates.
pub fn epipolar_residual(e: &Matrix3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let scale = e.norm();
    let ah = Vector3::new(a.x, a.y, 1.0);
    let bh = Vector3::new(b.x, b.y, 1.0);
    (bh.dot(&(e * ah)) / scale).abs()
}

/// Essential estimation with 8-point RANSAC; returns the refit matrix and
/// the inlier index set. Deterministic for a fixed seed.
fn eight_point_ransac(
    correspondences: &[Correspondence],
    threshold_norm: f64,
    iterations: usize,
    seed: u64,
) -> Result<(Matrix3<f64>, Vec<usize>), VoError> {
    let n = correspondences.len();
    if n < 8 {
        return Err(VoError::InsufficientCorrespondences { need: 8, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thresh_sq = threshold_norm * threshold_norm;
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for _ in 0..iterations {
        let pick = rand::seq::index::sample(&mut rng, n, 8).into_vec();
        let sample: Vec<Correspondence> = pick.iter().map(|&i| correspondences[i]).collect();
        let Ok(e) = eight_point(&sample) else {
            continue;
        };
        let mut inliers = Vec::new();
        let mut score = 0.0;
        for (i, c) in correspondences.iter().enumerate() {
            let err = sampson_error(&e, &c.a, &c.b);
            if err < thresh_sq {
                inliers.push(i);
                score += err;
            }
        }
        let better = match &best {
            None => true,
            Some((count, best_score, _)) => {
                inliers.len() > *count || (inliers.len() == *count && score < *best_score)
            }
        };
        if better {
            best = Some((inliers.len(), score, inliers));
        }
    }
    let (_, _, mut inliers) =
        best.ok_or_else(|| VoError::Degenerate("ransac found no model".into()))?;
    if inliers.len() < 8 {
        return Err(VoError::InsufficientCorrespondences {
            need: 8,
            got: inliers.len(),
        });
    }
    // Local optimization: refitting on the consensus set usually yields a
    // better model whose consensus is larger; iterate until it stops growing.
    let mut model = None;
    for _ in 0..4 {
        let subset: Vec<Correspondence> = inliers.iter().map(|&i| correspondences[i]).collect();
        let e = eight_point(&subset)?;
        let recount: Vec<usize> = correspondences
            .iter()
            .enumerate()
            .filter(|(_, c)| sampson_error(&e, &c.a, &c.b) < thresh_sq)
            .map(|(i, _)| i)
            .collect();
        let grew = recount.len() > inliers.len();
        model = Some(e);
        if grew {
            inliers = recount;
        } else {
            break;
        }
    }
    Ok((model.expect("at least one refit"), inliers))
}

/// Linear (DLT) two-view triangulation in the frame-a camera frame for a
/// relative pose `X_b = R X_a + t`. `None` when the point is numerically
/// at infinity or fails cheirality in either view.
pub fn triangulate_relative(
    rotation: &Rotation3<f64>,
    translation: &Vector3<f64>,
    a: &Vector2<f64>,
    b: &Vector2<f64>,
) -> Option<Vector3<f64>> {
    let r = rotation.matrix();
    let p_b = [
        RowVector4::new(r[(0, 0)], r[(0, 1)], r[(0, 2)], translation.x),
        RowVector4::new(r[(1, 0)], r[(1, 1)], r[(1, 2)], translation.y),
        RowVector4::new(r[(2, 0)], r[(2, 1)], r[(2, 2)], translation.z),
    ];
    let mut design = Matrix4::<f64>::zeros();
    design.set_row(0, &RowVector4::new(-1.0, 0.0, a.x, 0.0));
    design.set_row(1, &RowVector4::new(0.0, -1.0, a.y, 0.0));
    design.set_row(2, &(b.x * p_b[2] - p_b[0]));
    design.set_row(3, &(b.y * p_b[2] - p_b[1]));

    let svd = design.svd(false, true);
    let v_t = svd.v_t?;
    let h = v_t.row(3);
    if h[3].abs() < 1e-12 * h.norm() {
        return None;
    }
    let point = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    if !point.iter().all(|v| v.is_finite()) {
        return None;
    }
    let in_b = rotation * point + translation;
    if point.z > 1e-9 && in_b.z > 1e-9 {
        Some(point)
    } else {
        None
    }
}

/// Triangulates from two arbitrary camera poses in the gauge frame. Used for
/// landmarks that become visible after initialization.
pub fn triangulate_from_poses(
    pose_a: &CameraPose,
    a: &Vector2<f64>,
    pose_b: &CameraPose,
    b: &Vector2<f64>,
) -> Option<Vector3<f64>> {
    // Relative pose a->b, then map the frame-a point back to the gauge.
    let rotation = pose_b.rotation.inverse() * pose_a.rotation;
    let translation = pose_b.rotation.inverse() * (pose_a.position - pose_b.position);
    let point_a = triangulate_relative(&rotation, &translation, a, b)?;
    Some(pose_a.rotation * point_a + pose_a.position)
}

struct Candidate {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
    points: BTreeMap<u64, Vector3<f64>>,
}

/// Resolves the four-way essential decomposition by counting points that
/// triangulate in front of both cameras.
fn decompose_by_cheirality(
    essential: &Matrix3<f64>,
    correspondences: &[Correspondence],
) -> Result<Candidate, VoError> {
    let svd = essential.svd(true, true);
    let mut u = svd
        .u
        .ok_or_else(|| VoError::Degenerate("essential svd failed".into()))?;
    let mut v_t = svd
        .v_t
        .ok_or_else(|| VoError::Degenerate("essential svd failed".into()))?;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = Rotation3::from_matrix_unchecked(u * w * v_t);
    let r2 = Rotation3::from_matrix_unchecked(u * w.transpose() * v_t);
    let t = Vector3::new(u[(0, 2)], u[(1, 2)], u[(2, 2)]).normalize();

    let mut ranked: Vec<Candidate> = [(r1, t), (r1, -t), (r2, t), (r2, -t)]
        .into_iter()
        .map(|(rotation, translation)| {
            let points: BTreeMap<u64, Vector3<f64>> = correspondences
                .iter()
                .filter_map(|c| {
                    triangulate_relative(&rotation, &translation, &c.a, &c.b)
                        .map(|p| (c.id, p))
                })
                .collect();
            Candidate {
                rotation,
                translation,
                points,
            }
        })
        .collect();
    ranked.sort_by_key(|c| std::cmp::Reverse(c.points.len()));

    let best_len = ranked[0].points.len();
    let second_len = ranked[1].points.len();
    // Distant or near-epipole points can pass the depth test under a wrong
    // hypothesis; demand a clear winner rather than an outright sweep.
    if best_len < 8 || second_len * 4 > best_len * 3 {
        return Err(VoError::CheiralityAmbiguous);
    }
    Ok(ranked.into_iter().next().unwrap())
}

/// Two-view bootstrap of the pose estimator: estimates the essential matrix
/// over the shared landmarks (RANSAC when the config says so), decomposes it,
/// and triangulates the inliers.
pub fn initialize_two_view(
    frame_a: &Frame,
    frame_b: &Frame,
    camera: &CameraModel,
    cfg: &VoConfig,
) -> Result<TwoViewInit, VoError> {
    let correspondences = shared_correspondences(frame_a, frame_b, camera);
    if correspondences.len() < 8 {
        return Err(VoError::InsufficientCorrespondences {
            need: 8,
            got: correspondences.len(),
        });
    }
    let threshold = cfg.parallax_threshold_deg.to_radians();
    // Static pairs never reach the raw disparity bar; rejecting them here
    // avoids solving a degenerate epipolar system. Real parallax is checked
    // after decomposition, where rotation has been compensated.
    let raw = median_bearing_disparity(&correspondences);
    if raw < threshold / 2.0 {
        return Err(VoError::InsufficientParallax {
            median_deg: raw.to_degrees(),
            threshold_deg: cfg.parallax_threshold_deg,
        });
    }

    let (essential, inlier_idx) = if cfg.use_ransac() {
        let threshold_norm = cfg.ransac_threshold_px / camera.fx;
        eight_point_ransac(
            &correspondences,
            threshold_norm,
            cfg.ransac_iterations,
            cfg.ransac_seed,
        )?
    } else {
        let e = eight_point(&correspondences)?;
        (e, (0..correspondences.len()).collect())
    };
    let mut inliers: Vec<Correspondence> =
        inlier_idx.iter().map(|&i| correspondences[i]).collect();

    let candidate = decompose_by_cheirality(&essential, &inliers)?;
    let (mut rotation, mut translation) =
        refine_relative_pose(candidate.rotation, candidate.translation, &inliers, 20);

    // The geometrically refined pose usually explains more correspondences
    // than the minimal-sample consensus did; fold them in and re-refine.
    // Expansion admits the full noise tail (3 sigma of the two-image Sampson
    // residual): clipping it at the tight RANSAC threshold would bias the
    // final estimate.
    if cfg.use_ransac() && inliers.len() < correspondences.len() {
        let noise_tail = 3.0 * std::f64::consts::SQRT_2 * cfg.noise_sigma_px;
        let expand_px = cfg.ransac_threshold_px.max(noise_tail);
        let thresh_sq = (expand_px / camera.fx).powi(2);
        let e_refined = skew(&translation) * rotation.matrix();
        let expanded: Vec<Correspondence> = correspondences
            .iter()
            .copied()
            .filter(|c| sampson_error(&e_refined, &c.a, &c.b) < thresh_sq)
            .collect();
        if expanded.len() > inliers.len() {
            let (r2, t2) = refine_relative_pose(rotation, translation, &expanded, 20);
            rotation = r2;
            translation = t2;
            inliers = expanded;
        }
    }
    let points: BTreeMap<u64, Vector3<f64>> = inliers
        .iter()
        .filter_map(|c| {
            triangulate_relative(&rotation, &translation, &c.a, &c.b).map(|p| (c.id, p))
        })
        .collect();
    if points.len() < 8 {
        return Err(VoError::CheiralityAmbiguous);
    }
    let refined = Candidate {
        rotation,
        translation,
        points,
    };
    let parallax = median_triangulation_parallax(&refined);
    if parallax < threshold {
        return Err(VoError::InsufficientParallax {
            median_deg: parallax.to_degrees(),
            threshold_deg: cfg.parallax_threshold_deg,
        });
    }
    Ok(TwoViewInit {
        rotation: refined.rotation,
        translation: refined.translation,
        essential: skew(&refined.translation) * refined.rotation.matrix(),
        inlier_ids: inliers.iter().map(|c| c.id).collect(),
        points: refined.points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vo::RobustMode;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Builds two frames by projecting a synthetic point cloud through the
    /// ground-truth relative pose `X_b = R X_a + t`.
    fn synthetic_frames(
        rotation: &Rotation3<f64>,
        translation: &Vector3<f64>,
        camera: &CameraModel,
        count: usize,
    ) -> (Frame, Frame, Vec<Vector3<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut obs_a = Vec::new();
        let mut obs_b = Vec::new();
        let mut points = Vec::new();
        let mut id = 0u64;
        while points.len() < count {
            let p = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(4.0..10.0),
            );
            let q = rotation * p + translation;
            if q.z < 0.5 {
                continue;
            }
            let ua = camera.fx * (p.x / p.z) + camera.cx;
            let va = camera.fy * (p.y / p.z) + camera.cy;
            let ub = camera.fx * (q.x / q.z) + camera.cx;
            let vb = camera.fy * (q.y / q.z) + camera.cy;
            if !(camera.contains(ua, va) && camera.contains(ub, vb)) {
                continue;
            }
            obs_a.push((id, ua, va));
            obs_b.push((id, ub, vb));
            points.push(p);
            id += 1;
        }
        (
            Frame {
                t: 0.0,
                observations: obs_a,
            },
            Frame {
                t: 1.0,
                observations: obs_b,
            },
            points,
        )
    }

    fn direct_cfg() -> VoConfig {
        VoConfig {
            robust: RobustMode::Direct,
            ..VoConfig::default()
        }
    }

    #[test]
    fn recovers_pure_translation_along_x() {
        let camera = CameraModel::default();
        let rotation = Rotation3::identity();
        let translation = Vector3::new(1.0, 0.0, 0.0);
        let (fa, fb, _) = synthetic_frames(&rotation, &translation, &camera, 40);
        let init = initialize_two_view(&fa, &fb, &camera, &direct_cfg()).unwrap();
        assert!(init.rotation.angle() < 1e-6, "{}", init.rotation.angle());
        assert!((init.translation - translation).norm() < 1e-6);
        assert_abs_diff_eq!(init.translation.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(init.points.len(), 40);
    }

    #[test]
    fn recovers_general_motion_and_scene() {
        let camera = CameraModel::default();
        let rotation = Rotation3::from_scaled_axis(Vector3::new(0.05, -0.1, 0.08));
        let translation = Vector3::new(0.6, -0.2, 0.1).normalize();
        let (fa, fb, points) = synthetic_frames(&rotation, &translation, &camera, 60);
        let init = initialize_two_view(&fa, &fb, &camera, &direct_cfg()).unwrap();
        assert!(
            (init.rotation.matrix() - rotation.matrix()).norm() < 1e-6,
            "rotation off"
        );
        assert!((init.translation - translation).norm() < 1e-6);
        for (id, estimated) in &init.points {
            let truth = points[*id as usize];
            assert!((estimated - truth).norm() < 1e-6, "point {id}");
        }
    }

    #[test]
    fn epipolar_residuals_vanish_on_noiseless_input() {
        let camera = CameraModel::default();
        let rotation = Rotation3::from_scaled_axis(Vector3::new(0.0, -0.12, 0.03));
        let translation = Vector3::new(0.3, 0.1, 0.9).normalize();
        let (fa, fb, _) = synthetic_frames(&rotation, &translation, &camera, 50);
        let init = initialize_two_view(&fa, &fb, &camera, &direct_cfg()).unwrap();
        let corrs = shared_correspondences(&fa, &fb, &camera);
        for c in &corrs {
            assert!(epipolar_residual(&init.essential, &c.a, &c.b) < 1e-9);
        }
    }

    #[test]
    fn identical_frames_fail_with_insufficient_parallax() {
        let camera = CameraModel::default();
        let (fa, _, _) = synthetic_frames(
            &Rotation3::identity(),
            &Vector3::new(1.0, 0.0, 0.0),
            &camera,
            30,
        );
        let err = initialize_two_view(&fa, &fa.clone(), &camera, &direct_cfg()).unwrap_err();
        assert!(matches!(err, VoError::InsufficientParallax { .. }), "{err}");
    }

    #[test]
    fn seven_correspondences_are_insufficient() {
        let camera = CameraModel::default();
        let (mut fa, mut fb, _) = synthetic_frames(
            &Rotation3::identity(),
            &Vector3::new(1.0, 0.0, 0.0),
            &camera,
            30,
        );
        fa.observations.truncate(7);
        fb.observations.truncate(20);
        let err = initialize_two_view(&fa, &fb, &camera, &direct_cfg()).unwrap_err();
        assert!(matches!(
            err,
            VoError::InsufficientCorrespondences { got: 7, .. }
        ));
    }

    #[test]
    fn ransac_survives_outliers() {
        let camera = CameraModel::default();
        let rotation = Rotation3::from_scaled_axis(Vector3::new(0.02, -0.06, 0.01));
        let translation = Vector3::new(0.8, 0.1, 0.2).normalize();
        let (fa, mut fb, _) = synthetic_frames(&rotation, &translation, &camera, 60);
        // Corrupt 10% of the b-side observations.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for obs in fb.observations.iter_mut() {
            if rng.gen::<f64>() < 0.10 {
                obs.1 = rng.gen_range(0.0..camera.width as f64);
                obs.2 = rng.gen_range(0.0..camera.height as f64);
            }
        }
        let cfg = VoConfig {
            robust: RobustMode::Ransac,
            ..VoConfig::default()
        };
        let init = initialize_two_view(&fa, &fb, &camera, &cfg).unwrap();
        assert!((init.rotation.matrix() - rotation.matrix()).norm() < 1e-6);
        assert!((init.translation - translation).norm() < 1e-6);
        assert!(init.inlier_ids.len() >= 45);
    }

    #[test]
    fn triangulation_round_trips_known_points() {
        let rotation = Rotation3::from_scaled_axis(Vector3::new(0.1, 0.05, -0.02));
        let translation = Vector3::new(0.4, -0.3, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(2.0..8.0),
            );
            let q = rotation * p + translation;
            if q.z < 0.1 {
                continue;
            }
            let a = Vector2::new(p.x / p.z, p.y / p.z);
            let b = Vector2::new(q.x / q.z, q.y / q.z);
            let back = triangulate_relative(&rotation, &translation, &a, &b).unwrap();
            assert!((back - p).norm() < 1e-9, "{back:?} vs {p:?}");
        }
    }

    #[test]
    fn triangulation_rejects_points_behind_a_camera() {
        let rotation = Rotation3::identity();
        let translation = Vector3::new(1.0, 0.0, 0.0);
        // A point behind both cameras: observations are its antipode rays.
        let p = Vector3::new(0.0, 0.0, -5.0);
        let q = rotation * p + translation;
        let a = Vector2::new(p.x / p.z, p.y / p.z);
        let b = Vector2::new(q.x / q.z, q.y / q.z);
        assert!(triangulate_relative(&rotation, &translation, &a, &b).is_none());
    }

    #[test]
    fn triangulate_from_poses_matches_the_gauge() {
        let pose_a = CameraPose {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.0, 0.2, 0.1)),
            position: Vector3::new(1.0, 2.0, 0.5),
        };
        let pose_b = CameraPose {
            rotation: Rotation3::from_scaled_axis(Vector3::new(0.1, 0.15, 0.05)),
            position: Vector3::new(1.4, 1.8, 0.7),
        };
        // A point down pose_a's optical axis, visible from both.
        let point = pose_a.position + pose_a.rotation * Vector3::new(0.3, -0.2, 5.0);
        let pa = pose_a.world_to_camera(&point);
        let pb = pose_b.world_to_camera(&point);
        assert!(pa.z > 0.0 && pb.z > 0.0, "test point must be visible");
        let a = Vector2::new(pa.x / pa.z, pa.y / pa.z);
        let b = Vector2::new(pb.x / pb.z, pb.y / pb.z);
        let back = triangulate_from_poses(&pose_a, &a, &pose_b, &b).unwrap();
        assert!((back - point).norm() < 1e-9);
    }
}


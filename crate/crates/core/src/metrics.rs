//! Trajectory alignment and comparison: closed-form similarity alignment
//! (Umeyama) and the absolute-trajectory-error report comparing generated,
//! estimated, and executed paths. Monocular odometry output is up to scale,
//! so comparisons against metric trajectories go through sim(3).

use crate::angles::wrap_angle;
use crate::traj::Trajectory;
use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectories do not overlap in time")]
    NoOverlap,
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

/// Scale + rotation + translation; applies as `s * R * p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation,
            translation: -(rotation * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }
}

/// Closed-form least-squares similarity aligning `source` onto `target`:
/// minimizes sum of squared norms of `s * R * p_i + t - q_i`. With
/// `with_scale` false the scale is fixed at 1 (rigid alignment).
pub fn align_umeyama(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    with_scale: bool,
) -> Result<SimilarityTransform, MetricsError> {
    if source.len() != target.len() {
        return Err(MetricsError::Degenerate(format!(
            "point counts differ: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(MetricsError::Degenerate(format!(
            "need at least 3 point pairs, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mean_s: Vector3<f64> = source.iter().sum::<Vector3<f64>>() * inv_n;
    let mean_t: Vector3<f64> = target.iter().sum::<Vector3<f64>>() * inv_n;

    let mut covariance = Matrix3::zeros();
    let mut var_source = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s - mean_s;
        let dt = t - mean_t;
        covariance += dt * ds.transpose();
        var_source += ds.norm_squared();
    }
    covariance *= inv_n;
    var_source *= inv_n;
    if var_source < 1e-24 {
        return Err(MetricsError::Degenerate(
            "source points are all coincident".to_string(),
        ));
    }

    let svd = covariance.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| MetricsError::Degenerate("svd failed".to_string()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| MetricsError::Degenerate("svd failed".to_string()))?;
    // Standard reflection correction: flip the least-significant axis when
    // the proper-rotation constraint would be violated.
    let d = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = Rotation3::from_matrix_unchecked(u * fix * v_t);

    let scale = if with_scale {
        let sv = svd.singular_values;
        (sv[0] + sv[1] + d * sv[2]) / var_source
    } else {
        1.0
    };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(MetricsError::Degenerate(format!(
            "recovered scale {scale} is not positive"
        )));
    }
    let translation = mean_t - scale * (rotation * mean_s);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Alignment class applied before computing errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    None,
    Se3,
    Sim3,
}

impl std::str::FromStr for AlignMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AlignMode::None),
            "se3" => Ok(AlignMode::Se3),
            "sim3" => Ok(AlignMode::Sim3),
            other => Err(format!("unknown align mode `{other}` (none|se3|sim3)")),
        }
    }
}

/// A trajectory reduced to what comparison needs: timestamps, positions, and
/// unit heading vectors. Headings survive alignment rotations, unlike raw yaw
/// scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSeries {
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub forwards: Vec<Vector3<f64>>,
}

impl From<&Trajectory> for PoseSeries {
    fn from(traj: &Trajectory) -> Self {
        let samples = traj.samples();
        PoseSeries {
            times: samples.iter().map(|p| p.t).collect(),
            positions: samples.iter().map(|p| p.position()).collect(),
            forwards: samples
                .iter()
                .map(|p| Vector3::new(p.yaw.cos(), p.yaw.sin(), 0.0))
                .collect(),
        }
    }
}

impl PoseSeries {
    /// The series carried through a similarity transform (positions mapped,
    /// headings rotated).
    pub fn transformed(&self, transform: &SimilarityTransform) -> PoseSeries {
        PoseSeries {
            times: self.times.clone(),
            positions: self.positions.iter().map(|p| transform.apply(p)).collect(),
            forwards: self
                .forwards
                .iter()
                .map(|f| transform.rotation * *f)
                .collect(),
        }
    }

    /// Linear interpolation at `t`; `None` outside the covered range.
    fn interpolate(&self, t: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.times.first()?;
        let last = *self.times.last()?;
        if t < first - 1e-9 || t > last + 1e-9 {
            return None;
        }
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Some((self.positions[i], self.forwards[i])),
            Err(i) => i,
        };
        if idx == 0 {
            return Some((self.positions[0], self.forwards[0]));
        }
        if idx >= self.times.len() {
            let n = self.times.len() - 1;
            return Some((self.positions[n], self.forwards[n]));
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let frac = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let p = self.positions[idx - 1] + frac * (self.positions[idx] - self.positions[idx - 1]);
        let f = self.forwards[idx - 1] + frac * (self.forwards[idx] - self.forwards[idx - 1]);
        let f = if f.norm() > 1e-12 {
            f / f.norm()
        } else {
            self.forwards[idx - 1]
        };
        Some((p, f))
    }
}

/// Quantitative counterpart of a side-by-side trajectory overlay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryReport {
    /// Root-mean-square position error after alignment, meters.
    pub ate_rmse: f64,
    /// Per-axis position RMSE (x, y, z), meters.
    pub per_axis_rmse: [f64; 3],
    /// RMSE of wrapped yaw differences, radians.
    pub yaw_rmse: f64,
    /// Largest single position error, meters.
    pub max_deviation: f64,
    /// Aligned candidate path length over reference path length.
    pub path_length_ratio: f64,
    /// Number of reference samples the candidate covered.
    pub matched_samples: usize,
    pub align_mode: AlignMode,
    /// The transform applied to the candidate before computing errors.
    pub alignment: SimilarityTransform,
}

/// Time-associates the candidate to the reference grid, aligns it with the
/// requested mode, and reports position and yaw error statistics.
pub fn compare(
    reference: &Trajectory,
    candidate: &PoseSeries,
    mode: AlignMode,
) -> Result<TrajectoryReport, MetricsError> {
    let mut ref_pos = Vec::new();
    let mut ref_yaw = Vec::new();
    let mut cand_pos = Vec::new();
    let mut cand_fwd = Vec::new();
    for pose in reference.samples() {
        if let Some((p, f)) = candidate.interpolate(pose.t) {
            ref_pos.push(pose.position());
            ref_yaw.push(pose.yaw);
            cand_pos.push(p);
            cand_fwd.push(f);
        }
    }
    if ref_pos.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    let alignment = match mode {
        AlignMode::None => SimilarityTransform::identity(),
        AlignMode::Se3 => align_umeyama(&cand_pos, &ref_pos, false)?,
        AlignMode::Sim3 => align_umeyama(&cand_pos, &ref_pos, true)?,
    };

    let n = ref_pos.len();
    let mut sq_sum = 0.0;
    let mut axis_sq = [0.0f64; 3];
    let mut yaw_sq = 0.0;
    let mut max_dev = 0.0f64;
    let mut cand_len = 0.0;
    let mut ref_len = 0.0;
    let mut prev_cand: Option<Vector3<f64>> = None;
    let mut prev_ref: Option<Vector3<f64>> = None;
    for i in 0..n {
        let aligned = alignment.apply(&cand_pos[i]);
        let err = ref_pos[i] - aligned;
        sq_sum += err.norm_squared();
        for a in 0..3 {
            axis_sq[a] += err[a] * err[a];
        }
        max_dev = max_dev.max(err.norm());
        let fwd = alignment.rotation * cand_fwd[i];
        let cand_yaw = fwd.y.atan2(fwd.x);
        let dyaw = wrap_angle(ref_yaw[i] - cand_yaw);
        yaw_sq += dyaw * dyaw;
        if let Some(prev) = prev_cand {
            cand_len += (aligned - prev).norm();
        }
        if let Some(prev) = prev_ref {
            ref_len += (ref_pos[i] - prev).norm();
        }
        prev_cand = Some(aligned);
        prev_ref = Some(ref_pos[i]);
    }
    let inv_n = 1.0 / n as f64;
    let path_length_ratio = if ref_len > 0.0 { cand_len / ref_len } else { 1.0 };
    Ok(TrajectoryReport {
        ate_rmse: (sq_sum * inv_n).sqrt(),
        per_axis_rmse: [
            (axis_sq[0] * inv_n).sqrt(),
            (axis_sq[1] * inv_n).sqrt(),
            (axis_sq[2] * inv_n).sqrt(),
        ],
        yaw_rmse: (yaw_sq * inv_n).sqrt(),
        max_deviation: max_dev,
        path_length_ratio,
        matched_samples: n,
        align_mode: mode,
        alignment,
    })
}

#[cfg(test)]
mod tests;

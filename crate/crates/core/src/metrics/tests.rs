use super::*;
use crate::grammar::parse;
use crate::traj::{synthesize, Pose};
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            )
        })
        .collect()
}

fn random_transform(rng: &mut ChaCha8Rng, with_scale: bool) -> SimilarityTransform {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let angle = rng.gen_range(-PI..PI);
    let rotation = if axis.norm() > 1e-6 {
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
    } else {
        Rotation3::identity()
    };
    SimilarityTransform {
        scale: if with_scale { rng.gen_range(0.1..10.0) } else { 1.0 },
        rotation,
        translation: Vector3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ),
    }
}

fn transform_error(a: &SimilarityTransform, b: &SimilarityTransform) -> f64 {
    // Frobenius distance between rotation matrices avoids the acos noise
    // floor of the angle metric near identity.
    let rot = (a.rotation.matrix() - b.rotation.matrix()).norm();
    let trans = (a.translation - b.translation).norm();
    let scale = (a.scale - b.scale).abs();
    rot.max(trans).max(scale)
}

#[test]
fn identity_alignment_recovers_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points = random_points(&mut rng, 20);
    let t = align_umeyama(&points, &points, true).unwrap();
    assert!(transform_error(&t, &SimilarityTransform::identity()) < 1e-12);
}

#[test]
fn recovers_a_constructed_similarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let source = random_points(&mut rng, 30);
    let truth = SimilarityTransform {
        scale: 2.0,
        rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
        translation: Vector3::new(1.0, 0.0, 0.0),
    };
    let target: Vec<_> = source.iter().map(|p| truth.apply(p)).collect();
    let recovered = align_umeyama(&source, &target, true).unwrap();
    assert!(transform_error(&recovered, &truth) < 1e-9);
}

#[test]
fn two_points_is_a_precondition_error() {
    let pts = vec![Vector3::zeros(), Vector3::x()];
    assert!(matches!(
        align_umeyama(&pts, &pts, true),
        Err(MetricsError::Degenerate(_))
    ));
}

#[test]
fn coincident_points_are_degenerate() {
    let pts = vec![Vector3::new(1.0, 2.0, 3.0); 10];
    assert!(matches!(
        align_umeyama(&pts, &pts, true),
        Err(MetricsError::Degenerate(_))
    ));
}

#[test]
fn hundred_random_instances_recover_to_1e9() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..100 {
        let with_scale = case % 2 == 0;
        let source = random_points(&mut rng, 12);
        let truth = random_transform(&mut rng, with_scale);
        let target: Vec<_> = source.iter().map(|p| truth.apply(p)).collect();
        let recovered = align_umeyama(&source, &target, with_scale).unwrap();
        let err = transform_error(&recovered, &truth);
        assert!(err < 1e-9, "case {case}: error {err}");
    }
}

#[test]
fn aligning_transformed_points_back_recovers_the_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points = random_points(&mut rng, 15);
    let truth = random_transform(&mut rng, true);
    let moved: Vec<_> = points.iter().map(|p| truth.apply(p)).collect();
    let recovered = align_umeyama(&moved, &points, true).unwrap();
    assert!(transform_error(&recovered, &truth.inverse()) < 1e-9);
}

#[test]
fn inverse_and_compose_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = random_transform(&mut rng, true);
    let id = t.compose(&t.inverse());
    assert!(transform_error(&id, &SimilarityTransform::identity()) < 1e-12);
    let p = Vector3::new(0.3, -0.7, 2.0);
    let q = t.inverse().apply(&t.apply(&p));
    assert!((p - q).norm() < 1e-12);
}

fn orbit_reference() -> Trajectory {
    let plan = parse("target(0,0,1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s").unwrap();
    synthesize(&plan, &Pose::new(0.0, 3.0, 0.0, 1.0, PI), 0.05).unwrap()
}

#[test]
fn comparing_a_trajectory_with_itself_is_the_zero_report() {
    let traj = orbit_reference();
    let report = compare(&traj, &PoseSeries::from(&traj), AlignMode::None).unwrap();
    assert_eq!(report.matched_samples, traj.len());
    assert!(report.ate_rmse < 1e-12);
    assert!(report.yaw_rmse < 1e-12);
    assert!(report.max_deviation < 1e-12);
    assert_abs_diff_eq!(report.path_length_ratio, 1.0, epsilon = 1e-12);
}

#[test]
fn translation_shows_up_unaligned_and_vanishes_under_se3() {
    let traj = orbit_reference();
    let mut series = PoseSeries::from(&traj);
    for p in &mut series.positions {
        p.x += 1.0;
    }
    let raw = compare(&traj, &series, AlignMode::None).unwrap();
    assert_abs_diff_eq!(raw.ate_rmse, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(raw.max_deviation, 1.0, epsilon = 1e-12);
    let aligned = compare(&traj, &series, AlignMode::Se3).unwrap();
    assert!(aligned.ate_rmse < 1e-12, "{}", aligned.ate_rmse);
}

#[test]
fn aligned_ate_is_invariant_under_rigid_and_similarity_motions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let traj = orbit_reference();
    let base = PoseSeries::from(&traj);
    let baseline_se3 = compare(&traj, &base, AlignMode::Se3).unwrap().ate_rmse;
    let baseline_sim3 = compare(&traj, &base, AlignMode::Sim3).unwrap().ate_rmse;

    for _ in 0..5 {
        let rigid = random_transform(&mut rng, false);
        let mut moved = base.clone();
        for p in &mut moved.positions {
            *p = rigid.apply(p);
        }
        for f in &mut moved.forwards {
            *f = rigid.rotation * *f;
        }
        let r = compare(&traj, &moved, AlignMode::Se3).unwrap();
        assert!((r.ate_rmse - baseline_se3).abs() < 1e-9, "{}", r.ate_rmse);

        let sim = random_transform(&mut rng, true);
        let mut scaled = base.clone();
        for p in &mut scaled.positions {
            *p = sim.apply(p);
        }
        for f in &mut scaled.forwards {
            *f = sim.rotation * *f;
        }
        let r = compare(&traj, &scaled, AlignMode::Sim3).unwrap();
        assert!((r.ate_rmse - baseline_sim3).abs() < 1e-9, "{}", r.ate_rmse);
    }
}

#[test]
fn yaw_metric_ignores_whole_turns() {
    let traj = orbit_reference();
    // Poses constructed with yaw + 2pi wrap back to the same stored heading,
    // so the report must be unchanged.
    let shifted_samples: Vec<Pose> = traj
        .samples()
        .iter()
        .map(|p| Pose::new(p.t, p.x, p.y, p.z, p.yaw + std::f64::consts::TAU))
        .collect();
    let shifted = Trajectory::from_samples(traj.dt(), shifted_samples).unwrap();
    let a = compare(&traj, &PoseSeries::from(&traj), AlignMode::None).unwrap();
    let b = compare(&traj, &PoseSeries::from(&shifted), AlignMode::None).unwrap();
    assert!((a.yaw_rmse - b.yaw_rmse).abs() < 1e-9);
}

#[test]
fn disjoint_time_ranges_are_no_overlap() {
    let traj = orbit_reference();
    let mut series = PoseSeries::from(&traj);
    for t in &mut series.times {
        *t += 1000.0;
    }
    assert!(matches!(
        compare(&traj, &series, AlignMode::None),
        Err(MetricsError::NoOverlap)
    ));
}

#[test]
fn candidate_on_a_different_grid_is_interpolated() {
    let traj = orbit_reference();
    let dense = traj.resample(0.025).unwrap();
    let report = compare(&traj, &PoseSeries::from(&dense), AlignMode::None).unwrap();
    assert!(report.ate_rmse < 1e-9);
    let coarse = traj.resample(0.1).unwrap();
    let report = compare(&traj, &PoseSeries::from(&coarse), AlignMode::None).unwrap();
    // Linear interpolation chords a circular arc: small but nonzero error.
    assert!(report.ate_rmse < 5e-3, "{}", report.ate_rmse);
}

#[test]
fn report_serializes_to_json() {
    let traj = orbit_reference();
    let report = compare(&traj, &PoseSeries::from(&traj), AlignMode::Sim3).unwrap();
    let json = serde_json::to_string_pretty(&report).unwrap();
    assert!(json.contains("ate_rmse"));
    assert!(json.contains("sim3"));
    let back: TrajectoryReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.matched_samples, report.matched_samples);
}


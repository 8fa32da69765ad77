use super::*;
use crate::angles::wrap_angle;
use crate::grammar::parse;
use approx::assert_abs_diff_eq;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

fn orbit_plan() -> ShotPlan {
    parse("target(0,0,1); orbit(radius=3, speed=30deg/s, dir=ccw) for 12s").unwrap()
}

fn start_on_circle() -> Pose {
    Pose::new(0.0, 3.0, 0.0, 1.0, PI)
}

#[test]
fn orbit_quarter_circle_and_look_at_yaw() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    assert_eq!(traj.len(), 241);
    let at_3s = traj.samples()[60];
    assert_abs_diff_eq!(at_3s.t, 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(at_3s.x, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(at_3s.y, 3.0, epsilon = 1e-9);
    assert_abs_diff_eq!(at_3s.z, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(at_3s.yaw, -FRAC_PI_2, epsilon = 1e-9);
}

#[test]
fn orbit_standoff_is_exact_and_yaw_locks_on_target() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    for pose in traj.samples() {
        let dist = pose.x.hypot(pose.y);
        assert!((dist - 3.0).abs() < 1e-9, "standoff {dist} at t={}", pose.t);
        let look = (0.0 - pose.y).atan2(0.0 - pose.x);
        assert!(
            wrap_angle(pose.yaw - look).abs() < 1e-9,
            "yaw off target at t={}",
            pose.t
        );
    }
}

#[test]
fn orbit_interior_speed_matches_r_omega_to_dt_squared() {
    for &dt in &[0.05, 0.1, 0.02] {
        let traj = synthesize(&orbit_plan(), &start_on_circle(), dt).unwrap();
        let expected = 3.0 * FRAC_PI_6;
        for i in 1..traj.len() - 1 {
            let err = (traj.speeds()[i] - expected).abs();
            assert!(err < 0.1 * dt * dt, "dt={dt} i={i} err={err}");
        }
    }
}

#[test]
fn orbit_with_climb_raises_z_linearly() {
    let plan =
        parse("target(0,0,1); orbit(radius=3, speed=30deg/s, dir=cw, climb=0.5) for 6s").unwrap();
    let traj = synthesize(&plan, &start_on_circle(), 0.05).unwrap();
    let last = traj.samples().last().unwrap();
    assert_abs_diff_eq!(last.z, 1.0 + 0.5 * 6.0, epsilon = 1e-9);
}

#[test]
fn hold_keeps_the_start_pose_exactly() {
    let plan = parse("target(0,0,1); hold for 5s").unwrap();
    let start = Pose::new(0.0, 2.0, 1.0, 1.5, 0.3);
    let traj = synthesize(&plan, &start, 0.05).unwrap();
    for pose in traj.samples() {
        assert_eq!((pose.x, pose.y, pose.z, pose.yaw), (2.0, 1.0, 1.5, 0.3));
    }
    assert!(traj.speeds().iter().all(|&v| v == 0.0));
}

#[test]
fn dolly_starting_inside_stop_distance_is_infeasible() {
    let plan = parse("target(0,0,1); dolly(speed=1, stop=0.5) for 3s").unwrap();
    let start = Pose::new(0.0, 0.3, 0.0, 1.0, 0.0);
    match synthesize(&plan, &start, 0.05) {
        Err(TrajError::InfeasiblePlan(msg)) => assert!(msg.contains("stop distance"), "{msg}"),
        other => panic!("expected InfeasiblePlan, got {other:?}"),
    }
}

#[test]
fn dolly_clamps_at_stop_distance() {
    let plan = parse("target(0,0,1); dolly(speed=2, stop=1) for 5s").unwrap();
    let start = Pose::new(0.0, 4.0, 0.0, 1.0, 0.0);
    let traj = synthesize(&plan, &start, 0.05).unwrap();
    let last = traj.samples().last().unwrap();
    let dist = (last.position() - nalgebra::Vector3::new(0.0, 0.0, 1.0)).norm();
    assert_abs_diff_eq!(dist, 1.0, epsilon = 1e-9);
}

#[test]
fn pan_orbit_eases_the_heading_offset_in() {
    let plan =
        parse("target(0,0,1); pan_orbit(radius=3, speed=30deg/s, dir=ccw, pan=60deg) for 8s")
            .unwrap();
    let traj = synthesize(&plan, &start_on_circle(), 0.05).unwrap();
    let look = |p: &Pose| (0.0 - p.y).atan2(0.0 - p.x);
    let first = traj.samples()[0];
    assert_abs_diff_eq!(wrap_angle(first.yaw - look(&first)), 0.0, epsilon = 1e-9);
    let mid = traj.samples()[traj.len() / 2];
    let pan = 60.0 * PI / 180.0;
    assert_abs_diff_eq!(wrap_angle(mid.yaw - look(&mid)), pan / 2.0, epsilon = 1e-9);
    let last = traj.samples().last().unwrap();
    assert_abs_diff_eq!(wrap_angle(last.yaw - look(last)), pan, epsilon = 1e-9);
}

#[test]
fn state_actions_are_zero_on_hold() {
    let plan = parse("target(0,0,1); hold for 2s").unwrap();
    let traj = synthesize(&plan, &Pose::new(0.0, 1.0, 1.0, 1.0, 0.0), 0.05).unwrap();
    for sa in state_action_pairs(&traj).unwrap() {
        assert_eq!(sa.velocity, nalgebra::Vector3::zeros());
        assert_eq!(sa.yaw_rate, 0.0);
    }
}

#[test]
fn state_actions_on_a_straight_line() {
    let dt = 0.1;
    let samples: Vec<Pose> = (0..20)
        .map(|i| Pose::new(i as f64 * dt, i as f64 * dt, 0.0, 2.0, 0.0))
        .collect();
    let traj = Trajectory::from_samples(dt, samples).unwrap();
    for sa in state_action_pairs(&traj).unwrap() {
        assert_abs_diff_eq!(sa.velocity.x, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sa.velocity.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sa.velocity.z, 0.0, epsilon = 1e-12);
        assert_eq!(sa.yaw_rate, 0.0);
    }
}

#[test]
fn state_actions_integrate_back_to_the_next_state() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    let pairs = state_action_pairs(&traj).unwrap();
    assert_eq!(pairs.len(), traj.len() - 1);
    for (i, sa) in pairs.iter().enumerate() {
        let next = traj.samples()[i + 1];
        let integrated = sa.pose.position() + sa.velocity * traj.dt();
        assert!((integrated - next.position()).norm() < 1e-12, "i={i}");
        let yaw = wrap_angle(sa.pose.yaw + sa.yaw_rate * traj.dt());
        assert!(wrap_angle(yaw - next.yaw).abs() < 1e-12, "i={i}");
    }
}

#[test]
fn orbit_yaw_rate_matches_signed_angular_speed() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    let pairs = state_action_pairs(&traj).unwrap();
    for sa in &pairs[1..pairs.len() - 1] {
        assert_abs_diff_eq!(sa.yaw_rate, FRAC_PI_6, epsilon = 1e-9);
    }
}

#[test]
fn too_short_for_state_actions() {
    let traj = Trajectory::from_samples(0.05, vec![Pose::new(0.0, 0.0, 0.0, 0.0, 0.0)]).unwrap();
    assert!(matches!(
        state_action_pairs(&traj),
        Err(TrajError::TooShort { .. })
    ));
}

#[test]
fn resample_to_same_dt_is_identity() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    let again = traj.resample(0.05).unwrap();
    assert_eq!(again, traj);
}

#[test]
fn resample_twice_as_dense_hits_midpoints() {
    let dt = 0.1;
    let samples: Vec<Pose> = (0..10)
        .map(|i| Pose::new(i as f64 * dt, 2.0 * i as f64 * dt, -1.0, 0.5, 0.1))
        .collect();
    let traj = Trajectory::from_samples(dt, samples).unwrap();
    let dense = traj.resample(dt / 2.0).unwrap();
    assert_eq!(dense.len(), 2 * traj.len() - 1);
    for i in 0..traj.len() - 1 {
        let a = traj.samples()[i];
        let b = traj.samples()[i + 1];
        let mid = dense.samples()[2 * i + 1];
        assert_abs_diff_eq!(mid.x, a.x + 0.5 * (b.x - a.x), epsilon = 1e-12);
        assert_abs_diff_eq!(mid.y, a.y + 0.5 * (b.y - a.y), epsilon = 1e-12);
        assert_eq!(dense.samples()[2 * i].x, a.x, "grid points copied exactly");
    }
    assert_eq!(dense.samples().last().unwrap().x, traj.samples().last().unwrap().x);
}

#[test]
fn resample_interpolates_yaw_through_the_seam() {
    let dt = 0.1;
    let samples = vec![
        Pose::new(0.0, 0.0, 0.0, 0.0, PI - 0.1),
        Pose::new(0.1, 1.0, 0.0, 0.0, -(PI - 0.1)),
    ];
    let traj = Trajectory::from_samples(dt, samples).unwrap();
    let dense = traj.resample(0.025).unwrap();
    for pose in &dense.samples()[1..dense.len() - 1] {
        assert!(
            pose.yaw.abs() > PI - 0.1,
            "yaw {} took the long way at t={}",
            pose.yaw,
            pose.t
        );
    }
}

#[test]
fn velocity_stays_continuous_across_blended_joins() {
    // Two-rate orbit: the blend window spreads the tangential speed change so
    // the join's finite-difference acceleration stays comparable to the
    // within-segment centripetal acceleration.
    let plan = parse(
        "target(0,0,1); blend(1s); orbit(radius=3, speed=30deg/s, dir=ccw) for 6s; \
         orbit(radius=3, speed=45deg/s, dir=ccw) for 6s; \
         orbit(radius=3, speed=30deg/s, dir=ccw) for 6s",
    )
    .unwrap();
    let dt = 0.05;
    let traj = synthesize(&plan, &start_on_circle(), dt).unwrap();
    let joins = [6.0, 12.0];
    let half = plan.blend_duration / 2.0;

    let mut max_join = 0.0f64;
    let mut max_within = 0.0f64;
    for i in 1..traj.len() - 1 {
        let t = traj.samples()[i].t;
        let acc = (traj.samples()[i + 1].position() - 2.0 * traj.samples()[i].position()
            + traj.samples()[i - 1].position())
        .norm()
            / (dt * dt);
        let in_window = joins.iter().any(|&j| (t - j).abs() <= half + dt);
        if in_window {
            max_join = max_join.max(acc);
        } else {
            max_within = max_within.max(acc);
        }
    }
    assert!(max_within > 0.5, "orbit acceleration present: {max_within}");
    assert!(
        max_join <= 2.0 * max_within,
        "join acc {max_join} vs within {max_within}"
    );
}

#[test]
fn standoff_deviation_inside_blend_windows_stays_small() {
    let plan = parse(
        "target(0,0,1); dolly(speed=0.125, stop=0.5) for 8s; \
         orbit(radius=3, speed=30deg/s, dir=ccw) for 10s; \
         reveal(speed=0.5, climb=0.2) for 8s",
    )
    .unwrap();
    assert_eq!(plan.blend_duration, 0.5);
    let start = Pose::new(0.0, 4.0, 0.0, 1.0, PI);
    let traj = synthesize(&plan, &start, 0.05).unwrap();
    // Orbit spans [8, 18]; check its interior and both blend windows.
    for pose in traj.samples() {
        let dist = pose.x.hypot(pose.y);
        if pose.t >= 8.25 && pose.t <= 17.75 {
            assert!((dist - 3.0).abs() < 1e-9, "t={} dist={dist}", pose.t);
        } else if (pose.t - 8.0).abs() <= 0.25 || (pose.t - 18.0).abs() <= 0.25 {
            assert!((dist - 3.0).abs() < 0.05 * 3.0, "t={} dist={dist}", pose.t);
        }
    }
}

#[test]
fn segments_chain_from_previous_endpoints() {
    let plan = parse(
        "target(0,0,1); dolly(speed=0.25, stop=1) for 4s; hold for 2s",
    )
    .unwrap();
    let start = Pose::new(0.0, 4.0, 0.0, 1.0, 0.0);
    let traj = synthesize(&plan, &start, 0.05).unwrap();
    // Dolly travels 1 m toward the target, then hold keeps that pose.
    let hold_sample = traj.sample_at(5.5);
    assert_abs_diff_eq!(hold_sample.x, 3.0, epsilon = 1e-9);
    assert_abs_diff_eq!(hold_sample.y, 0.0, epsilon = 1e-12);
}

#[test]
fn csv_round_trip() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    let text = traj.to_csv_string();
    assert!(text.starts_with("t,x,y,z,yaw,v\n"));
    assert!(!text.contains('\r'), "LF line endings only");
    let back = Trajectory::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back.len(), traj.len());
    for (a, b) in traj.samples().iter().zip(back.samples()) {
        assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-7);
        assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-7);
        assert_abs_diff_eq!(a.z, b.z, epsilon = 1e-7);
        assert_abs_diff_eq!(a.yaw, b.yaw, epsilon = 1e-7);
    }
}

#[test]
fn csv_reader_ignores_extra_columns() {
    let text = "t,x,y,z,yaw,v,status\n0,1,2,3,0.1,0,tracked\n0.05,1,2,3,0.1,0,tracked\n";
    let traj = Trajectory::read_csv(text.as_bytes()).unwrap();
    assert_eq!(traj.len(), 2);
    assert_eq!(traj.samples()[1].x, 1.0);
}

#[test]
fn csv_reader_reports_bad_rows_with_line_numbers() {
    let text = "t,x,y,z,yaw,v\n0,1,2,3,0.1,0\n0.05,oops,2,3,0.1,0\n";
    match Trajectory::read_csv(text.as_bytes()) {
        Err(TrajCsvError::Row { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("oops"), "{message}");
        }
        other => panic!("expected row error, got {other:?}"),
    }
}

#[test]
fn csv_reader_rejects_wrong_header() {
    let text = "time,x,y,z,yaw,v\n0,1,2,3,0.1,0\n";
    assert!(matches!(
        Trajectory::read_csv(text.as_bytes()),
        Err(TrajCsvError::Header { .. })
    ));
}

#[test]
fn synthesize_rejects_out_of_range_dt_and_bad_start() {
    let plan = orbit_plan();
    assert!(matches!(
        synthesize(&plan, &start_on_circle(), 0.005),
        Err(TrajError::BadInput(_))
    ));
    assert!(matches!(
        synthesize(&plan, &start_on_circle(), 0.6),
        Err(TrajError::BadInput(_))
    ));
    let bad = Pose::new(0.0, f64::NAN, 0.0, 1.0, 0.0);
    assert!(matches!(
        synthesize(&plan, &bad, 0.05),
        Err(TrajError::BadInput(_))
    ));
}

#[test]
fn sample_at_clamps_to_the_time_range() {
    let traj = synthesize(&orbit_plan(), &start_on_circle(), 0.05).unwrap();
    let before = traj.sample_at(-1.0);
    assert_eq!(
        (before.x, before.y, before.z),
        (traj.samples()[0].x, traj.samples()[0].y, traj.samples()[0].z)
    );
    let after = traj.sample_at(99.0);
    let last = traj.samples().last().unwrap();
    assert_eq!((after.x, after.y), (last.x, last.y));
}

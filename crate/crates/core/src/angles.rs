//! Angle helpers shared across the pipeline. Yaw is a world-frame heading,
//! zero along +x, positive counterclockwise about +z, stored in (-pi, pi].

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (-pi, pi].
///
/// Values already in range are returned bit-unchanged, and the single-period
/// reduction `x - TAU` for x in (pi, 3pi] is exact (Sterbenz), so a reference
/// whose yaw column differs by one representable turn drives the controller
/// identically.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > PI || angle <= -PI {
        let mut r = angle;
        if r.abs() > 64.0 {
            r = r.rem_euclid(TAU);
        }
        while r > PI {
            r -= TAU;
        }
        while r <= -PI {
            r += TAU;
        }
        r
    } else {
        angle
    }
}

/// Shortest signed difference `a - b`, wrapped into (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Shortest-arc interpolation between two angles; `t` in [0, 1].
pub fn lerp_angle(from: f64, to: f64, t: f64) -> f64 {
    wrap_angle(from + t * angle_diff(to, from))
}

/// Smoothstep 3t^2 - 2t^3 with the argument clamped to [0, 1].
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Heading from `(x, y)` toward `(tx, ty)`.
pub fn look_at_yaw(x: f64, y: f64, tx: f64, ty: f64) -> f64 {
    (ty - y).atan2(tx - x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrap_is_identity_in_range() {
        for &a in &[0.0, 1.0, -1.0, PI, -PI + 1e-12, 3.0] {
            assert_eq!(wrap_angle(a).to_bits(), a.to_bits());
        }
    }

    #[test]
    fn wrap_maps_minus_pi_to_pi() {
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn wrap_reduces_multiple_turns() {
        assert_abs_diff_eq!(wrap_angle(5.0 * TAU + 1.0), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(wrap_angle(-7.0 * TAU - 2.0), -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(wrap_angle(1e6), 1e6_f64.rem_euclid(TAU) - TAU, epsilon = 1e-6);
    }

    #[test]
    fn single_turn_reduction_is_exact_for_representable_sums() {
        // Yaws on a coarse dyadic grid make psi + TAU exactly representable,
        // so the reduction must return psi bit-for-bit.
        let step = 2.0_f64.powi(-10);
        for k in -3216_i64..=3216 {
            let psi = (k as f64) * step;
            let shifted = psi + TAU;
            assert_eq!(wrap_angle(shifted).to_bits(), psi.to_bits(), "psi={psi}");
        }
    }

    #[test]
    fn lerp_crosses_seam_the_short_way() {
        let a = PI - 0.1;
        let b = -(PI - 0.1);
        let mid = lerp_angle(a, b, 0.5);
        assert!(mid.abs() > PI - 0.1, "interpolated through the seam: {mid}");
    }

    #[test]
    fn smoothstep_endpoints_and_midpoint() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert_abs_diff_eq!(smoothstep(0.5), 0.5, epsilon = 1e-15);
        assert_eq!(smoothstep(-2.0), 0.0);
        assert_eq!(smoothstep(3.0), 1.0);
    }
}

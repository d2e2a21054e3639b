//! Log geometry: two congruent square cuboids sharing centre and long
//! axis (local x), the second rolled 45° about that axis.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use crate::geometry::Obb;

pub const LOG_LENGTH: f64 = 3.5;
/// Side of each square cuboid.
pub const LOG_SIDE: f64 = SQRT_2 / 10.0;
pub const LOG_MASS: f64 = 112.0;

pub fn half_extents() -> Vector3<f64> {
    Vector3::new(LOG_LENGTH / 2.0, LOG_SIDE / 2.0, LOG_SIDE / 2.0)
}

/// Local poses of the two cuboids.
pub fn cuboid_frames() -> [Isometry3<f64>; 2] {
    [
        Isometry3::identity(),
        Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_4),
        ),
    ]
}

/// Principal inertia of the twin-cuboid log (the roll between the two
/// cuboids leaves a square section's inertia unchanged).
pub fn principal_inertia() -> Vector3<f64> {
    let s2 = LOG_SIDE * LOG_SIDE;
    let l2 = LOG_LENGTH * LOG_LENGTH;
    Vector3::new(
        LOG_MASS * (2.0 * s2) / 12.0,
        LOG_MASS * (l2 + s2) / 12.0,
        LOG_MASS * (l2 + s2) / 12.0,
    )
}

/// World boxes of a log at `pose`.
pub fn world_boxes(pose: &Isometry3<f64>) -> [Obb; 2] {
    let h = half_extents();
    let f = cuboid_frames();
    [Obb::new(&(pose * f[0]), h), Obb::new(&(pose * f[1]), h)]
}

/// Horizontal direction of the long axis, as an angle in [0, π).
pub fn axis_angle(pose: &Isometry3<f64>) -> f64 {
    let x = pose.rotation * Vector3::x();
    canonical_axis_angle(x.y.atan2(x.x))
}

/// Maps an undirected axis angle into [0, π).
pub fn canonical_axis_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(std::f64::consts::PI);
    if a >= std::f64::consts::PI {
        0.0
    } else {
        a
    }
}

/// Lowest world z over the log's cuboid vertices.
pub fn lowest_point(pose: &Isometry3<f64>) -> Vector3<f64> {
    world_boxes(pose)
        .iter()
        .flat_map(|b| b.vertices())
        .min_by(|a, b| a.z.total_cmp(&b.z))
        .expect("boxes have vertices")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert_eq!(LOG_MASS, 112.0);
        assert_eq!(LOG_LENGTH, 3.5);
        assert!((LOG_SIDE - 0.141421356).abs() < 1e-8);
        // circumscribed diameter of the star section is 0.2 m
        assert!((LOG_SIDE * SQRT_2 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn axis_angle_is_flip_invariant() {
        for &yaw in &[0.0, 0.4, 1.7, 3.0, -2.2] {
            let p = Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            );
            let q = Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw + std::f64::consts::PI),
            );
            let (a, b) = (axis_angle(&p), axis_angle(&q));
            assert!((0.0..std::f64::consts::PI).contains(&a));
            let d = (a - b).abs();
            assert!(d < 1e-9 || (d - std::f64::consts::PI).abs() < 1e-9);
        }
    }

    #[test]
    fn boxes_share_centre_and_axis() {
        let pose = Isometry3::translation(1.0, 2.0, 3.0);
        let [a, b] = world_boxes(&pose);
        assert_eq!(a.center, b.center);
        assert!((a.axis(0) - b.axis(0)).norm() < 1e-12);
    }
}

use super::*;
use nalgebra::{Translation3, UnitQuaternion, Vector2};

fn flat(z: f32) -> Heightfield {
    Heightfield::flat(Vector2::new(-4.0, -4.0), 0.125, 65, 65, z)
}

fn log_at(x: f64, y: f64, z: f64, yaw: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(x, y, z),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
    )
}

#[test]
fn free_fall_matches_semi_implicit_euler() {
    let mut w = World::new(SolverConfig::default(), flat(-100.0));
    w.add_log(log_at(0.0, 0.0, 5.0, 0.3));
    let n = 60;
    for _ in 0..n {
        w.step();
    }
    let dt = w.config.dt;
    let expected = 5.0 - 9.81 * dt * dt * (n * (n + 1)) as f64 / 2.0;
    let z = w.bodies[0].pose.translation.vector.z;
    assert!((z - expected).abs() < 1e-9, "{z} vs {expected}");
    assert!((w.bodies[0].linvel.z + 9.81).abs() < 1e-9);
}

#[test]
fn dropped_log_comes_to_rest_on_ground() {
    let mut w = World::new(SolverConfig::default(), flat(0.0));
    w.add_log(log_at(0.0, 0.0, 0.6, 0.2));
    for _ in 0..180 {
        w.step();
    }
    let b = &w.bodies[0];
    assert!(b.speed() < 1e-2, "speed {}", b.speed());
    let low = logs::lowest_point(&b.pose).z;
    assert!(low > -0.02 && low < 0.01, "lowest {low}");
}

fn incline_displacement(slope: f64) -> f64 {
    let t = Heightfield::plane(Vector2::new(-4.0, -4.0), 0.125, 65, 65, 0.0, Vector2::new(slope.tan(), 0.0));
    let mut w = World::new(SolverConfig::default(), t);
    // long axis downhill so rolling about it cannot move the log
    let rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -slope);
    let z = 0.1 * (1.0 + 1e-3) / slope.cos();
    w.add_log(Isometry3::from_parts(Translation3::new(0.0, 0.0, z), rot));
    for _ in 0..30 {
        w.step();
    }
    let p0 = w.bodies[0].pose.translation.vector;
    for _ in 0..90 {
        w.step();
    }
    (w.bodies[0].pose.translation.vector - p0).norm()
}

#[test]
fn friction_holds_below_the_cone_and_slips_above() {
    let stick = incline_displacement(0.5f64.atan() - 0.08);
    let slip = incline_displacement(0.5f64.atan() + 0.08);
    assert!(stick < 0.01, "stick moved {stick}");
    assert!(slip > 0.1, "slip moved {slip}");
}

#[test]
fn stepping_is_deterministic() {
    let make = || {
        let mut w = World::new(SolverConfig::default(), flat(0.0));
        w.add_log(log_at(0.0, 0.0, 0.3, 0.0));
        w.add_log(log_at(0.1, 0.05, 0.65, 0.7));
        w.add_log(log_at(-0.2, 0.1, 1.0, -0.4));
        w
    };
    let (mut a, mut b) = (make(), make());
    for _ in 0..120 {
        a.step();
        b.step();
    }
    for (x, y) in a.bodies.iter().zip(&b.bodies) {
        assert_eq!(x.pose, y.pose);
        assert_eq!(x.linvel, y.linvel);
    }
}

#[test]
fn stacked_logs_settle_without_deep_penetration() {
    let mut w = World::new(SolverConfig::default(), flat(0.0));
    for k in 0..4 {
        w.add_log(log_at(0.05 * k as f64, 0.0, 0.15 + 0.25 * k as f64, 0.3 * k as f64));
    }
    for _ in 0..300 {
        w.step();
    }
    assert!(w.mean_log_speed() < 2e-2, "speed {}", w.mean_log_speed());
    assert!(w.diagnostics.max_penetration < 0.02, "pen {}", w.diagnostics.max_penetration);
}

fn crane_world(sleep: bool) -> World {
    let mut cfg = SolverConfig::default();
    cfg.sleep.enabled = sleep;
    let mut w = World::new(cfg, flat(0.0));
    let desc = Arc::new(CraneDescription::fc12());
    let q = desc.start_q;
    let base = desc.mount_pose();
    w.set_crane(Articulation::new(desc, base, q));
    w
}

#[test]
fn idle_crane_holds_pose_and_reads_zero_load() {
    let mut w = crane_world(false);
    let q0 = w.crane.as_ref().unwrap().q;
    for _ in 0..240 {
        w.step();
    }
    let c = w.crane.as_ref().unwrap();
    for i in [crate::crane::A, crate::crane::B, crate::crane::C, crate::crane::D] {
        assert!((c.q[i] - q0[i]).abs() < 2e-3, "joint {i} drifted {}", c.q[i] - q0[i]);
    }
    assert!(c.load_cell().abs() < 0.02, "load {}", c.load_cell());
    assert!(c.q[G].abs() < 1e-3 && c.q[H].abs() < 1e-3);
}

#[test]
fn motor_tracks_velocity_target() {
    let mut w = crane_world(false);
    w.crane.as_mut().unwrap().set_motor_target(crate::crane::A, 0.3);
    for _ in 0..60 {
        w.step();
    }
    let c = w.crane.as_ref().unwrap();
    assert!((c.qd[crate::crane::A] - 0.3).abs() < 1e-2, "qd {}", c.qd[crate::crane::A]);
    assert!(c.actuator_power() > 0.0);
}

#[test]
fn swing_damps_out() {
    let mut w = crane_world(false);
    {
        let c = w.crane.as_mut().unwrap();
        c.q[G] = 0.4;
    }
    for _ in 0..600 {
        w.step();
    }
    let c = w.crane.as_ref().unwrap();
    // dry friction leaves a small stuck angle
    assert!(c.q[G].abs() < 0.15, "g {}", c.q[G]);
    assert!(c.qd[G].abs() < 1e-3, "g speed {}", c.qd[G]);
}

#[test]
fn sleeping_pile_freezes_and_wakes() {
    let mut cfg = SolverConfig::default();
    cfg.sleep.enabled = true;
    let mut w = World::new(cfg, flat(0.0));
    w.add_log(log_at(0.0, 0.0, 0.12, 0.0));
    for _ in 0..120 {
        w.step();
    }
    assert!(w.asleep);
    let p = w.bodies[0].pose;
    w.step();
    assert_eq!(w.bodies[0].pose, p);
}

#[test]
fn thirty_degree_swing_settles_within_four_seconds() {
    let mut w = crane_world(false);
    w.crane.as_mut().unwrap().q[G] = 30f64.to_radians();
    for _ in 0..240 {
        w.step();
    }
    let c = w.crane.as_ref().unwrap();
    assert!(c.q[G].abs() < 2f64.to_radians(), "g {} deg", c.q[G].to_degrees());
}

//! Fixed-step rigid-body simulation.
//!
//! Logs are free bodies; the crane is a reduced-coordinate articulation
//! whose joints carry velocity motors with force limits. Contacts, motors,
//! joint limits and swing friction are all rows of one projected
//! Gauss–Seidel velocity solve over a shared generalized-velocity vector
//! (8 crane DOFs followed by 6 per log). Penetration is removed by a
//! separate pseudo-velocity pass so position correction never injects
//! kinetic energy.

pub mod collision;
mod solver;

use std::sync::Arc;

use nalgebra::{Cholesky, Isometry3, Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::crane::{CraneDescription, CraneFrames, JointMatrix, JointVector, Link, A, D, F, G, H};
use crate::geometry::{aabb_overlap, point_in_polygon, Obb};
use crate::logs;
use crate::terrain::Heightfield;
use collision::{box_box, box_heightfield, box_samples, ContactPoint};
use solver::{Row, Side, Solver};

/// Solver and contact-material settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    pub baumgarte: f64,
    /// Penetration left uncorrected (m).
    pub slop: f64,
    /// Speculative contact distance (m).
    pub margin: f64,
    pub friction: f64,
    pub restitution: f64,
    pub gravity: f64,
    pub warm_start: bool,
    /// Terrain sample spacing along box edges (m).
    pub terrain_sample_spacing: f64,
    pub crane_terrain_contact: bool,
    pub sleep: SleepConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 60.0,
            velocity_iterations: 24,
            position_iterations: 4,
            baumgarte: 0.2,
            slop: 0.005,
            margin: 0.02,
            friction: 0.5,
            restitution: 0.0,
            gravity: 9.81,
            warm_start: true,
            terrain_sample_spacing: 0.125,
            crane_terrain_contact: true,
            sleep: SleepConfig::default(),
        }
    }
}

/// Pile deactivation: resting logs far from the grapple are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SleepConfig {
    pub enabled: bool,
    pub linear_speed: f64,
    pub angular_speed: f64,
    pub time: f64,
    /// Grapple–log proximity that wakes the pile (m).
    pub wake_distance: f64,
}

impl Default for SleepConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            linear_speed: 5e-3,
            angular_speed: 2e-2,
            time: 0.5,
            wake_distance: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyShape {
    pub local: Isometry3<f64>,
    pub half: Vector3<f64>,
    samples: Vec<Vector3<f64>>,
}

/// Free rigid body (a log).
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    pub pose: Isometry3<f64>,
    pub linvel: Vector3<f64>,
    pub angvel: Vector3<f64>,
    pub mass: f64,
    /// Principal inertia in the body frame.
    pub inertia: Vector3<f64>,
    pub shapes: Vec<BodyShape>,
}

impl RigidBody {
    pub fn log(pose: Isometry3<f64>, sample_spacing: f64) -> Self {
        let half = logs::half_extents();
        let shapes = logs::cuboid_frames()
            .iter()
            .map(|f| BodyShape {
                local: *f,
                half,
                samples: box_samples(&half, sample_spacing),
            })
            .collect();
        Self {
            pose,
            linvel: Vector3::zeros(),
            angvel: Vector3::zeros(),
            mass: logs::LOG_MASS,
            inertia: logs::principal_inertia(),
            shapes,
        }
    }

    pub fn world_boxes(&self) -> Vec<Obb> {
        self.shapes
            .iter()
            .map(|s| Obb::new(&(self.pose * s.local), s.half))
            .collect()
    }

    pub fn inv_inertia_world(&self) -> Matrix3<f64> {
        let r = self.pose.rotation.to_rotation_matrix();
        let inv = Matrix3::from_diagonal(&self.inertia.map(|i| 1.0 / i));
        r.matrix() * inv * r.matrix().transpose()
    }

    pub fn speed(&self) -> f64 {
        self.linvel.norm()
    }

    pub fn kinetic_energy(&self) -> f64 {
        let r = self.pose.rotation.to_rotation_matrix();
        let w_local = r.matrix().transpose() * self.angvel;
        0.5 * self.mass * self.linvel.norm_squared()
            + 0.5 * w_local.component_mul(&w_local).dot(&self.inertia)
    }
}

/// Crane articulation state.
#[derive(Debug, Clone)]
pub struct Articulation {
    pub desc: Arc<CraneDescription>,
    pub base: Isometry3<f64>,
    pub q: JointVector,
    pub qd: JointVector,
    /// Velocity targets of the actuated joints (native units).
    pub motor_targets: JointVector,
    /// Joint forces applied by motors in the last step.
    pub motor_forces: JointVector,
    /// External force on the crane tip (test and calibration hook).
    pub external_tip_force: Vector3<f64>,
    /// Force transmitted from the crane tip into the hanging rotator and
    /// grapple during the last step (N, world frame).
    pub hanger_force: Vector3<f64>,
    box_samples: Vec<Vec<Vector3<f64>>>,
}

impl Articulation {
    pub fn new(desc: Arc<CraneDescription>, base: Isometry3<f64>, q: JointVector) -> Self {
        let box_samples = desc.boxes.iter().map(|b| box_samples(&b.half, 0.1)).collect();
        let g = desc.gravity;
        let m = desc.grapple_mass();
        Self {
            desc,
            base,
            q,
            qd: JointVector::zeros(),
            motor_targets: JointVector::zeros(),
            motor_forces: JointVector::zeros(),
            external_tip_force: Vector3::zeros(),
            hanger_force: Vector3::new(0.0, 0.0, m * g),
            box_samples,
        }
    }

    pub fn frames(&self) -> CraneFrames {
        self.desc.frames(&self.base, &self.q)
    }

    /// Sets a clipped velocity target on an actuated joint.
    pub fn set_motor_target(&mut self, joint: usize, target: f64) {
        let j = &self.desc.joints[joint];
        if j.actuated {
            self.motor_targets[joint] = target.clamp(-j.velocity_limit, j.velocity_limit);
        }
    }

    pub fn world_boxes(&self, frames: &CraneFrames) -> Vec<(Link, Obb)> {
        self.desc
            .boxes
            .iter()
            .map(|b| {
                let pose = frames.link(b.link)
                    * Isometry3::from_parts(b.center.into(), b.rotation);
                (b.link, Obb::new(&pose, b.half))
            })
            .collect()
    }

    /// Load-cell reading: carried mass at the rotator normalized by the
    /// empty grapple mass.
    pub fn load_cell(&self) -> f64 {
        let m_c = self.hanger_force.z / self.desc.gravity;
        crate::crane::normalized_load(m_c, self.desc.grapple_mass())
    }

    /// Sum over actuated joints of |force · velocity| (W).
    pub fn actuator_power(&self) -> f64 {
        self.desc
            .joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.actuated)
            .map(|(i, _)| (self.motor_forces[i] * self.qd[i]).abs())
            .sum()
    }
}

/// What a contact touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyRef {
    Terrain,
    Log(usize),
    Crane(Link),
}

/// Resolved contact of the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    pub a: BodyRef,
    pub b: BodyRef,
    pub point: Vector3<f64>,
    /// Points from `b` to `a`.
    pub normal: Vector3<f64>,
    pub depth: f64,
    pub normal_impulse: f64,
    pub tangent_impulse: Vector3<f64>,
    pub friction: f64,
}

/// Step diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    pub rows: usize,
    pub contacts: usize,
    /// Largest impulse change in the final velocity iteration.
    pub residual: f64,
    pub max_penetration: f64,
}

/// Which logs are held and where.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspInfo {
    pub n_logs_held: usize,
    pub held_log_ids: Vec<usize>,
    pub grapple_closed: bool,
    /// Centre of mass of the held logs.
    pub grasp_com: Option<Vector3<f64>>,
    /// Distance from the grapple reference to `grasp_com` (0 if nothing held).
    pub x_delta_grasp: f64,
}

#[derive(Debug, Clone, Copy)]
struct WarmEntry {
    key: (u32, u32),
    local: Vector3<f64>,
    normal: f64,
    tangent: Vector3<f64>,
}

const CRANE_SHAPE_BASE: u32 = 10_000;
const TERRAIN_SHAPE: u32 = u32::MAX;

/// Simulation world: terrain, logs and (optionally) the crane.
#[derive(Debug, Clone)]
pub struct World {
    pub config: SolverConfig,
    pub terrain: Heightfield,
    pub bodies: Vec<RigidBody>,
    pub crane: Option<Articulation>,
    pub time: f64,
    pub steps: u64,
    pub contacts: Vec<ContactReport>,
    pub diagnostics: StepDiagnostics,
    pub asleep: bool,
    calm_time: f64,
    warm: Vec<WarmEntry>,
    warm_motors: JointVector,
}

struct PendingContact {
    a: BodyRef,
    b: BodyRef,
    key: (u32, u32),
    cp: ContactPoint,
}

impl World {
    pub fn new(config: SolverConfig, terrain: Heightfield) -> Self {
        Self {
            config,
            terrain,
            bodies: Vec::new(),
            crane: None,
            time: 0.0,
            steps: 0,
            contacts: Vec::new(),
            diagnostics: StepDiagnostics::default(),
            asleep: false,
            calm_time: 0.0,
            warm: Vec::new(),
            warm_motors: JointVector::zeros(),
        }
    }

    pub fn add_log(&mut self, pose: Isometry3<f64>) -> usize {
        self.bodies
            .push(RigidBody::log(pose, self.config.terrain_sample_spacing));
        self.bodies.len() - 1
    }

    pub fn set_crane(&mut self, crane: Articulation) {
        self.crane = Some(crane);
    }

    pub fn mean_log_speed(&self) -> f64 {
        if self.bodies.is_empty() {
            return 0.0;
        }
        self.bodies.iter().map(RigidBody::speed).sum::<f64>() / self.bodies.len() as f64
    }

    pub fn wake(&mut self) {
        self.asleep = false;
        self.calm_time = 0.0;
    }

    fn gravity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.config.gravity)
    }

    /// Advances the world by one fixed step.
    pub fn step(&mut self) {
        let dt = self.config.dt;
        let crane_frames = self.crane.as_ref().map(Articulation::frames);
        let crane_boxes = match (&self.crane, &crane_frames) {
            (Some(c), Some(f)) => c.world_boxes(f),
            _ => Vec::new(),
        };
        self.update_wake(&crane_boxes);
        let logs_active = !self.asleep;

        let crane_dofs = if self.crane.is_some() { 8 } else { 0 };
        let n_dofs = crane_dofs + if logs_active { 6 * self.bodies.len() } else { 0 };
        let mut v = vec![0.0; n_dofs];

        // crane: implicit swing damping, explicit gravity
        let mut crane_minv = JointMatrix::zeros();
        let mut qd_start = JointVector::zeros();
        if let (Some(crane), Some(frames)) = (&self.crane, &crane_frames) {
            let desc = &crane.desc;
            let m = desc.mass_matrix(frames);
            let mut m_damped = m;
            for j in [G, H] {
                m_damped[(j, j)] += dt * desc.swing_viscous_damping;
            }
            let jt = frames.point_jacobian(Link::Telescope, &frames.tip);
            let qg = desc.gravity_force(frames) + jt.transpose() * crane.external_tip_force;
            let chol = Cholesky::new(m_damped).expect("crane mass matrix is positive definite");
            crane_minv = chol.inverse();
            qd_start = crane.qd;
            let qd = chol.solve(&(m * crane.qd + qg * dt));
            v[..8].copy_from_slice(qd.as_slice());
        }
        if logs_active {
            let g = self.gravity();
            for (i, b) in self.bodies.iter().enumerate() {
                let o = crane_dofs + 6 * i;
                let lv = b.linvel + g * dt;
                v[o..o + 3].copy_from_slice(lv.as_slice());
                v[o + 3..o + 6].copy_from_slice(b.angvel.as_slice());
            }
        }

        // contacts
        let pending = self.detect(logs_active, crane_frames.as_ref(), &crane_boxes);
        let inv_inertia: Vec<Matrix3<f64>> = if logs_active {
            self.bodies.iter().map(RigidBody::inv_inertia_world).collect()
        } else {
            Vec::new()
        };

        let mut solver = Solver::new(v);
        let mut motor_rows = [usize::MAX; 8];
        if let Some(crane) = &self.crane {
            let desc = &crane.desc;
            for (i, j) in desc.joints.iter().enumerate() {
                let mut jac = [0.0; 8];
                jac[i] = 1.0;
                let side = Side::crane(&jac, &crane_minv);
                if j.actuated {
                    let lim = j.force_limit * dt;
                    let mut row = Row::new(side, None, crane.motor_targets[i], -lim, lim);
                    if self.config.warm_start {
                        row.lambda = self.warm_motors[i].clamp(-lim, lim);
                    }
                    motor_rows[i] = solver.push(row);
                } else if i == G || i == H {
                    let lim = desc.swing_dry_friction * dt;
                    motor_rows[i] = solver.push(Row::new(side, None, 0.0, -lim, lim));
                }
                // limits
                let (lo, hi) = j.range;
                let q = crane.q[i];
                let reach = (crane.qd[i].abs() * dt).max(0.0) + 0.02 * j.span();
                if q - lo < reach {
                    let side = Side::crane(&jac, &crane_minv);
                    solver.push(Row::new(side, None, (lo - q) / dt, 0.0, f64::INFINITY));
                }
                if hi - q < reach {
                    let mut neg = [0.0; 8];
                    neg[i] = -1.0;
                    let side = Side::crane(&neg, &crane_minv);
                    solver.push(Row::new(side, None, (q - hi) / dt, 0.0, f64::INFINITY));
                }
            }
        }

        let mut contact_base = Vec::with_capacity(pending.len());
        for pc in &pending {
            let n = pc.cp.normal;
            let (t1, t2) = tangent_basis(&n);
            let target = if pc.cp.depth < 0.0 { pc.cp.depth / dt } else { 0.0 };
            let warm = if self.config.warm_start {
                self.find_warm(pc)
            } else {
                None
            };
            let mut sides = Vec::with_capacity(3);
            for dir in [n, t1, t2] {
                let sa = self.side(pc.a, &pc.cp.point, &dir, 1.0, crane_dofs, crane_frames.as_ref(), &crane_minv, &inv_inertia);
                let sb = self.side(pc.b, &pc.cp.point, &dir, -1.0, crane_dofs, crane_frames.as_ref(), &crane_minv, &inv_inertia);
                sides.push((sa, sb));
            }
            let mut it = sides.into_iter();
            let (na, nb) = it.next().unwrap();
            let mut nrow = Row::new_pair(na, nb, target, 0.0, f64::INFINITY);
            let (ta, tb) = it.next().unwrap();
            let mut t1row = Row::new_pair(ta, tb, 0.0, f64::NEG_INFINITY, f64::INFINITY);
            let (sa, sb) = it.next().unwrap();
            let mut t2row = Row::new_pair(sa, sb, 0.0, f64::NEG_INFINITY, f64::INFINITY);
            if let Some(w) = warm {
                nrow.lambda = w.normal * 0.95;
                t1row.lambda = w.tangent.dot(&t1) * 0.95;
                t2row.lambda = w.tangent.dot(&t2) * 0.95;
            }
            let base = solver.push(nrow);
            solver.push(t1row);
            solver.push(t2row);
            solver.mark_contact(base, self.config.friction);
            contact_base.push(base);
        }

        solver.warm_start();
        let residual = solver.solve(self.config.velocity_iterations);

        // position correction on contact normals
        let mut pseudo = Vec::with_capacity(pending.len());
        for (pc, &base) in pending.iter().zip(&contact_base) {
            let depth = pc.cp.depth - self.config.slop;
            if depth > 0.0 {
                pseudo.push((base, self.config.baumgarte * depth / dt));
            }
        }
        let pv = solver.solve_pseudo(&pseudo, self.config.position_iterations);

        // reports
        let mut reports = Vec::with_capacity(pending.len());
        let mut warm = Vec::with_capacity(pending.len());
        let mut max_pen: f64 = 0.0;
        for (pc, &base) in pending.iter().zip(&contact_base) {
            let (t1, t2) = tangent_basis(&pc.cp.normal);
            let ln = solver.rows[base].lambda;
            let lt = t1 * solver.rows[base + 1].lambda + t2 * solver.rows[base + 2].lambda;
            max_pen = max_pen.max(pc.cp.depth);
            warm.push(WarmEntry {
                key: pc.key,
                local: self.local_point(pc.a, &pc.cp.point, crane_frames.as_ref()),
                normal: ln,
                tangent: lt,
            });
            reports.push(ContactReport {
                a: pc.a,
                b: pc.b,
                point: pc.cp.point,
                normal: pc.cp.normal,
                depth: pc.cp.depth,
                normal_impulse: ln,
                tangent_impulse: lt,
                friction: self.config.friction,
            });
        }
        warm.sort_by(|x, y| x.key.cmp(&y.key));

        // integrate
        let v = &solver.v;
        if let (Some(crane), Some(frames)) = (self.crane.as_mut(), crane_frames.as_ref()) {
            let qd_new = JointVector::from_column_slice(&v[..8]);
            let qd_pos = qd_new + JointVector::from_column_slice(&pv[..8]);
            for i in 0..8 {
                if motor_rows[i] != usize::MAX {
                    let lam = solver.rows[motor_rows[i]].lambda;
                    crane.motor_forces[i] = lam / dt;
                    self.warm_motors[i] = lam;
                } else {
                    crane.motor_forces[i] = 0.0;
                }
            }
            // transmitted force into the hanging subtree
            let mut momentum_rate = Vector3::zeros();
            let g = Vector3::new(0.0, 0.0, -crane.desc.gravity);
            for link in Link::ALL.iter().filter(|l| l.below_tip()) {
                let spec = &crane.desc.links[link.index()];
                let com = frames.link_point(*link, &spec.com);
                let jv = frames.point_jacobian(*link, &com);
                let acc = jv * (qd_new - qd_start) / dt;
                momentum_rate += (acc - g) * spec.mass;
            }
            let mut contact_force = Vector3::zeros();
            for r in &reports {
                let f = r.normal * r.normal_impulse + r.tangent_impulse;
                if let BodyRef::Crane(l) = r.a {
                    if l.below_tip() {
                        contact_force += f / dt;
                    }
                }
                if let BodyRef::Crane(l) = r.b {
                    if l.below_tip() {
                        contact_force -= f / dt;
                    }
                }
            }
            crane.hanger_force = momentum_rate - contact_force;

            crane.q += qd_pos * dt;
            crane.qd = qd_new;
            let desc = crane.desc.clone();
            for (i, j) in desc.joints.iter().enumerate() {
                if crane.q[i] <= j.range.0 {
                    crane.q[i] = j.range.0;
                    crane.qd[i] = crane.qd[i].max(0.0);
                } else if crane.q[i] >= j.range.1 {
                    crane.q[i] = j.range.1;
                    crane.qd[i] = crane.qd[i].min(0.0);
                }
            }
        }
        if logs_active {
            for (i, b) in self.bodies.iter_mut().enumerate() {
                let o = crane_dofs + 6 * i;
                b.linvel = Vector3::new(v[o], v[o + 1], v[o + 2]);
                b.angvel = Vector3::new(v[o + 3], v[o + 4], v[o + 5]);
                let lin = b.linvel + Vector3::new(pv[o], pv[o + 1], pv[o + 2]);
                let ang = b.angvel + Vector3::new(pv[o + 3], pv[o + 4], pv[o + 5]);
                b.pose.translation.vector += lin * dt;
                let dq = UnitQuaternion::from_scaled_axis(ang * dt);
                b.pose.rotation = UnitQuaternion::new_normalize((dq * b.pose.rotation).into_inner());
            }
        }

        self.diagnostics = StepDiagnostics {
            rows: solver.rows.len(),
            contacts: reports.len(),
            residual,
            max_penetration: max_pen,
        };
        self.contacts = reports;
        self.warm = warm;
        self.time += dt;
        self.steps += 1;
        self.update_sleep();
    }

    fn update_wake(&mut self, crane_boxes: &[(Link, Obb)]) {
        if !self.asleep {
            return;
        }
        let wd = self.config.sleep.wake_distance;
        let near = self.bodies.iter().any(|b| {
            b.world_boxes().iter().any(|lb| {
                let la = lb.aabb();
                crane_boxes.iter().any(|(_, cb)| aabb_overlap(&la, &cb.aabb(), wd))
            })
        });
        if near || !self.config.sleep.enabled {
            self.wake();
        }
    }

    fn update_sleep(&mut self) {
        let s = &self.config.sleep;
        if !s.enabled || self.asleep || self.bodies.is_empty() {
            return;
        }
        let calm = self
            .bodies
            .iter()
            .all(|b| b.linvel.norm() < s.linear_speed && b.angvel.norm() < s.angular_speed);
        if calm {
            self.calm_time += self.config.dt;
        } else {
            self.calm_time = 0.0;
        }
        if self.calm_time >= s.time {
            // stays awake while the grapple is close
            let crane_boxes = match &self.crane {
                Some(c) => c.world_boxes(&c.frames()),
                None => Vec::new(),
            };
            let wd = s.wake_distance;
            let near = self.bodies.iter().any(|b| {
                b.world_boxes().iter().any(|lb| {
                    crane_boxes
                        .iter()
                        .any(|(_, cb)| aabb_overlap(&lb.aabb(), &cb.aabb(), wd))
                })
            });
            if !near {
                self.asleep = true;
                for b in &mut self.bodies {
                    b.linvel = Vector3::zeros();
                    b.angvel = Vector3::zeros();
                }
                self.warm.clear();
            }
        }
    }

    fn detect(
        &self,
        logs_active: bool,
        frames: Option<&CraneFrames>,
        crane_boxes: &[(Link, Obb)],
    ) -> Vec<PendingContact> {
        let margin = self.config.margin;
        let mut out = Vec::new();
        let mut buf = Vec::new();
        let log_boxes: Vec<Vec<Obb>> = self.bodies.iter().map(RigidBody::world_boxes).collect();
        let log_aabbs: Vec<Vec<_>> = log_boxes
            .iter()
            .map(|bs| bs.iter().map(Obb::aabb).collect())
            .collect();
        let (tmin, tmax) = self.terrain.min_max();
        // distance each log may travel this step
        let dt = self.config.dt;
        let reach = logs::LOG_LENGTH / 2.0;
        let sweep: Vec<f64> = self
            .bodies
            .iter()
            .map(|b| (b.linvel.norm() + b.angvel.norm() * reach + self.config.gravity * dt) * dt)
            .collect();
        let crane_sweep = 0.03;

        if logs_active {
            for (i, body) in self.bodies.iter().enumerate() {
                for (k, obb) in log_boxes[i].iter().enumerate() {
                    let aabb = &log_aabbs[i][k];
                    let m = margin + sweep[i];
                    if aabb.0.z > tmax + m || aabb.1.z < tmin - 1.0 {
                        continue;
                    }
                    buf.clear();
                    box_heightfield(obb, &body.shapes[k].samples, &self.terrain, m, 4, &mut buf);
                    for cp in &buf {
                        out.push(PendingContact {
                            a: BodyRef::Log(i),
                            b: BodyRef::Terrain,
                            key: (log_shape(i, k), TERRAIN_SHAPE),
                            cp: *cp,
                        });
                    }
                }
            }
            for i in 0..self.bodies.len() {
                for j in i + 1..self.bodies.len() {
                    for (ka, oa) in log_boxes[i].iter().enumerate() {
                        for (kb, ob) in log_boxes[j].iter().enumerate() {
                            let m = margin + sweep[i] + sweep[j];
                            if !aabb_overlap(&log_aabbs[i][ka], &log_aabbs[j][kb], m) {
                                continue;
                            }
                            buf.clear();
                            box_box(oa, ob, m, &mut buf);
                            for cp in &buf {
                                out.push(PendingContact {
                                    a: BodyRef::Log(i),
                                    b: BodyRef::Log(j),
                                    key: (log_shape(i, ka), log_shape(j, kb)),
                                    cp: *cp,
                                });
                            }
                        }
                    }
                }
            }
        }

        if let (Some(crane), Some(_)) = (&self.crane, frames) {
            for (c, (link, cb)) in crane_boxes.iter().enumerate() {
                let caabb = cb.aabb();
                let cid = CRANE_SHAPE_BASE + c as u32;
                if self.config.crane_terrain_contact && caabb.0.z <= tmax + margin + crane_sweep {
                    buf.clear();
                    box_heightfield(cb, &crane.box_samples[c], &self.terrain, margin + crane_sweep, 4, &mut buf);
                    for cp in &buf {
                        out.push(PendingContact {
                            a: BodyRef::Crane(*link),
                            b: BodyRef::Terrain,
                            key: (cid, TERRAIN_SHAPE),
                            cp: *cp,
                        });
                    }
                }
                if !logs_active {
                    continue;
                }
                for (i, boxes) in log_boxes.iter().enumerate() {
                    for (k, lb) in boxes.iter().enumerate() {
                        let m = margin + crane_sweep + sweep[i];
                        if !aabb_overlap(&caabb, &log_aabbs[i][k], m) {
                            continue;
                        }
                        buf.clear();
                        box_box(cb, lb, m, &mut buf);
                        for cp in &buf {
                            out.push(PendingContact {
                                a: BodyRef::Crane(*link),
                                b: BodyRef::Log(i),
                                key: (cid, log_shape(i, k)),
                                cp: *cp,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn side(
        &self,
        body: BodyRef,
        p: &Vector3<f64>,
        dir: &Vector3<f64>,
        sign: f64,
        crane_dofs: usize,
        frames: Option<&CraneFrames>,
        crane_minv: &JointMatrix,
        inv_inertia: &[Matrix3<f64>],
    ) -> Option<Side> {
        match body {
            BodyRef::Terrain => None,
            BodyRef::Log(i) => {
                let b = &self.bodies[i];
                let r = p - b.pose.translation.vector;
                let lin = dir * sign;
                let ang = r.cross(dir) * sign;
                Some(Side::free(crane_dofs + 6 * i, &lin, &ang, 1.0 / b.mass, &inv_inertia[i]))
            }
            BodyRef::Crane(link) => {
                let frames = frames.expect("crane frames present");
                let jv = frames.point_jacobian(link, p);
                let j = jv.transpose() * dir * sign;
                let mut arr = [0.0; 8];
                arr.copy_from_slice(j.as_slice());
                Some(Side::crane(&arr, crane_minv))
            }
        }
    }

    fn local_point(&self, body: BodyRef, p: &Vector3<f64>, frames: Option<&CraneFrames>) -> Vector3<f64> {
        match body {
            BodyRef::Terrain => *p,
            BodyRef::Log(i) => self.bodies[i].pose.inverse_transform_point(&(*p).into()).coords,
            BodyRef::Crane(link) => frames
                .map(|f| f.link(link).inverse_transform_point(&(*p).into()).coords)
                .unwrap_or(*p),
        }
    }

    fn find_warm(&self, pc: &PendingContact) -> Option<WarmEntry> {
        let start = self.warm.partition_point(|w| w.key < pc.key);
        let frames = self.crane.as_ref().map(Articulation::frames);
        let local = self.local_point(pc.a, &pc.cp.point, frames.as_ref());
        self.warm[start..]
            .iter()
            .take_while(|w| w.key == pc.key)
            .map(|w| ((w.local - local).norm(), *w))
            .filter(|(d, _)| *d < 0.03)
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(_, w)| w)
    }

    /// Grasp state from the grapple opening and the claw enclosure.
    pub fn grasp_info(&self) -> GraspInfo {
        let Some(crane) = &self.crane else {
            return GraspInfo {
                n_logs_held: 0,
                held_log_ids: Vec::new(),
                grapple_closed: false,
                grasp_com: None,
                x_delta_grasp: 0.0,
            };
        };
        let frames = crane.frames();
        grasp_info_at(&crane.desc, &frames, crane.q[F], &self.bodies)
    }

    /// Total kinetic energy of the logs (J).
    pub fn log_kinetic_energy(&self) -> f64 {
        self.bodies.iter().map(RigidBody::kinetic_energy).sum()
    }

    /// FNV-1a digest of the dynamic state: log poses and velocities, crane
    /// joint state, time and the sleep flag.
    pub fn snapshot_hash(&self) -> u64 {
        let mut h = Fnv::new();
        h.f64(self.time);
        h.u64(self.steps);
        h.u64(self.asleep as u64);
        for b in &self.bodies {
            h.f64s(b.pose.translation.vector.as_slice());
            h.f64s(b.pose.rotation.coords.as_slice());
            h.f64s(b.linvel.as_slice());
            h.f64s(b.angvel.as_slice());
        }
        if let Some(c) = &self.crane {
            h.f64s(c.q.as_slice());
            h.f64s(c.qd.as_slice());
        }
        h.finish()
    }
}

/// Largest drift of joints a–d after the crane, at full extension with
/// zero motor targets, holds a downward tip force `load` (N) for `seconds`.
pub fn static_hold_drift(desc: Arc<CraneDescription>, load: f64, seconds: f64) -> f64 {
    let terrain = Heightfield::flat(nalgebra::Vector2::new(-20.0, -20.0), 1.0, 41, 41, -50.0);
    let mut w = World::new(SolverConfig::default(), terrain);
    let q0 = desc.full_extension();
    let mut crane = Articulation::new(desc.clone(), desc.mount_pose(), q0);
    crane.external_tip_force = Vector3::new(0.0, 0.0, -load);
    w.set_crane(crane);
    let n = (seconds / w.config.dt).round() as usize;
    let mut drift: f64 = 0.0;
    for _ in 0..n {
        w.step();
        let q = &w.crane.as_ref().expect("crane").q;
        for i in A..=D {
            drift = drift.max((q[i] - q0[i]).abs());
        }
    }
    drift
}

/// 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Fnv {
    pub fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    pub fn bytes(&mut self, b: &[u8]) {
        for &x in b {
            self.0 ^= x as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }

    pub fn f32s(&mut self, v: &[f32]) {
        for &x in v {
            self.bytes(&x.to_bits().to_le_bytes());
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Grasp classification for given crane frames and opening angle.
pub fn grasp_info_at(
    desc: &CraneDescription,
    frames: &CraneFrames,
    opening: f64,
    bodies: &[RigidBody],
) -> GraspInfo {
    let closed = opening < desc.closed_threshold();
    let mut held = Vec::new();
    if closed {
        let poly = desc.enclosure_polygon(opening);
        let body = frames.grapple_pose();
        for (i, b) in bodies.iter().enumerate() {
            let local = body.inverse_transform_point(&b.pose.translation.vector.into());
            if local.x.abs() > logs::LOG_LENGTH / 2.0 {
                continue;
            }
            if point_in_polygon(&Vector2::new(local.y, local.z), &poly) {
                held.push(i);
            }
        }
    }
    let grasp_com = if held.is_empty() {
        None
    } else {
        let total: f64 = held.iter().map(|&i| bodies[i].mass).sum();
        Some(
            held.iter()
                .map(|&i| bodies[i].pose.translation.vector * bodies[i].mass)
                .sum::<Vector3<f64>>()
                / total,
        )
    };
    let x = grasp_com.map(|c| (c - frames.reference).norm()).unwrap_or(0.0);
    GraspInfo {
        n_logs_held: held.len(),
        held_log_ids: held,
        grapple_closed: closed,
        grasp_com,
        x_delta_grasp: x,
    }
}

fn log_shape(i: usize, k: usize) -> u32 {
    (i * 2 + k) as u32
}

/// Orthonormal tangents for a unit normal.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let t1 = if n.x.abs() < 0.57 {
        Vector3::x().cross(n).normalize()
    } else {
        Vector3::y().cross(n).normalize()
    };
    (t1, n.cross(&t1))
}

#[cfg(test)]
mod tests;

//! Crane description, forward kinematics, Jacobians and the static
//! quantities derived from them (reach, lift capacity, generalized mass).
//!
//! Joint order everywhere is `a b c d e f g h`:
//!
//! | idx | joint | role                    | kind      |
//! |-----|-------|-------------------------|-----------|
//! | 0   | a     | slew                    | hinge     |
//! | 1   | b     | main boom               | hinge     |
//! | 2   | c     | outer boom              | hinge     |
//! | 3   | d     | telescope               | prismatic |
//! | 4   | e     | rotator                 | hinge     |
//! | 5   | f     | grapple opening         | hinge     |
//! | 6   | g     | swing (passive)         | hinge     |
//! | 7   | h     | swing (passive)         | hinge     |
//!
//! The physical chain runs a → b → c → d → crane tip → g → h → e →
//! grapple body → claws (f). The swing hinges hang from a levelled frame
//! at the crane tip so their angles are measured from the vertical.

use nalgebra::{
    Isometry3, Matrix3, SMatrix, SVector, Translation3, Unit, UnitQuaternion, Vector2, Vector3,
};
use serde::Deserialize;

use crate::error::{Result, SimError};

pub const N_JOINTS: usize = 8;
pub const A: usize = 0;
pub const B: usize = 1;
pub const C: usize = 2;
pub const D: usize = 3;
pub const E: usize = 4;
pub const F: usize = 5;
pub const G: usize = 6;
pub const H: usize = 7;
pub const JOINT_NAMES: [char; N_JOINTS] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];

pub type JointVector = SVector<f64, N_JOINTS>;
pub type JointMatrix = SMatrix<f64, N_JOINTS, N_JOINTS>;
pub type PointJacobian = SMatrix<f64, 3, N_JOINTS>;
pub type TipJacobian = SMatrix<f64, 3, 4>;

/// Default description shipped with the crate.
pub const FC12_TOML: &str = include_str!("../assets/fc12.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Hinge,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: char,
    pub kind: JointKind,
    pub origin: Vector3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub range: (f64, f64),
    pub velocity_limit: f64,
    pub force_limit: f64,
    pub actuated: bool,
    pub armature: f64,
}

impl JointSpec {
    pub fn span(&self) -> f64 {
        self.range.1 - self.range.0
    }

    /// Articulation fraction: 0 at the lower limit, 1 at the upper.
    pub fn fraction(&self, q: f64) -> f64 {
        (q - self.range.0) / self.span()
    }
}

/// Links carrying mass or collision geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Link {
    Pillar,
    MainBoom,
    OuterBoom,
    Telescope,
    Rotator,
    GrappleBody,
    ClawLeft,
    ClawRight,
}

impl Link {
    pub const ALL: [Link; 8] = [
        Link::Pillar,
        Link::MainBoom,
        Link::OuterBoom,
        Link::Telescope,
        Link::Rotator,
        Link::GrappleBody,
        Link::ClawLeft,
        Link::ClawRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Links hanging below the crane tip (rotator, grapple and claws).
    pub fn below_tip(self) -> bool {
        matches!(
            self,
            Link::Rotator | Link::GrappleBody | Link::ClawLeft | Link::ClawRight
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Vector3<f64>,
}

/// Collision box rigidly attached to a link.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionBox {
    pub link: Link,
    pub center: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub half: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrappleSpec {
    pub body_offset: Vector3<f64>,
    pub reference: Vector3<f64>,
    /// Closed-pose inner profile of the left claw, (y, z) in its hinge frame.
    pub claw_profile: Vec<Vector2<f64>>,
    pub claw_thickness: f64,
    pub claw_width: f64,
    pub closed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraneDescription {
    pub name: String,
    pub gravity: f64,
    pub mount: Vector3<f64>,
    pub joints: [JointSpec; N_JOINTS],
    pub links: [LinkSpec; 8],
    pub swing_dry_friction: f64,
    pub swing_viscous_damping: f64,
    pub grapple: GrappleSpec,
    pub boxes: Vec<CollisionBox>,
    pub start_q: JointVector,
}

// --- file schema -----------------------------------------------------------

#[derive(Deserialize)]
struct RawDescription {
    name: String,
    gravity: f64,
    mount: [f64; 3],
    joints: Vec<RawJoint>,
    swing: RawSwing,
    links: RawLinks,
    grapple: RawGrapple,
    start: RawStart,
}

#[derive(Deserialize)]
struct RawJoint {
    name: String,
    kind: JointKind,
    origin: [f64; 3],
    axis: [f64; 3],
    range: [f64; 2],
    velocity_limit: f64,
    force_limit: f64,
    actuated: bool,
    #[serde(default)]
    armature: f64,
}

#[derive(Deserialize)]
struct RawSwing {
    dry_friction: f64,
    viscous_damping: f64,
}

#[derive(Deserialize)]
struct RawLink {
    mass: f64,
    com: [f64; 3],
    inertia: [f64; 3],
}

#[derive(Deserialize)]
struct RawLinks {
    pillar: RawLink,
    main_boom: RawLink,
    outer_boom: RawLink,
    telescope: RawLink,
    rotator: RawLink,
    grapple_body: RawLink,
    claw: RawLink,
}

#[derive(Deserialize)]
struct RawBox {
    center: [f64; 3],
    half: [f64; 3],
}

#[derive(Deserialize)]
struct RawGrapple {
    body_offset: [f64; 3],
    reference: [f64; 3],
    claw_profile: Vec<[f64; 2]>,
    claw_thickness: f64,
    claw_width: f64,
    body_boxes: Vec<RawBox>,
    closed_fraction: f64,
}

#[derive(Deserialize)]
struct RawStart {
    q: [f64; N_JOINTS],
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn link_spec(r: &RawLink) -> LinkSpec {
    LinkSpec {
        mass: r.mass,
        com: v3(r.com),
        inertia: v3(r.inertia),
    }
}

/// Reflection through the y = 0 plane applied to a point.
fn mirror_point(p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(p.x, -p.y, p.z)
}

/// Reflection through the y = 0 plane applied to a rotation axis.
fn mirror_axis(a: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-a.x, a.y, -a.z)
}

impl CraneDescription {
    /// The shipped description.
    pub fn fc12() -> Self {
        Self::from_toml(FC12_TOML).expect("bundled crane description is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawDescription =
            toml::from_str(text).map_err(|e| SimError::Description(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawDescription) -> Result<Self> {
        if raw.joints.len() != N_JOINTS {
            return Err(SimError::Description(format!(
                "expected {N_JOINTS} joints, found {}",
                raw.joints.len()
            )));
        }
        let mut joints = Vec::with_capacity(N_JOINTS);
        for (expected, rj) in JOINT_NAMES.iter().zip(&raw.joints) {
            let name = rj.name.chars().next().unwrap_or('?');
            if rj.name.len() != 1 || name != *expected {
                return Err(SimError::Description(format!(
                    "joint order must be a..h, found {:?} where {expected:?} expected",
                    rj.name
                )));
            }
            let axis = v3(rj.axis);
            if axis.norm() < 1e-9 {
                return Err(SimError::Description(format!("joint {name}: zero axis")));
            }
            if !(rj.range[0] < rj.range[1]) {
                return Err(SimError::Description(format!("joint {name}: empty range")));
            }
            joints.push(JointSpec {
                name,
                kind: rj.kind,
                origin: v3(rj.origin),
                axis: Unit::new_normalize(axis),
                range: (rj.range[0], rj.range[1]),
                velocity_limit: rj.velocity_limit,
                force_limit: rj.force_limit,
                actuated: rj.actuated,
                armature: rj.armature,
            });
        }
        let joints: [JointSpec; N_JOINTS] = joints.try_into().expect("length checked");
        if joints[D].kind != JointKind::Prismatic
            || joints.iter().enumerate().any(|(i, j)| i != D && j.kind != JointKind::Hinge)
        {
            return Err(SimError::Description(
                "telescope d must be prismatic and all other joints hinges".into(),
            ));
        }
        let n_actuated = joints.iter().filter(|j| j.actuated).count();
        if n_actuated != 6 || joints[G].actuated || joints[H].actuated {
            return Err(SimError::Description(
                "exactly joints a-f are actuated; swing joints g, h are passive".into(),
            ));
        }

        let claw = link_spec(&raw.links.claw);
        let claw_right = LinkSpec {
            mass: claw.mass,
            com: mirror_point(&claw.com),
            inertia: claw.inertia,
        };
        let links = [
            link_spec(&raw.links.pillar),
            link_spec(&raw.links.main_boom),
            link_spec(&raw.links.outer_boom),
            link_spec(&raw.links.telescope),
            link_spec(&raw.links.rotator),
            link_spec(&raw.links.grapple_body),
            claw,
            claw_right,
        ];

        let g = &raw.grapple;
        if g.claw_profile.len() < 2 {
            return Err(SimError::Description("claw profile needs ≥ 2 points".into()));
        }
        let profile: Vec<Vector2<f64>> = g
            .claw_profile
            .iter()
            .map(|p| Vector2::new(p[0], p[1]))
            .collect();
        let mut boxes = Vec::new();
        for b in &g.body_boxes {
            boxes.push(CollisionBox {
                link: Link::GrappleBody,
                center: v3(b.center),
                rotation: UnitQuaternion::identity(),
                half: v3(b.half),
            });
        }
        for (link, sign) in [(Link::ClawLeft, 1.0), (Link::ClawRight, -1.0)] {
            for w in profile.windows(2) {
                let (p0, p1) = (w[0], w[1]);
                let mid = (p0 + p1) / 2.0;
                let dir = p1 - p0;
                let len = dir.norm();
                // box local z runs along the segment, local x along the jaw axis
                let roll = (-dir.x).atan2(dir.y);
                let rotation = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), sign * roll);
                boxes.push(CollisionBox {
                    link,
                    center: Vector3::new(0.0, sign * mid.x, mid.y),
                    rotation,
                    half: Vector3::new(g.claw_width / 2.0, g.claw_thickness / 2.0, len / 2.0),
                });
            }
        }
        let desc = Self {
            name: raw.name,
            gravity: raw.gravity,
            mount: v3(raw.mount),
            joints,
            links,
            swing_dry_friction: raw.swing.dry_friction,
            swing_viscous_damping: raw.swing.viscous_damping,
            grapple: GrappleSpec {
                body_offset: v3(g.body_offset),
                reference: v3(g.reference),
                claw_profile: profile,
                claw_thickness: g.claw_thickness,
                claw_width: g.claw_width,
                closed_fraction: g.closed_fraction,
            },
            boxes,
            start_q: JointVector::from_column_slice(&raw.start.q),
        };
        desc.check_range(&desc.start_q)?;
        Ok(desc)
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Mass hanging below the crane tip: rotator, grapple body and claws.
    pub fn grapple_mass(&self) -> f64 {
        Link::ALL
            .iter()
            .filter(|l| l.below_tip())
            .map(|l| self.links[l.index()].mass)
            .sum()
    }

    pub fn check_range(&self, q: &JointVector) -> Result<()> {
        for (i, j) in self.joints.iter().enumerate() {
            let v = q[i];
            if !v.is_finite() || v < j.range.0 - 1e-9 || v > j.range.1 + 1e-9 {
                return Err(SimError::JointOutOfRange {
                    joint: j.name,
                    value: v,
                    min: j.range.0,
                    max: j.range.1,
                });
            }
        }
        Ok(())
    }

    pub fn clamp_to_range(&self, q: &mut JointVector) {
        for (i, j) in self.joints.iter().enumerate() {
            q[i] = q[i].clamp(j.range.0, j.range.1);
        }
    }

    /// Configuration with horizontal booms and the telescope fully out.
    pub fn full_extension(&self) -> JointVector {
        let mut q = JointVector::zeros();
        q[D] = self.joints[D].range.1;
        q[F] = self.start_q[F];
        q
    }

    /// Crane base pose for a vehicle at the identity pose.
    pub fn mount_pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.mount), UnitQuaternion::identity())
    }

    /// Forward kinematics after validating `q` against the joint ranges.
    pub fn forward_kinematics(&self, base: &Isometry3<f64>, q: &JointVector) -> Result<CraneFrames> {
        self.check_range(q)?;
        Ok(self.frames(base, q))
    }

    /// Forward kinematics without range validation.
    pub fn frames(&self, base: &Isometry3<f64>, q: &JointVector) -> CraneFrames {
        let j = &self.joints;
        let hinge = |parent: &Isometry3<f64>, spec: &JointSpec, angle: f64| {
            let anchor = parent * nalgebra::Point3::from(spec.origin);
            let axis = parent.rotation * spec.axis.into_inner();
            let child = parent
                * Translation3::from(spec.origin)
                * UnitQuaternion::from_axis_angle(&spec.axis, angle);
            (child, anchor.coords, axis)
        };

        let mut anchors = [Vector3::zeros(); N_JOINTS];
        let mut axes = [Vector3::zeros(); N_JOINTS];
        let mut links = [Isometry3::identity(); 8];

        let (pillar, an, ax) = hinge(base, &j[A], q[A]);
        anchors[A] = an;
        axes[A] = ax;
        let (main, an, ax) = hinge(&pillar, &j[B], q[B]);
        anchors[B] = an;
        axes[B] = ax;
        let (outer, an, ax) = hinge(&main, &j[C], q[C]);
        anchors[C] = an;
        axes[C] = ax;

        anchors[D] = (outer * nalgebra::Point3::from(j[D].origin)).coords;
        axes[D] = outer.rotation * j[D].axis.into_inner();
        let telescope =
            outer * Translation3::from(j[D].origin + j[D].axis.into_inner() * q[D]);
        let tip = telescope.translation.vector;

        let level = Isometry3::from_parts(Translation3::from(tip), pillar.rotation);
        let (gframe, an, ax) = hinge(&level, &j[G], q[G]);
        anchors[G] = an;
        axes[G] = ax;
        let (hframe, an, ax) = hinge(&gframe, &j[H], q[H]);
        anchors[H] = an;
        axes[H] = ax;
        let (rotator, an, ax) = hinge(&hframe, &j[E], q[E]);
        anchors[E] = an;
        axes[E] = ax;
        let body = rotator * Translation3::from(self.grapple.body_offset);

        let (claw_l, an, ax) = hinge(&body, &j[F], q[F]);
        anchors[F] = an;
        axes[F] = ax;
        let mirrored = JointSpec {
            origin: mirror_point(&j[F].origin),
            axis: Unit::new_normalize(mirror_axis(&j[F].axis)),
            ..j[F].clone()
        };
        let (claw_r, claw_r_anchor, claw_r_axis) = hinge(&body, &mirrored, q[F]);

        links[Link::Pillar.index()] = pillar;
        links[Link::MainBoom.index()] = main;
        links[Link::OuterBoom.index()] = outer;
        links[Link::Telescope.index()] = telescope;
        links[Link::Rotator.index()] = rotator;
        links[Link::GrappleBody.index()] = body;
        links[Link::ClawLeft.index()] = claw_l;
        links[Link::ClawRight.index()] = claw_r;

        let reference = (body * nalgebra::Point3::from(self.grapple.reference)).coords;
        CraneFrames {
            base: *base,
            links,
            anchors,
            axes,
            claw_right_anchor: claw_r_anchor,
            claw_right_axis: claw_r_axis,
            tip,
            reference,
        }
    }

    /// Horizontal distance from the slew axis to the crane tip at full
    /// extension.
    pub fn max_reach(&self) -> f64 {
        let base = self.mount_pose();
        self.horizontal_reach(&self.frames(&base, &self.full_extension()))
    }

    pub fn horizontal_reach(&self, frames: &CraneFrames) -> f64 {
        let d = frames.tip - frames.anchors[A];
        let axis = frames.axes[A];
        (d - axis * axis.dot(&d)).norm()
    }

    /// Generalized gravity force (N, N·m) acting on the joints.
    pub fn gravity_force(&self, frames: &CraneFrames) -> JointVector {
        let g = Vector3::new(0.0, 0.0, -self.gravity);
        let mut out = JointVector::zeros();
        for link in Link::ALL {
            let spec = &self.links[link.index()];
            if spec.mass == 0.0 {
                continue;
            }
            let com = frames.link_point(link, &spec.com);
            let jv = frames.point_jacobian(link, &com);
            out += jv.transpose() * (g * spec.mass);
        }
        out
    }

    /// Joint-space mass matrix including joint armature.
    pub fn mass_matrix(&self, frames: &CraneFrames) -> JointMatrix {
        let mut m = JointMatrix::zeros();
        for link in Link::ALL {
            let spec = &self.links[link.index()];
            if spec.mass == 0.0 {
                continue;
            }
            let pose = &frames.links[link.index()];
            let com = pose * nalgebra::Point3::from(spec.com);
            let jv = frames.point_jacobian(link, &com.coords);
            let jw = frames.angular_jacobian(link);
            let r = pose.rotation.to_rotation_matrix();
            let inertia: Matrix3<f64> =
                r.matrix() * Matrix3::from_diagonal(&spec.inertia) * r.matrix().transpose();
            m += jv.transpose() * jv * spec.mass + jw.transpose() * inertia * jw;
        }
        for (i, j) in self.joints.iter().enumerate() {
            m[(i, i)] += j.armature;
        }
        m
    }

    /// Largest extra downward force at the crane tip that joints a–d can
    /// statically hold at `q`, given the crane's own weight and the
    /// configured force limits.
    pub fn static_capacity(&self, q: &JointVector) -> f64 {
        let frames = self.frames(&self.mount_pose(), q);
        let qg = self.gravity_force(&frames);
        let jt = frames.point_jacobian(Link::Telescope, &frames.tip);
        let mut cap = f64::INFINITY;
        for i in A..=D {
            // generalized force of a unit downward tip force
            let jz = -jt[(2, i)];
            if jz.abs() < 1e-9 {
                continue;
            }
            // holding torque at load F: tau(F) = -(qg + F * jz)
            let lim = self.joints[i].force_limit;
            let f_max = (lim * jz.signum() - qg[i]) / jz;
            cap = cap.min(f_max.max(0.0));
        }
        cap
    }

    /// Static capacity at full horizontal extension.
    pub fn lift_capacity_at_full_reach(&self) -> f64 {
        self.static_capacity(&self.full_extension())
    }

    /// Opening angle below which the grapple counts as closed.
    pub fn closed_threshold(&self) -> f64 {
        let f = &self.joints[F];
        f.range.0 + self.grapple.closed_fraction * f.span()
    }

    /// Enclosure polygon of the claws in the grapple body (y, z) plane at
    /// opening angle `opening`: left hinge, left profile, right profile
    /// reversed, right hinge.
    pub fn enclosure_polygon(&self, opening: f64) -> Vec<Vector2<f64>> {
        let hinge = Vector2::new(self.joints[F].origin.y, self.joints[F].origin.z);
        let (s, c) = opening.sin_cos();
        let left: Vec<Vector2<f64>> = self
            .grapple
            .claw_profile
            .iter()
            .map(|p| hinge + Vector2::new(p.x * c - p.y * s, p.x * s + p.y * c))
            .collect();
        let mut poly = left.clone();
        for p in left.iter().rev() {
            poly.push(Vector2::new(-p.x, p.y));
        }
        poly
    }
}

/// World-frame link poses and joint axes for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CraneFrames {
    pub base: Isometry3<f64>,
    pub links: [Isometry3<f64>; 8],
    /// World joint anchors; `anchors[F]` is the left claw hinge.
    pub anchors: [Vector3<f64>; N_JOINTS],
    /// World joint axes; `axes[F]` is the left claw axis.
    pub axes: [Vector3<f64>; N_JOINTS],
    pub claw_right_anchor: Vector3<f64>,
    pub claw_right_axis: Vector3<f64>,
    /// Crane tip: the telescope end.
    pub tip: Vector3<f64>,
    /// Grasp reference point of the grapple.
    pub reference: Vector3<f64>,
}

impl CraneFrames {
    pub fn link(&self, link: Link) -> &Isometry3<f64> {
        &self.links[link.index()]
    }

    pub fn link_point(&self, link: Link, local: &Vector3<f64>) -> Vector3<f64> {
        (self.links[link.index()] * nalgebra::Point3::from(*local)).coords
    }

    pub fn grapple_pose(&self) -> &Isometry3<f64> {
        self.link(Link::GrappleBody)
    }

    /// Yaw of the grapple jaw axis (body x) in the horizontal plane.
    pub fn grapple_yaw(&self) -> f64 {
        let x = self.grapple_pose().rotation * Vector3::x();
        x.y.atan2(x.x)
    }

    /// Angle between the grapple's vertical axis and world vertical.
    pub fn grapple_tilt(&self) -> f64 {
        let z = self.grapple_pose().rotation * Vector3::z();
        z.z.clamp(-1.0, 1.0).acos()
    }

    /// Column `j` of the linear and angular velocity map for a world
    /// point rigidly attached to `link`.
    fn column(&self, link: Link, p: &Vector3<f64>, j: usize) -> (Vector3<f64>, Vector3<f64>) {
        let zero = (Vector3::zeros(), Vector3::zeros());
        let rot = |axis: Vector3<f64>, anchor: Vector3<f64>| (axis.cross(&(p - anchor)), axis);
        let depth = match link {
            Link::Pillar => 1,
            Link::MainBoom => 2,
            Link::OuterBoom => 3,
            Link::Telescope => 4,
            _ => 4,
        };
        match j {
            A..=C if j < depth => {
                if j > A && link.below_tip() {
                    // booms only translate the levelled hanger frame
                    (self.axes[j].cross(&(self.tip - self.anchors[j])), Vector3::zeros())
                } else {
                    rot(self.axes[j], self.anchors[j])
                }
            }
            D if depth > D => (self.axes[D], Vector3::zeros()),
            G | H | E if link.below_tip() => rot(self.axes[j], self.anchors[j]),
            F => match link {
                Link::ClawLeft => rot(self.axes[F], self.anchors[F]),
                Link::ClawRight => rot(self.claw_right_axis, self.claw_right_anchor),
                _ => zero,
            },
            _ => zero,
        }
    }

    /// Linear velocity Jacobian (3×8) of a world point attached to `link`.
    pub fn point_jacobian(&self, link: Link, p: &Vector3<f64>) -> PointJacobian {
        let mut jac = PointJacobian::zeros();
        for j in 0..N_JOINTS {
            let (lin, _) = self.column(link, p, j);
            jac.set_column(j, &lin);
        }
        jac
    }

    /// Angular velocity Jacobian (3×8) of `link`.
    pub fn angular_jacobian(&self, link: Link) -> PointJacobian {
        let mut jac = PointJacobian::zeros();
        let p = self.links[link.index()].translation.vector;
        for j in 0..N_JOINTS {
            let (_, ang) = self.column(link, &p, j);
            jac.set_column(j, &ang);
        }
        jac
    }

    /// Crane-tip linear velocity with respect to the boom joints a–d.
    pub fn tip_jacobian(&self) -> TipJacobian {
        let full = self.point_jacobian(Link::Telescope, &self.tip);
        full.fixed_columns::<4>(0).into_owned()
    }
}

/// Load-cell reading: carried mass relative to the empty grapple,
/// `(m − m_empty) / m_empty`, clipped to [−10, 10].
pub fn normalized_load(carried_mass: f64, empty_mass: f64) -> f64 {
    ((carried_mass - empty_mass) / empty_mass).clamp(-10.0, 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc() -> CraneDescription {
        CraneDescription::fc12()
    }

    #[test]
    fn description_masses_and_actuation() {
        let d = desc();
        assert!((d.total_mass() - 1630.0).abs() < 1e-9);
        assert!((d.grapple_mass() - 249.0).abs() < 1e-9);
        assert_eq!(d.joints.iter().filter(|j| j.actuated).count(), 6);
        assert!(!d.joints[G].actuated && !d.joints[H].actuated);
        assert_eq!(d.boxes.len(), 9);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let d = desc();
        let mut q = d.start_q;
        q[D] = 2.0;
        match d.forward_kinematics(&d.mount_pose(), &q) {
            Err(SimError::JointOutOfRange { joint: 'd', .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn telescope_extension_moves_tip_along_outer_boom() {
        let d = desc();
        let base = d.mount_pose();
        let q0 = d.start_q;
        let mut q1 = q0;
        q1[D] += 1.0;
        let f0 = d.frames(&base, &q0);
        let f1 = d.frames(&base, &q1);
        let axis = f0.link(Link::OuterBoom).rotation * Vector3::x();
        assert!((f1.tip - f0.tip - axis).norm() < 1e-12);
    }

    #[test]
    fn slew_half_turn_mirrors_tip_through_pillar_axis() {
        let d = desc();
        let base = d.mount_pose();
        let mut q = JointVector::zeros();
        let f0 = d.frames(&base, &q);
        q[A] = std::f64::consts::PI;
        // range is ±2.8, so evaluate unchecked
        let f1 = d.frames(&base, &q);
        let axis_pt = f0.anchors[A];
        let r0 = f0.tip - axis_pt;
        let r1 = f1.tip - axis_pt;
        assert!((r1.x + r0.x).abs() < 1e-12 && (r1.y + r0.y).abs() < 1e-12);
        assert!((r1.z - r0.z).abs() < 1e-12);
    }

    #[test]
    fn claw_boxes_follow_profile() {
        let d = desc();
        let claws: Vec<_> = d.boxes.iter().filter(|b| b.link == Link::ClawLeft).collect();
        assert_eq!(claws.len(), 3);
        for (b, w) in claws.iter().zip(d.grapple.claw_profile.windows(2)) {
            let dir = Vector3::new(0.0, w[1].x - w[0].x, w[1].y - w[0].y).normalize();
            let local_z = b.rotation * Vector3::z();
            assert!(local_z.cross(&dir).norm() < 1e-9, "box axis {local_z} vs {dir}");
        }
    }

    #[test]
    fn enclosure_contains_reference_when_closed() {
        let d = desc();
        let poly = d.enclosure_polygon(0.0);
        let r = d.grapple.reference;
        assert!(crate::geometry::point_in_polygon(&Vector2::new(r.y, r.z), &poly));
    }
}

//! Cartesian velocity control of the crane tip through the four boom
//! joints a–d, using a damped, articulation-weighted pseudo-inverse.

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::crane::{CraneDescription, CraneFrames, JointVector, TipJacobian};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    /// Damping added to `J W Jᵀ` (m²/s²).
    pub damping: f64,
    /// Weight at the range limits.
    pub edge_weight: f64,
    /// Width of the tapering zone at each end, as a fraction of range.
    pub edge_zone: f64,
    /// Per-joint output clip in native units.
    pub velocity_clip: f64,
    pub degenerate_condition: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 1e-6,
            edge_weight: 0.1,
            edge_zone: 0.15,
            velocity_clip: 1.0,
            degenerate_condition: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    /// Joint velocities of a, b, c, d.
    pub qd: Vector4<f64>,
    /// Tip velocity produced by `qd`: `J q̇`.
    pub achieved: Vector3<f64>,
    pub weights: Vector4<f64>,
    /// Some joint was clipped or clamped at a limit.
    pub clipped: bool,
    /// `J W Jᵀ` condition number exceeded the configured bound.
    pub degenerate: bool,
    pub condition: f64,
}

fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Weight of a joint at articulation fraction `u` (0 at the lower limit,
/// 1 at the upper).
pub fn articulation_weight(u: f64, cfg: &IkConfig) -> f64 {
    let edge = u.min(1.0 - u).max(0.0);
    let s = smootherstep(edge / cfg.edge_zone);
    cfg.edge_weight + (1.0 - cfg.edge_weight) * s
}

pub fn weights(desc: &CraneDescription, q: &JointVector, cfg: &IkConfig) -> Vector4<f64> {
    Vector4::from_fn(|i, _| articulation_weight(desc.joints[i].fraction(q[i]), cfg))
}

/// Resolves a desired tip velocity into boom joint velocities.
pub fn solve(
    desc: &CraneDescription,
    frames: &CraneFrames,
    q: &JointVector,
    v_des: &Vector3<f64>,
    cfg: &IkConfig,
) -> IkSolution {
    let j = frames.tip_jacobian();
    let w = weights(desc, q, cfg);
    solve_with(desc, &j, &w, q, v_des, cfg)
}

pub fn solve_with(
    desc: &CraneDescription,
    j: &TipJacobian,
    w: &Vector4<f64>,
    q: &JointVector,
    v_des: &Vector3<f64>,
    cfg: &IkConfig,
) -> IkSolution {
    let jw = j * nalgebra::Matrix4::from_diagonal(w);
    let a: Matrix3<f64> = jw * j.transpose() + Matrix3::identity() * cfg.damping;
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let y = a
        .cholesky()
        .map(|c| c.solve(v_des))
        .unwrap_or_else(|| a.try_inverse().unwrap_or_else(Matrix3::zeros) * v_des);
    let mut qd = jw.transpose() * y;

    let mut clipped = false;
    for i in 0..4 {
        let spec = &desc.joints[i];
        let (lo, hi) = spec.range;
        if (q[i] <= lo && qd[i] < 0.0) || (q[i] >= hi && qd[i] > 0.0) {
            qd[i] = 0.0;
            clipped = true;
        }
        let c = qd[i].clamp(-cfg.velocity_clip, cfg.velocity_clip);
        if c != qd[i] {
            clipped = true;
            qd[i] = c;
        }
    }
    IkSolution {
        achieved: j * qd,
        qd,
        weights: *w,
        clipped,
        degenerate: condition > cfg.degenerate_condition,
        condition,
    }
}

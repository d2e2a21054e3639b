//! Log-pile generation: drop stacked logs with random offsets onto a
//! Perlin terrain, settle them, pick the grasp target and capture the
//! frozen reconstruction.

use std::path::Path;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{log_colours, CaptureParams, Reconstruction};
use crate::codec::{Reader, Writer};
use crate::dynamics::{SolverConfig, World};
use crate::error::{Result, SimError};
use crate::geometry::{clip_convex, convex_hull, polygon_area};
use crate::logs;
use crate::terrain::{gen_terrain, Heightfield, TerrainParams};

pub const SCENE_MAGIC: &[u8; 4] = b"GSCN";
pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PileParams {
    pub terrain: TerrainParams,
    /// Std of each horizontal offset component (m).
    pub sigma_pos: f64,
    /// Std of the yaw offset (rad).
    pub sigma_rot: f64,
    /// Vertical spacing between consecutive log centres before the drop (m).
    pub stack_gap: f64,
    /// Clearance of the lowest log above the terrain beneath it (m).
    pub drop_clearance: f64,
    pub relax_speed: f64,
    /// Time the mean speed must stay below `relax_speed` (s).
    pub relax_hold: f64,
    pub max_settle_time: f64,
    /// Overlap fraction of a log's footprint that counts as occlusion.
    pub occlusion_fraction: f64,
    pub max_attempts: u32,
    pub capture_extent: f64,
    pub capture_resolution: usize,
}

impl Default for PileParams {
    fn default() -> Self {
        Self {
            terrain: TerrainParams::default(),
            sigma_pos: 0.5,
            sigma_rot: 0.25,
            stack_gap: 0.25,
            drop_clearance: 0.05,
            relax_speed: 5e-3,
            relax_hold: 0.5,
            max_settle_time: 10.0,
            occlusion_fraction: 0.1,
            max_attempts: 16,
            capture_extent: 16.0,
            capture_resolution: 512,
        }
    }
}

impl PileParams {
    pub fn capture(&self) -> CaptureParams {
        CaptureParams {
            extent: self.capture_extent,
            resolution: self.capture_resolution,
        }
    }
}

/// Horizontal offset and yaw of one log before the drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOffset {
    pub dx: f64,
    pub dy: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogState {
    pub pose: Isometry3<f64>,
    pub linvel: Vector3<f64>,
    pub angvel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspTarget {
    pub position: Vector3<f64>,
    /// Horizontal direction of the log's long axis in [0, π).
    pub axis_angle: f64,
    pub log_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PileScene {
    pub seed: u64,
    pub terrain: Heightfield,
    pub logs: Vec<LogState>,
    pub colours: Vec<[f32; 3]>,
    pub target: GraspTarget,
    pub reconstruction: Reconstruction,
    pub relaxed: bool,
    pub settle_time: f64,
}

/// Settling statistics of one generation attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleReport {
    pub time: f64,
    pub mean_speed: f64,
    pub relaxed: bool,
    pub max_penetration: f64,
    /// Deepest contact at the end of settling.
    pub final_penetration: f64,
}

pub fn sample_offsets(rng: &mut ChaCha8Rng, n: usize, params: &PileParams) -> Vec<LogOffset> {
    let pos = Normal::new(0.0, params.sigma_pos).expect("finite std");
    let rot = Normal::new(0.0, params.sigma_rot).expect("finite std");
    (0..n)
        .map(|_| LogOffset {
            dx: pos.sample(rng),
            dy: pos.sample(rng),
            yaw: rot.sample(rng),
        })
        .collect()
}

/// Highest terrain point under a log's footprint.
fn terrain_max_under(terrain: &Heightfield, pose: &Isometry3<f64>) -> f64 {
    let half = logs::LOG_LENGTH / 2.0;
    let axis = pose.rotation * Vector3::x();
    let side = pose.rotation * Vector3::y() * 0.1;
    let c = pose.translation.vector;
    let mut z = f64::NEG_INFINITY;
    for k in 0..=28 {
        let p = c + axis * (-half + logs::LOG_LENGTH * k as f64 / 28.0);
        for s in [-1.0, 0.0, 1.0] {
            let q = p + side * s;
            z = z.max(terrain.height(q.x, q.y));
        }
    }
    z
}

/// Initial stacked poses for the given offsets.
pub fn drop_poses(terrain: &Heightfield, offsets: &[LogOffset], params: &PileParams) -> Vec<Isometry3<f64>> {
    let mut out: Vec<Isometry3<f64>> = Vec::with_capacity(offsets.len());
    let mut prev_z = f64::NEG_INFINITY;
    for o in offsets {
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), o.yaw);
        let mut pose = Isometry3::from_parts(Translation3::new(o.dx, o.dy, 0.0), rot);
        let ground = terrain_max_under(terrain, &pose);
        let z = (ground + 0.1 + params.drop_clearance).max(prev_z + params.stack_gap);
        pose.translation.vector.z = z;
        prev_z = z;
        out.push(pose);
    }
    out
}

/// Simulates dropped logs until relaxed or the time limit passes.
pub fn settle(world: &mut World, params: &PileParams) -> SettleReport {
    let hold_steps = (params.relax_hold / world.config.dt).round() as u64;
    let max_steps = (params.max_settle_time / world.config.dt).round() as u64;
    let mut calm = 0u64;
    let mut max_pen: f64 = 0.0;
    while world.steps < max_steps {
        world.step();
        max_pen = max_pen.max(world.diagnostics.max_penetration);
        if world.mean_log_speed() < params.relax_speed {
            calm += 1;
            if calm >= hold_steps {
                return SettleReport {
                    time: world.time,
                    mean_speed: world.mean_log_speed(),
                    relaxed: true,
                    max_penetration: max_pen,
                    final_penetration: world.diagnostics.max_penetration,
                };
            }
        } else {
            calm = 0;
        }
    }
    SettleReport {
        time: world.time,
        mean_speed: world.mean_log_speed(),
        relaxed: false,
        max_penetration: max_pen,
        final_penetration: world.diagnostics.max_penetration,
    }
}

/// Solver settings used while settling piles (no sleeping).
pub fn settle_config() -> SolverConfig {
    SolverConfig::default()
}

/// Settles logs dropped with explicit offsets and assembles the scene.
pub fn build_pile(
    seed: u64,
    terrain: Heightfield,
    offsets: &[LogOffset],
    params: &PileParams,
) -> Result<(PileScene, SettleReport)> {
    let mut world = World::new(settle_config(), terrain);
    for p in drop_poses(&world.terrain, offsets, params) {
        world.add_log(p);
    }
    let report = settle(&mut world, params);
    if !report.relaxed {
        return Err(SimError::PileRejected {
            mean_speed: report.mean_speed,
            time: report.time,
        });
    }
    let logs: Vec<LogState> = world
        .bodies
        .iter()
        .map(|b| LogState {
            pose: b.pose,
            linvel: b.linvel,
            angvel: b.angvel,
        })
        .collect();
    let poses: Vec<Isometry3<f64>> = logs.iter().map(|l| l.pose).collect();
    let target = select_target(&poses, params.occlusion_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_10a5);
    let colours = log_colours(logs.len(), &mut rng);
    let reconstruction = Reconstruction::capture(&world.terrain, &poses, &colours, Vector2::zeros(), &params.capture());
    Ok((
        PileScene {
            seed,
            terrain: world.terrain,
            logs,
            colours,
            target,
            reconstruction,
            relaxed: true,
            settle_time: report.time,
        },
        report,
    ))
}

/// One generation attempt: terrain and offsets drawn from `seed`.
pub fn gen_pile(seed: u64, n_logs: usize, params: &PileParams) -> Result<(PileScene, SettleReport)> {
    if !(2..=5).contains(&n_logs) {
        return Err(SimError::InvalidArgument(format!("pile size {n_logs} outside 2..=5")));
    }
    let terrain = gen_terrain(seed, &params.terrain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ n_logs as u64);
    let offsets = sample_offsets(&mut rng, n_logs, params);
    build_pile(seed, terrain, &offsets, params)
}

/// Generates a relaxed pile, resampling rejected attempts with
/// `seed + k · 1_000_003`. Returns the scene and the number of rejections.
pub fn generate_scene(seed: u64, n_logs: usize, params: &PileParams) -> Result<(PileScene, u32)> {
    let mut last = None;
    for k in 0..params.max_attempts {
        let s = seed.wrapping_add(k as u64 * 1_000_003);
        match gen_pile(s, n_logs, params) {
            Ok((scene, _)) => return Ok((scene, k)),
            Err(e @ SimError::PileRejected { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(SimError::PileRejected {
        mean_speed: f64::NAN,
        time: params.max_settle_time,
    }))
}

/// Horizontal footprint of a log (hull of both cuboids).
pub fn log_footprint(pose: &Isometry3<f64>) -> Vec<Vector2<f64>> {
    let pts: Vec<Vector2<f64>> = logs::world_boxes(pose)
        .iter()
        .flat_map(|b| b.vertices())
        .map(|v| Vector2::new(v.x, v.y))
        .collect();
    convex_hull(&pts)
}

/// Which logs have a higher log covering more than `fraction` of their
/// footprint.
pub fn occluded(poses: &[Isometry3<f64>], fraction: f64) -> Vec<bool> {
    let fps: Vec<Vec<Vector2<f64>>> = poses.iter().map(log_footprint).collect();
    (0..poses.len())
        .map(|i| {
            let zi = poses[i].translation.vector.z;
            let area = polygon_area(&fps[i]);
            (0..poses.len()).any(|j| {
                j != i
                    && poses[j].translation.vector.z > zi
                    && polygon_area(&clip_convex(&fps[i], &fps[j])) > fraction * area
            })
        })
        .collect()
}

/// The unoccluded log nearest to the combined centre of mass.
pub fn select_target(poses: &[Isometry3<f64>], occlusion_fraction: f64) -> GraspTarget {
    assert!(!poses.is_empty(), "select_target needs at least one log");
    let com = poses.iter().map(|p| p.translation.vector).sum::<Vector3<f64>>() / poses.len() as f64;
    let occ = occluded(poses, occlusion_fraction);
    let key = |i: usize| {
        let p = poses[i].translation.vector;
        ((p - com).norm(), p.x, p.y, p.z)
    };
    let best = (0..poses.len())
        .filter(|&i| !occ[i])
        .min_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(ka.3.total_cmp(&kb.3))
        })
        .expect("the highest log is never occluded");
    GraspTarget {
        position: poses[best].translation.vector,
        axis_angle: logs::axis_angle(&poses[best]),
        log_index: best,
    }
}

/// Gap between each log's lowest vertex and the terrain below it.
pub fn ground_clearances(scene: &PileScene) -> Vec<f64> {
    scene
        .logs
        .iter()
        .map(|l| {
            let p = logs::lowest_point(&l.pose);
            p.z - scene.terrain.height(p.x, p.y)
        })
        .collect()
}

impl PileScene {
    pub fn poses(&self) -> Vec<Isometry3<f64>> {
        self.logs.iter().map(|l| l.pose).collect()
    }

    /// A fresh world holding this scene's terrain and logs.
    pub fn world(&self, config: SolverConfig) -> World {
        let mut w = World::new(config, self.terrain.clone());
        for l in &self.logs {
            let i = w.add_log(l.pose);
            w.bodies[i].linvel = l.linvel;
            w.bodies[i].angvel = l.angvel;
        }
        w
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(SCENE_MAGIC);
        w.u32(SCENE_VERSION);
        w.u64(self.seed);
        w.u32(self.logs.len() as u32);
        w.u8(self.relaxed as u8);
        w.f64(self.settle_time);
        let t = &self.terrain;
        w.vec2(&t.origin);
        w.f64(t.cell_size);
        w.u32(t.nx as u32);
        w.u32(t.ny as u32);
        w.u64(t.seed);
        w.f32s(&t.elevations);
        for (l, c) in self.logs.iter().zip(&self.colours) {
            w.pose(&l.pose);
            w.vec3(&l.linvel);
            w.vec3(&l.angvel);
            w.f32s(c);
        }
        w.vec3(&self.target.position);
        w.f64(self.target.axis_angle);
        w.u32(self.target.log_index as u32);
        let r = &self.reconstruction;
        w.f64(r.extent);
        w.vec2(&r.centre);
        w.u32(r.resolution as u32);
        for c in &r.rgb {
            w.f32s(c);
        }
        w.f32s(&r.surface_z);
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.header(SCENE_MAGIC, SCENE_VERSION)?;
        let seed = r.u64()?;
        let n = r.u32()? as usize;
        if n > 64 {
            return Err(SimError::Format(format!("implausible log count {n}")));
        }
        let relaxed = r.u8()? != 0;
        let settle_time = r.f64()?;
        let origin = r.vec2()?;
        let cell_size = r.f64()?;
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let tseed = r.u64()?;
        let elevations = r.f32s(nx.saturating_mul(ny))?;
        let terrain = Heightfield {
            origin,
            cell_size,
            nx,
            ny,
            elevations,
            seed: tseed,
        };
        let mut logs_ = Vec::with_capacity(n);
        let mut colours = Vec::with_capacity(n);
        for _ in 0..n {
            let pose = r.pose()?;
            let linvel = r.vec3()?;
            let angvel = r.vec3()?;
            let c = r.f32s(3)?;
            logs_.push(LogState { pose, linvel, angvel });
            colours.push([c[0], c[1], c[2]]);
        }
        let position = r.vec3()?;
        let axis_angle = r.f64()?;
        let log_index = r.u32()? as usize;
        let extent = r.f64()?;
        let centre = r.vec2()?;
        let res = r.u32()? as usize;
        let cells = res.saturating_mul(res);
        let flat = r.f32s(cells.saturating_mul(3))?;
        let rgb = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let surface_z = r.f32s(cells)?;
        r.finish()?;
        Ok(Self {
            seed,
            terrain,
            logs: logs_,
            colours,
            target: GraspTarget {
                position,
                axis_angle,
                log_index,
            },
            reconstruction: Reconstruction {
                extent,
                centre,
                resolution: res,
                rgb,
                surface_z,
            },
            relaxed,
            settle_time,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

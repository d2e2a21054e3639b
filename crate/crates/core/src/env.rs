//! The episodic grasping environment: pile placement, observation
//! assembly, action application through the IK, staged reward and
//! termination, plus the difficulty curriculum.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, FRAME_PIXELS};
use crate::crane::{CraneDescription, JointVector, Link, A, D, E, F, G, H};
use crate::dynamics::{Articulation, GraspInfo, SolverConfig, World};
use crate::error::{Result, SimError};
use crate::ik::{self, IkConfig};
use crate::scene::{generate_scene, PileParams, PileScene};

pub const N_SCALARS: usize = 16;
pub const N_ACTIONS: usize = 5;
pub const CLIP: f64 = 10.0;

/// `e^{−½ (x/σ)²}`.
pub fn gaussian(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(SimError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok((-0.5 * (x / sigma).powi(2)).exp())
}

fn g(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp()
}

/// Lift height needed for success at difficulty `d`.
pub fn success_height(d: f64) -> f64 {
    0.25 + 0.85 * d.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub target_gain: f64,
    pub sigma_grasp: f64,
    pub per_log: f64,
    /// Energy coefficient per watt and second.
    pub k_energy: f64,
    pub sigma_dist: f64,
    pub sigma_angle: f64,
    pub sigma_tilt: f64,
    /// Stage 1 → 2 when the grapple is this close to the target (m).
    pub stage2_enter: f64,
    /// Stage 2 → 1 when it moves this far away without a hold (m).
    pub stage2_exit: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            target_gain: 25.0,
            sigma_grasp: 0.5,
            per_log: 1.12,
            k_energy: 2e-5,
            sigma_dist: 1.0,
            sigma_angle: 0.3,
            sigma_tilt: 0.2,
            stage2_enter: 0.3,
            stage2_exit: 0.6,
        }
    }
}

/// Named pile-placement and success presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 2–5 logs, full radius range, lesson success height.
    Train,
    /// 2 logs, radius restricted to [4.5, 5.5] m.
    Initial,
    /// 2–5 logs, success at 1.1 m regardless of difficulty.
    Eval,
}

impl Preset {
    pub fn code(self) -> u8 {
        match self {
            Preset::Train => 0,
            Preset::Initial => 1,
            Preset::Eval => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Preset::Train),
            1 => Some(Preset::Initial),
            2 => Some(Preset::Eval),
            _ => None,
        }
    }

    pub fn log_range(self) -> (usize, usize) {
        match self {
            Preset::Initial => (2, 2),
            _ => (2, 5),
        }
    }

    pub fn radius_range(self) -> (f64, f64) {
        match self {
            Preset::Initial => (4.5, 5.5),
            _ => (3.5, 7.5),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Preset::Train),
            "initial" => Ok(Preset::Initial),
            "eval" => Ok(Preset::Eval),
            _ => Err(SimError::InvalidArgument(format!("unknown preset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub solver: SolverConfig,
    pub ik: IkConfig,
    pub pile: PileParams,
    pub reward: RewardConfig,
    /// Physics steps per control step.
    pub substeps: usize,
    pub max_steps: usize,
    /// Tip speed for a unit action (m/s).
    pub tip_speed: f64,
    /// Distinct piles per pile size; episode seeds map onto them modulo
    /// this count. 0 generates a fresh pile for every seed.
    pub scene_pool: u64,
    pub eval_height: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let mut solver = SolverConfig::default();
        solver.sleep.enabled = true;
        Self {
            solver,
            ik: IkConfig::default(),
            pile: PileParams::default(),
            reward: RewardConfig::default(),
            substeps: 3,
            max_steps: 200,
            tip_speed: 1.0,
            scene_pool: 64,
            eval_height: 1.1,
        }
    }
}

impl EnvConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Reads the file named by `GRAPPLESIM_CONFIG`, or the defaults.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os("GRAPPLESIM_CONFIG") {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    pub fn control_dt(&self) -> f64 {
        self.solver.dt * self.substeps as f64
    }
}

/// Pile pose relative to the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub radius: f64,
    pub bearing: f64,
    pub yaw: f64,
    pub z: f64,
}

impl Placement {
    /// Maps pile-frame coordinates into the vehicle frame.
    pub fn transform(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.radius * self.bearing.cos(), self.radius * self.bearing.sin(), self.z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw),
        )
    }
}

/// The d = 0 placement (pile under the grapple start) and a random far
/// placement; the result interpolates linearly between them.
pub fn pile_placement(d: f64, rng: &mut impl Rng, preset: Preset, start_radius: f64) -> Placement {
    let (r_lo, r_hi) = preset.radius_range();
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let far = Placement {
        radius: rng.random_range(r_lo..=r_hi),
        bearing: side * FRAC_PI_2 + rng.random_range(-0.6..=0.6),
        yaw: rng.random_range(-PI..PI),
        z: rng.random_range(-0.5..=1.0),
    };
    let near = Placement {
        radius: start_radius,
        bearing: 0.0,
        yaw: 0.0,
        z: 0.0,
    };
    let d = d.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| a + (b - a) * d;
    Placement {
        radius: lerp(near.radius, far.radius),
        bearing: lerp(near.bearing, far.bearing),
        yaw: lerp(near.yaw, far.yaw),
        z: lerp(near.z, far.z),
    }
}

/// Shared cache of generated piles keyed by (pile seed, log count).
#[derive(Debug, Default)]
pub struct SceneCache {
    map: Mutex<HashMap<(u64, usize), Arc<PileScene>>>,
}

impl SceneCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, seed: u64, n_logs: usize, params: &PileParams) -> Result<Arc<PileScene>> {
        if let Some(s) = self.map.lock().expect("cache lock").get(&(seed, n_logs)) {
            return Ok(s.clone());
        }
        let (scene, _) = generate_scene(seed, n_logs, params)?;
        let scene = Arc::new(scene);
        self.map
            .lock()
            .expect("cache lock")
            .entry((seed, n_logs))
            .or_insert_with(|| scene.clone());
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub scalars: [f32; N_SCALARS],
    pub grey: Vec<f32>,
    pub depth: Vec<f32>,
}

impl Observation {
    pub fn zeros() -> Self {
        Self {
            scalars: [0.0; N_SCALARS],
            grey: vec![0.0; FRAME_PIXELS],
            depth: vec![0.0; FRAME_PIXELS],
        }
    }
}

/// Index names of the 16 observation scalars.
pub const SCALAR_NAMES: [&str; N_SCALARS] = [
    "rel_x", "rel_y", "rel_z", "vel_x", "vel_y", "vel_z", "speed", "rot_angle", "rot_speed", "swing_g",
    "swing_h", "swing_g_speed", "swing_h_speed", "open_angle", "open_speed", "load",
];

/// Clipping bound of scalar `i`: the joint channels 7–14 are scaled to
/// [−1, 1], the rest clipped at ±`CLIP`.
pub fn scalar_bound(i: usize) -> f64 {
    if (7..=14).contains(&i) {
        1.0
    } else {
        CLIP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub r_target: f64,
    pub r_guide: f64,
    pub r_energy: f64,
    pub total: f64,
    pub stage: u8,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub stage: u8,
    pub n_logs_held: usize,
    pub x_delta_grasp: f64,
    /// Mean actuator power over the control step (W).
    pub power: f64,
    pub success: bool,
    pub truncated: bool,
    pub target_position: Vector3<f64>,
    pub target_axis_angle: f64,
    pub grapple_yaw: f64,
    /// Signed jaw-to-log angle in (−π/2, π/2].
    pub angle_error: f64,
    pub grapple_closed: bool,
    pub lift: f64,
    /// Grapple reference in the pile frame.
    pub reference: Vector3<f64>,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetOptions {
    pub preset: Preset,
    pub difficulty: f64,
    pub seed: u64,
    pub n_logs: Option<usize>,
    /// Horizontal shift applied to the suggested grasp target (m).
    pub target_offset: [f64; 2],
}

impl ResetOptions {
    pub fn new(preset: Preset, difficulty: f64, seed: u64) -> Self {
        Self {
            preset,
            difficulty,
            seed,
            n_logs: None,
            target_offset: [0.0; 2],
        }
    }

    pub fn with_logs(mut self, n: usize) -> Self {
        self.n_logs = Some(n);
        self
    }
}

/// Signed smallest rotation from the jaw direction to the log axis,
/// treating both as undirected.
pub fn axis_error(grapple_yaw: f64, axis_angle: f64) -> f64 {
    let e = (axis_angle - grapple_yaw).rem_euclid(PI);
    if e > FRAC_PI_2 {
        e - PI
    } else {
        e
    }
}

pub struct GraspEnv {
    pub config: EnvConfig,
    pub desc: Arc<CraneDescription>,
    cache: Arc<SceneCache>,
    world: Option<World>,
    scene: Option<Arc<PileScene>>,
    options: Option<ResetOptions>,
    placement: Option<Placement>,
    stage: u8,
    steps: usize,
    done: bool,
    initial_z: Vec<f64>,
    hold_onset: Option<Vector3<f64>>,
    start_radius: f64,
    fixed_scene: Option<Arc<PileScene>>,
}

impl GraspEnv {
    pub fn new(config: EnvConfig, desc: Arc<CraneDescription>, cache: Arc<SceneCache>) -> Self {
        let start = desc.frames(&desc.mount_pose(), &desc.start_q);
        let start_radius = start.reference.xy().norm();
        Self {
            config,
            desc,
            cache,
            world: None,
            scene: None,
            options: None,
            placement: None,
            stage: 1,
            steps: 0,
            done: true,
            initial_z: Vec::new(),
            hold_onset: None,
            start_radius,
            fixed_scene: None,
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(EnvConfig::default(), Arc::new(CraneDescription::fc12()), Arc::new(SceneCache::new()))
    }

    /// Makes every reset use this pile instead of generating one; the
    /// placement is still drawn from the reset options.
    pub fn set_fixed_scene(&mut self, scene: Option<Arc<PileScene>>) {
        self.fixed_scene = scene;
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn world_mut(&mut self) -> Option<&mut World> {
        self.world.as_mut()
    }

    pub fn scene(&self) -> Option<&Arc<PileScene>> {
        self.scene.as_ref()
    }

    pub fn placement(&self) -> Option<Placement> {
        self.placement
    }

    pub fn options(&self) -> Option<ResetOptions> {
        self.options
    }

    /// Grapple reference position at the step a hold was first detected.
    pub fn hold_onset(&self) -> Option<Vector3<f64>> {
        self.hold_onset
    }

    pub fn is_active(&self) -> bool {
        self.world.is_some() && !self.done
    }

    fn lift_height(&self) -> f64 {
        match self.options {
            Some(o) if o.preset == Preset::Eval => self.config.eval_height,
            Some(o) => success_height(o.difficulty),
            None => success_height(0.0),
        }
    }

    pub fn reset(&mut self, opts: ResetOptions) -> Result<StepResult> {
        if !(0.0..=1.0).contains(&opts.difficulty) {
            return Err(SimError::InvalidArgument(format!("difficulty {} outside [0, 1]", opts.difficulty)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (lo, hi) = opts.preset.log_range();
        let n_logs = match opts.n_logs {
            Some(n) if (2..=5).contains(&n) => n,
            Some(n) => return Err(SimError::InvalidArgument(format!("pile size {n} outside 2..=5"))),
            None => rng.random_range(lo..=hi),
        };
        let pile_seed = if self.config.scene_pool == 0 {
            opts.seed
        } else {
            opts.seed % self.config.scene_pool
        };
        let scene = match &self.fixed_scene {
            Some(s) => s.clone(),
            None => self.cache.get(pile_seed, n_logs, &self.config.pile)?,
        };
        let placement = pile_placement(opts.difficulty, &mut rng, opts.preset, self.start_radius);
        self.reset_with_scene(scene, placement, opts)
    }

    /// Starts an episode on a given pile and placement.
    pub fn reset_with_scene(
        &mut self,
        scene: Arc<PileScene>,
        placement: Placement,
        opts: ResetOptions,
    ) -> Result<StepResult> {
        let scene = if opts.target_offset == [0.0; 2] {
            scene
        } else {
            let mut shifted = (*scene).clone();
            shifted.target.position.x += opts.target_offset[0];
            shifted.target.position.y += opts.target_offset[1];
            Arc::new(shifted)
        };
        let base = placement.transform().inverse() * self.desc.mount_pose();
        let mut world = scene.world(self.config.solver.clone());
        world.set_crane(Articulation::new(self.desc.clone(), base, self.desc.start_q));
        world.asleep = self.config.solver.sleep.enabled;
        self.initial_z = world.bodies.iter().map(|b| b.pose.translation.vector.z).collect();
        self.world = Some(world);
        self.scene = Some(scene);
        self.options = Some(opts);
        self.placement = Some(placement);
        self.stage = 1;
        self.steps = 0;
        self.done = false;
        self.hold_onset = None;
        let grasp = self.world.as_ref().unwrap().grasp_info();
        let info = self.info(&grasp, 0.0, false, false);
        Ok(StepResult {
            obs: self.observe(),
            reward: RewardBreakdown {
                stage: 1,
                ..Default::default()
            },
            done: false,
            info,
        })
    }

    /// Applies a 5-component action for one control step.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.is_active() {
            return Err(SimError::EpisodeNotActive);
        }
        if action.len() != N_ACTIONS {
            return Err(SimError::InvalidArgument(format!("expected {N_ACTIONS} action values, got {}", action.len())));
        }
        if action.iter().any(|a| !a.is_finite()) {
            self.done = true;
            return Err(SimError::NonFiniteAction);
        }
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let cfg = &self.config;
        let world = self.world.as_mut().expect("active episode");
        let v_vehicle = Vector3::new(a[0], a[1], a[2]) * cfg.tip_speed;
        let mut power = 0.0;
        for _ in 0..cfg.substeps {
            let crane = world.crane.as_mut().expect("crane present");
            let v_world = crane.base.rotation * v_vehicle;
            let frames = crane.frames();
            let sol = ik::solve(&self.desc, &frames, &crane.q, &v_world, &cfg.ik);
            for i in A..=D {
                crane.set_motor_target(i, sol.qd[i]);
            }
            crane.set_motor_target(E, a[3] * self.desc.joints[E].velocity_limit);
            crane.set_motor_target(F, a[4] * self.desc.joints[F].velocity_limit);
            world.step();
            power += world.crane.as_ref().unwrap().actuator_power();
        }
        power /= cfg.substeps as f64;
        self.steps += 1;

        let grasp = world.grasp_info();
        let lift = self.lift(&grasp);
        let dist = self.target_distance();
        self.stage = match self.stage {
            1 if dist < cfg.reward.stage2_enter => 2,
            2 if grasp.n_logs_held > 0 => 3,
            2 if dist > cfg.reward.stage2_exit => 1,
            3 if grasp.n_logs_held == 0 => 2,
            s => s,
        };
        if grasp.n_logs_held > 0 && self.hold_onset.is_none() {
            self.hold_onset = Some(self.reference());
        }
        let success = grasp.n_logs_held > 0 && lift >= self.lift_height();
        let truncated = !success && self.steps >= cfg.max_steps;
        let reward = self.reward(&grasp, lift, power, success);
        self.done = success || truncated;
        let info = self.info(&grasp, power, success, truncated);
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info,
        })
    }

    fn reference(&self) -> Vector3<f64> {
        let crane = self.world.as_ref().unwrap().crane.as_ref().unwrap();
        crane.frames().reference
    }

    fn target_distance(&self) -> f64 {
        let t = self.scene.as_ref().unwrap().target.position;
        (self.reference() - t).norm()
    }

    /// Elevation gain of the held logs' centre of mass since reset.
    fn lift(&self, grasp: &GraspInfo) -> f64 {
        if grasp.held_log_ids.is_empty() {
            return 0.0;
        }
        let world = self.world.as_ref().unwrap();
        let n = grasp.held_log_ids.len() as f64;
        grasp
            .held_log_ids
            .iter()
            .map(|&i| world.bodies[i].pose.translation.vector.z - self.initial_z[i])
            .sum::<f64>()
            / n
    }

    fn reward(&self, grasp: &GraspInfo, lift: f64, power: f64, success: bool) -> RewardBreakdown {
        let rc = &self.config.reward;
        let world = self.world.as_ref().unwrap();
        let crane = world.crane.as_ref().unwrap();
        let frames = crane.frames();
        let scene = self.scene.as_ref().unwrap();
        let f = &self.desc.joints[F];
        let open_frac = f.fraction(crane.q[F]);
        let r_stage = match self.stage {
            1 => {
                let dist = (frames.reference - scene.target.position).norm();
                let ang = axis_error(frames.grapple_yaw(), scene.target.axis_angle);
                2.0 * (g(dist, rc.sigma_dist) + g(ang, rc.sigma_angle) + open_frac) / 3.0
            }
            2 => 2.0 + 2.0 * (1.0 - open_frac),
            _ => 4.0 + 4.0 * (lift / self.lift_height()).clamp(0.0, 1.0),
        };
        let r_guide = r_stage * g(frames.grapple_tilt(), rc.sigma_tilt) / self.config.max_steps as f64;
        let r_target = if success {
            target_reward(grasp.x_delta_grasp, grasp.n_logs_held, rc)
        } else {
            0.0
        };
        let r_energy = -rc.k_energy * power * self.config.control_dt();
        RewardBreakdown {
            r_target,
            r_guide,
            r_energy,
            total: r_target + r_guide + r_energy,
            stage: self.stage,
            n_steps: self.steps,
        }
    }

    fn info(&self, grasp: &GraspInfo, power: f64, success: bool, truncated: bool) -> StepInfo {
        let world = self.world.as_ref().unwrap();
        let frames = world.crane.as_ref().unwrap().frames();
        let target = self.scene.as_ref().unwrap().target;
        let yaw = frames.grapple_yaw();
        StepInfo {
            stage: self.stage,
            n_logs_held: grasp.n_logs_held,
            x_delta_grasp: grasp.x_delta_grasp,
            power,
            success,
            truncated,
            target_position: target.position,
            target_axis_angle: target.axis_angle,
            grapple_yaw: yaw,
            angle_error: axis_error(yaw, target.axis_angle),
            grapple_closed: grasp.grapple_closed,
            lift: self.lift(grasp),
            reference: frames.reference,
            step: self.steps,
        }
    }

    fn observe(&self) -> Observation {
        let world = self.world.as_ref().unwrap();
        let crane = world.crane.as_ref().unwrap();
        let frames = crane.frames();
        let scene = self.scene.as_ref().unwrap();
        let inv = crane.base.rotation.inverse();
        let rel_world = frames.reference - scene.target.position;
        let rel = inv * rel_world;
        let vel_world = frames.point_jacobian(Link::GrappleBody, &frames.reference) * crane.qd;
        let vel = inv * vel_world;
        let j = &self.desc.joints;
        let clip = |x: f64| x.clamp(-CLIP, CLIP) as f32;
        let unit = |x: f64| x.clamp(-1.0, 1.0) as f32;
        let q = &crane.q;
        let qd = &crane.qd;
        let scalars = [
            clip(rel.x),
            clip(rel.y),
            clip(rel.z),
            clip(vel.x),
            clip(vel.y),
            clip(vel.z),
            clip(vel.norm()),
            unit(q[E] / PI),
            unit(qd[E] / j[E].velocity_limit),
            unit(q[G] / j[G].range.1),
            unit(q[H] / j[H].range.1),
            unit(qd[G] / j[G].velocity_limit),
            unit(qd[H] / j[H].velocity_limit),
            unit(2.0 * j[F].fraction(q[F]) - 1.0),
            unit(qd[F] / j[F].velocity_limit),
            clip(crane.load_cell()),
        ];
        let frame = scene
            .reconstruction
            .render(&scene.target.position, &rel_world, frames.grapple_yaw());
        Observation {
            scalars,
            grey: frame.grey,
            depth: frame.depth,
        }
    }

    /// Camera frame for the current grapple pose.
    pub fn camera_frame(&self) -> Option<CameraFrame> {
        let world = self.world.as_ref()?;
        let frames = world.crane.as_ref()?.frames();
        let scene = self.scene.as_ref()?;
        let rel = frames.reference - scene.target.position;
        Some(scene.reconstruction.render(&scene.target.position, &rel, frames.grapple_yaw()))
    }

    pub fn crane_q(&self) -> Option<JointVector> {
        Some(self.world.as_ref()?.crane.as_ref()?.q)
    }
}

/// Success payment: `gain · G(x; σ) + per_log · N`.
pub fn target_reward(x_delta_grasp: f64, n_logs: usize, rc: &RewardConfig) -> f64 {
    rc.target_gain * g(x_delta_grasp, rc.sigma_grasp) + rc.per_log * n_logs as f64
}

pub const BATCH_EPISODES: usize = 20;
pub const WINDOW_BATCHES: usize = 10;
pub const ADVANCE_THRESHOLD: f64 = 21.0;
pub const LESSON_STEP: f64 = 0.1;

/// Lesson progression driven by evaluation batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    pub lesson: u32,
    pub lessons_passed: u32,
    pub ring: VecDeque<Vec<f64>>,
}

impl Default for Curriculum {
    fn default() -> Self {
        Self::new()
    }
}

impl Curriculum {
    pub fn new() -> Self {
        Self {
            lesson: 0,
            lessons_passed: 0,
            ring: VecDeque::with_capacity(WINDOW_BATCHES),
        }
    }

    pub fn difficulty(&self) -> f64 {
        (self.lesson as f64 * LESSON_STEP).min(1.0)
    }

    pub fn window_mean(&self) -> Option<f64> {
        let n: usize = self.ring.iter().map(Vec::len).sum();
        if n == 0 {
            return None;
        }
        Some(self.ring.iter().flatten().sum::<f64>() / n as f64)
    }

    /// Pushes one batch of accumulated episode rewards; returns whether the
    /// lesson advanced.
    pub fn update(&mut self, batch: &[f64]) -> Result<bool> {
        if batch.len() != BATCH_EPISODES {
            return Err(SimError::InvalidArgument(format!(
                "evaluation batch must hold {BATCH_EPISODES} rewards, got {}",
                batch.len()
            )));
        }
        if self.ring.len() == WINDOW_BATCHES {
            self.ring.pop_front();
        }
        self.ring.push_back(batch.to_vec());
        let full = self.ring.len() == WINDOW_BATCHES;
        if full && self.window_mean().unwrap_or(0.0) > ADVANCE_THRESHOLD {
            if self.difficulty() < 1.0 {
                self.lesson += 1;
            }
            self.lessons_passed += 1;
            return Ok(true);
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        assert_eq!(gaussian(0.0, 0.3).unwrap(), 1.0);
        assert!((gaussian(0.3, 0.3).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(gaussian(-0.7, 0.4).unwrap(), gaussian(0.7, 0.4).unwrap());
        assert!(gaussian(1.0, 0.0).is_err());
        assert!(gaussian(1.0, -1.0).is_err());
    }

    #[test]
    fn axis_error_wraps() {
        assert!((axis_error(0.1, 0.3) - 0.2).abs() < 1e-12);
        assert!((axis_error(3.0, 0.1) - (0.1 + PI - 3.0)).abs() < 1e-12);
        assert!(axis_error(0.0, FRAC_PI_2 + 0.1) < 0.0);
    }

    #[test]
    fn placement_interpolates() {
        let mut r0 = ChaCha8Rng::seed_from_u64(3);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut rh = ChaCha8Rng::seed_from_u64(3);
        let p0 = pile_placement(0.0, &mut r0, Preset::Train, 5.0);
        let p1 = pile_placement(1.0, &mut r1, Preset::Train, 5.0);
        let ph = pile_placement(0.5, &mut rh, Preset::Train, 5.0);
        assert_eq!(p0, Placement { radius: 5.0, bearing: 0.0, yaw: 0.0, z: 0.0 });
        assert!((ph.radius - 0.5 * (p0.radius + p1.radius)).abs() < 1e-12);
        assert!((ph.bearing - 0.5 * (p0.bearing + p1.bearing)).abs() < 1e-12);
        assert!((ph.yaw - 0.5 * (p0.yaw + p1.yaw)).abs() < 1e-12);
        assert!((ph.z - 0.5 * (p0.z + p1.z)).abs() < 1e-12);
        assert!((-0.5..=1.0).contains(&p1.z));
    }
}

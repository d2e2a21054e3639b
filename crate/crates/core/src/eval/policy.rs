//! Action sources for evaluation: a scripted grasp controller, simple
//! reference policies, replay of recorded actions and a line-based pipe
//! to an external process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{view_extent, FRAME_SIZE};
use crate::env::{Observation, StepInfo, N_ACTIONS, N_SCALARS};
use crate::error::{Result, SimError};

pub type Action = [f64; N_ACTIONS];

/// Maps observations to actions. Implementations may keep per-episode
/// state, reset by `begin_episode`.
pub trait Policy: Send {
    fn begin_episode(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &Observation, info: &StepInfo) -> Result<Action>;

    fn boxed_clone(&self) -> Box<dyn Policy>;

    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Approach,
    Descend,
    Close,
    Lift,
}

/// Descend-close-lift controller. Reads the relative position (scalars
/// 0–2) and opening (13) from the observation, and the stage, hold count
/// and jaw alignment error from the step info.
///
/// With `visual` set, the approach steers to the centroid of the log seen
/// under the grapple in the grey frame instead of the suggested target.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub gain: f64,
    pub hover: f64,
    pub align_tol: f64,
    pub xy_tol: f64,
    /// Reference height above the target centre at which to close.
    pub grip_height: f64,
    pub lift_speed: f64,
    pub close_steps: usize,
    pub max_speed: f64,
    /// Scaled opening at or below which the claws wrap a log.
    pub secure_open: f64,
    pub scoop_speed: f64,
    pub damping: f64,
    pub descent_speed: f64,
    /// Grapple speed below which descent may start (m/s).
    pub settle_speed: f64,
    pub visual: bool,
    phase: Phase,
    timer: usize,
    last_z: f64,
    last_open: f64,
    last_cmd: [f64; 2],
    stall: usize,
    base_yaw: Option<f64>,
    /// Goal minus suggested target, pile frame.
    correction: [f64; 2],
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self {
            gain: 2.0,
            hover: 0.6,
            align_tol: 0.08,
            xy_tol: 0.15,
            grip_height: 0.05,
            lift_speed: 0.8,
            close_steps: 40,
            max_speed: 0.5,
            secure_open: -0.88,
            scoop_speed: 0.2,
            damping: 0.3,
            descent_speed: 0.8,
            settle_speed: 0.15,
            visual: false,
            phase: Phase::Approach,
            timer: 0,
            last_z: f64::NAN,
            last_open: f64::NAN,
            last_cmd: [0.0; 2],
            stall: 0,
            base_yaw: None,
            correction: [0.0; 2],
        }
    }
}

/// Grey level below which a pixel shows a log rather than bare ground.
const LOG_GREY: f32 = 0.85;

impl ScriptedPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn visual() -> Self {
        Self {
            visual: true,
            ..Self::default()
        }
    }

    /// Updates the goal correction from the camera and returns it in the
    /// vehicle frame.
    fn visual_correction(&mut self, obs: &Observation, info: &StepInfo, rel: &[f64; 3]) -> [f64; 2] {
        let rw = info.reference - info.target_position;
        if rel.iter().all(|r| r.abs() < 9.0) && rel[0].hypot(rel[1]) > 0.05 {
            self.base_yaw = Some(rw.y.atan2(rw.x) - rel[1].atan2(rel[0]));
        }
        let Some(psi) = self.base_yaw else {
            return [0.0; 2];
        };
        if self.phase == Phase::Approach {
            if let Some((u, v)) = log_centroid(&obs.grey) {
                let ext = view_extent(rel[2]);
                let (u, v) = (u * ext, v * ext);
                let (s, c) = info.grapple_yaw.sin_cos();
                self.correction = [rw.x + c * u - s * v, rw.y + s * u + c * v];
            }
        }
        let (s, c) = psi.sin_cos();
        let [x, y] = self.correction;
        [c * x + s * y, -s * x + c * y]
    }
}

/// Centre of the log region nearest the frame centre, in frame units
/// (u right, v up, both in [−½, ½]): the midpoint of its extreme pixels
/// along the principal axis, which does not depend on how the thin strip
/// falls on the pixel rows.
pub fn log_centroid(grey: &[f32]) -> Option<(f64, f64)> {
    let n = FRAME_SIZE;
    let mid = (n as f64 - 1.0) / 2.0;
    let seed = (0..n * n)
        .filter(|&k| grey[k] < LOG_GREY)
        .min_by(|&a, &b| {
            let d = |k: usize| ((k / n) as f64 - mid).powi(2) + ((k % n) as f64 - mid).powi(2);
            d(a).total_cmp(&d(b))
        })?;
    let mut seen = vec![false; n * n];
    let mut stack = vec![seed];
    let mut pts = Vec::new();
    seen[seed] = true;
    while let Some(k) = stack.pop() {
        let (i, j) = (k / n, k % n);
        pts.push(((j as f64 + 0.5) / n as f64 - 0.5, 0.5 - (i as f64 + 0.5) / n as f64));
        let lo_i = i.saturating_sub(1);
        let lo_j = j.saturating_sub(1);
        for r in lo_i..=(i + 1).min(n - 1) {
            for c in lo_j..=(j + 1).min(n - 1) {
                let q = r * n + c;
                if !seen[q] && grey[q] < LOG_GREY {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    let m = pts.len() as f64;
    let (mu, mv) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / m, b + p.1 / m));
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for (u, v) in &pts {
        suu += (u - mu) * (u - mu);
        suv += (u - mu) * (v - mv);
        svv += (v - mv) * (v - mv);
    }
    let theta = 0.5 * (2.0 * suv).atan2(suu - svv);
    let (s, c) = theta.sin_cos();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (u, v)| {
        let t = (u - mu) * c + (v - mv) * s;
        (lo.min(t), hi.max(t))
    });
    let t = 0.5 * (lo + hi);
    Some((mu + t * c, mv + t * s))
}

impl Policy for ScriptedPolicy {
    fn begin_episode(&mut self, _seed: u64) {
        self.phase = Phase::Approach;
        self.timer = 0;
        self.last_z = f64::NAN;
        self.last_open = f64::NAN;
        self.last_cmd = [0.0; 2];
        self.stall = 0;
        self.base_yaw = None;
        self.correction = [0.0; 2];
    }

    fn act(&mut self, obs: &Observation, info: &StepInfo) -> Result<Action> {
        let mut rel = [obs.scalars[0] as f64, obs.scalars[1] as f64, obs.scalars[2] as f64];
        if self.visual {
            let [cx, cy] = self.visual_correction(obs, info, &rel);
            rel[0] -= cx;
            rel[1] -= cy;
        }
        let speed = obs.scalars[6] as f64;
        let open = obs.scalars[13] as f64;
        let xy = rel[0].hypot(rel[1]);
        let k = self.gain;
        // horizontal correction, speed-limited to keep the swing small
        let scale = (self.max_speed / (k * xy).max(1e-9)).min(1.0);
        let rotate = (3.0 * info.angle_error).clamp(-1.0, 1.0);
        let mut a = [
            -k * rel[0] * scale - self.damping * obs.scalars[3] as f64,
            -k * rel[1] * scale - self.damping * obs.scalars[4] as f64,
            0.0,
            rotate,
            1.0,
        ];
        self.timer += 1;
        match self.phase {
            Phase::Approach => {
                a[2] = k * (self.hover - rel[2]);
                let aligned = info.angle_error.abs() < self.align_tol;
                if xy < self.xy_tol && aligned && open > 0.9 && speed < self.settle_speed {
                    self.phase = Phase::Descend;
                    self.timer = 0;
                    self.stall = 0;
                }
            }
            Phase::Descend => {
                a[2] = (3.0 * (self.grip_height - rel[2])).max(-self.descent_speed);
                let dz = (rel[2] - self.last_z).abs();
                self.stall = if self.timer > 4 && dz < 0.004 { self.stall + 1 } else { 0 };
                if xy > 2.0 * self.xy_tol {
                    self.phase = Phase::Approach;
                    self.timer = 0;
                } else if rel[2] < self.grip_height + 0.03 || self.stall >= 3 {
                    self.phase = Phase::Close;
                    self.timer = 0;
                }
            }
            Phase::Close => {
                let still = self.timer > 3 && (self.last_open - open).abs() < 0.01;
                self.stall = if still { self.stall + 1 } else { 0 };
                let secure = open <= self.secure_open;
                // blocked short of a secure wrap: rise so the tips scoop under
                let rise = still && !secure;
                a = [
                    0.5 * a[0],
                    0.5 * a[1],
                    if rise { self.scoop_speed } else { 0.0 },
                    0.0,
                    -1.0,
                ];
                let gripped = info.n_logs_held > 0 && secure && (self.stall >= 2 || open <= -0.98);
                if gripped || self.timer >= self.close_steps {
                    self.phase = Phase::Lift;
                    self.timer = 0;
                }
            }
            Phase::Lift => {
                a = [0.0, 0.0, self.lift_speed, 0.0, -1.0];
                if info.n_logs_held == 0 && self.timer > 6 {
                    self.phase = Phase::Approach;
                    self.timer = 0;
                }
            }
        }
        self.last_z = rel[2];
        self.last_open = open;
        for x in &mut a {
            *x = x.clamp(-1.0, 1.0);
        }
        self.last_cmd = [a[0], a[1]];
        Ok(a)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        if self.visual {
            "scripted-visual"
        } else {
            "scripted"
        }
    }
}

/// Uniform random actions in [−1, 1].
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_a11);
    }

    fn act(&mut self, _obs: &Observation, _info: &StepInfo) -> Result<Action> {
        Ok(std::array::from_fn(|_| self.rng.random_range(-1.0..=1.0)))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "random"
    }
}

#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn act(&mut self, _obs: &Observation, _info: &StepInfo) -> Result<Action> {
        Ok(self.0)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "constant"
    }
}

/// `a = W o` on the scalar observation, unclipped.
#[derive(Debug, Clone)]
pub struct LinearPolicy {
    pub weights: [[f64; N_SCALARS]; N_ACTIONS],
}

impl Policy for LinearPolicy {
    fn act(&mut self, obs: &Observation, _info: &StepInfo) -> Result<Action> {
        Ok(std::array::from_fn(|r| {
            self.weights[r]
                .iter()
                .zip(obs.scalars.iter())
                .map(|(w, o)| w * *o as f64)
                .sum()
        }))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// Plays back a fixed action sequence, then zeros.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    pub actions: Vec<Action>,
    cursor: usize,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, cursor: 0 }
    }
}

impl Policy for ReplayPolicy {
    fn begin_episode(&mut self, _seed: u64) {
        self.cursor = 0;
    }

    fn act(&mut self, _obs: &Observation, _info: &StepInfo) -> Result<Action> {
        let a = self.actions.get(self.cursor).copied().unwrap_or([0.0; N_ACTIONS]);
        self.cursor += 1;
        Ok(a)
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// External process speaking one line per step: the 16 scalars are written
/// space-separated, five action values are read back. The camera frames
/// are not sent.
pub struct PipePolicy {
    program: String,
    args: Vec<String>,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl PipePolicy {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            program: program.to_string(),
            args: args.to_vec(),
            child,
            stdin,
            stdout,
        })
    }
}

impl Drop for PipePolicy {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Policy for PipePolicy {
    fn act(&mut self, obs: &Observation, _info: &StepInfo) -> Result<Action> {
        let line: Vec<String> = obs.scalars.iter().map(|x| x.to_string()).collect();
        writeln!(self.stdin, "{}", line.join(" "))?;
        self.stdin.flush()?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply)? == 0 {
            return Err(SimError::InvalidArgument("policy process closed its output".into()));
        }
        let vals: Vec<f64> = reply
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SimError::InvalidArgument(format!("bad policy reply {reply:?}: {e}")))?;
        <Action>::try_from(vals.as_slice())
            .map_err(|_| SimError::InvalidArgument(format!("policy replied {} values, expected {N_ACTIONS}", vals.len())))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(Self::spawn(&self.program, &self.args).expect("respawn policy process"))
    }

    fn name(&self) -> &str {
        "pipe"
    }
}

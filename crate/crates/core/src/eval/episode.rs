//! Single-episode runner, observation noise and the in-memory episode record.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::Fnv;
use crate::env::{scalar_bound, GraspEnv, Observation, ResetOptions, RewardBreakdown, StepInfo, N_SCALARS};
use crate::error::{Result, SimError};

use super::policy::{Action, Policy};

/// Camera channels either kept in full or reduced to a digest.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageData {
    Full { grey: Vec<f32>, depth: Vec<f32> },
    Digest(u64),
}

pub fn image_digest(grey: &[f32], depth: &[f32]) -> u64 {
    let mut h = Fnv::new();
    h.f32s(grey);
    h.f32s(depth);
    h.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsRecord {
    pub scalars: [f32; N_SCALARS],
    pub images: ImageData,
}

impl ObsRecord {
    pub fn new(obs: &Observation, keep_images: bool) -> Self {
        let images = if keep_images {
            ImageData::Full {
                grey: obs.grey.clone(),
                depth: obs.depth.clone(),
            }
        } else {
            ImageData::Digest(image_digest(&obs.grey, &obs.depth))
        };
        Self {
            scalars: obs.scalars,
            images,
        }
    }

    pub fn digest(&self) -> u64 {
        match &self.images {
            ImageData::Full { grey, depth } => image_digest(grey, depth),
            ImageData::Digest(d) => *d,
        }
    }

    /// The observation, when the frames were kept.
    pub fn observation(&self) -> Option<Observation> {
        match &self.images {
            ImageData::Full { grey, depth } => Some(Observation {
                scalars: self.scalars,
                grey: grey.clone(),
                depth: depth.clone(),
            }),
            ImageData::Digest(_) => None,
        }
    }

    /// Same scalars and camera digest.
    pub fn matches(&self, other: &ObsRecord) -> bool {
        self.scalars.iter().zip(&other.scalars).all(|(a, b)| a.to_bits() == b.to_bits()) && self.digest() == other.digest()
    }
}

/// One control step: the action taken and what the environment returned.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub action: Action,
    pub obs: ObsRecord,
    pub reward: RewardBreakdown,
    pub info: StepInfo,
    pub world_hash: u64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub success: bool,
    pub n_logs_held: usize,
    pub pile_size: usize,
    pub accumulated_reward: f64,
    pub target_position: Vector3<f64>,
    pub target_axis_angle: f64,
    /// Grapple reference at the step a hold was first detected.
    pub grasp_position: Option<Vector3<f64>>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub options: ResetOptions,
    pub policy: String,
    pub initial_obs: ObsRecord,
    pub initial_info: StepInfo,
    pub initial_hash: u64,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl EpisodeRecord {
    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Observation and info the policy saw before step `t`.
    pub fn before(&self, t: usize) -> (&ObsRecord, &StepInfo) {
        if t == 0 {
            (&self.initial_obs, &self.initial_info)
        } else {
            (&self.steps[t - 1].obs, &self.steps[t - 1].info)
        }
    }
}

/// What the sweep perturbs: one scalar, or every pixel of a camera channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseTarget {
    Scalar(usize),
    Grey,
    Depth,
}

impl NoiseTarget {
    /// The 16 scalars followed by the two camera channels.
    pub fn all() -> Vec<NoiseTarget> {
        (0..N_SCALARS)
            .map(NoiseTarget::Scalar)
            .chain([NoiseTarget::Grey, NoiseTarget::Depth])
            .collect()
    }

    pub fn name(&self) -> String {
        match self {
            NoiseTarget::Scalar(i) => crate::env::SCALAR_NAMES[*i].to_string(),
            NoiseTarget::Grey => "grey".into(),
            NoiseTarget::Depth => "depth".into(),
        }
    }
}

/// Gaussian observation noise, resampled every step.
#[derive(Debug, Clone)]
pub struct ObsNoise {
    pub target: NoiseTarget,
    pub std: f64,
    rng: ChaCha8Rng,
}

impl ObsNoise {
    pub fn new(target: NoiseTarget, std: f64, seed: u64) -> Result<Self> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(SimError::InvalidArgument(format!("noise std {std}")));
        }
        if let NoiseTarget::Scalar(i) = target {
            if i >= N_SCALARS {
                return Err(SimError::InvalidArgument(format!("scalar index {i} out of range")));
            }
        }
        Ok(Self {
            target,
            std,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Scalars are re-clipped to their channel bound after the noise.
    pub fn apply(&mut self, obs: &mut Observation) {
        if self.std == 0.0 {
            return;
        }
        let n = Normal::new(0.0, self.std).expect("finite std");
        match self.target {
            NoiseTarget::Scalar(i) => {
                let b = scalar_bound(i);
                obs.scalars[i] = (obs.scalars[i] as f64 + n.sample(&mut self.rng)).clamp(-b, b) as f32;
            }
            NoiseTarget::Grey => {
                for p in &mut obs.grey {
                    *p = (*p as f64 + n.sample(&mut self.rng)) as f32;
                }
            }
            NoiseTarget::Depth => {
                for p in &mut obs.depth {
                    *p = (*p as f64 + n.sample(&mut self.rng)) as f32;
                }
            }
        }
    }
}

/// Runs one episode to termination. Policy errors and environment faults
/// abort the episode with that error.
pub fn run_episode(
    env: &mut GraspEnv,
    policy: &mut dyn Policy,
    options: ResetOptions,
    mut noise: Option<&mut ObsNoise>,
    keep_images: bool,
) -> Result<EpisodeRecord> {
    let first = env.reset(options)?;
    policy.begin_episode(options.seed);
    let initial_obs = ObsRecord::new(&first.obs, keep_images);
    let initial_info = first.info.clone();
    let initial_hash = env.world().map(|w| w.snapshot_hash()).unwrap_or(0);
    let pile_size = env.scene().map(|s| s.logs.len()).unwrap_or(0);
    let mut obs = first.obs;
    let mut info = first.info;
    let mut steps = Vec::with_capacity(env.config.max_steps);
    let mut total = 0.0;
    loop {
        if let Some(n) = noise.as_deref_mut() {
            n.apply(&mut obs);
        }
        let action = policy.act(&obs, &info)?;
        let r = env.step(&action)?;
        total += r.reward.total;
        steps.push(StepRecord {
            action,
            obs: ObsRecord::new(&r.obs, keep_images),
            reward: r.reward,
            info: r.info.clone(),
            world_hash: env.world().map(|w| w.snapshot_hash()).unwrap_or(0),
            done: r.done,
        });
        obs = r.obs;
        info = r.info;
        if r.done {
            break;
        }
    }
    let outcome = Outcome {
        success: info.success,
        n_logs_held: info.n_logs_held,
        pile_size,
        accumulated_reward: total,
        target_position: info.target_position,
        target_axis_angle: info.target_axis_angle,
        grasp_position: env.hold_onset(),
        steps: info.step,
    };
    Ok(EpisodeRecord {
        options,
        policy: policy.name().to_string(),
        initial_obs,
        initial_info,
        initial_hash,
        steps,
        outcome,
    })
}

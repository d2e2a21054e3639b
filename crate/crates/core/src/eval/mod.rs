//! Batch evaluation and ablation instruments.

pub mod episode;
pub mod harness;
pub mod policy;

pub use episode::{image_digest, run_episode, EpisodeRecord, ImageData, NoiseTarget, ObsNoise, ObsRecord, Outcome, StepRecord};
pub use harness::*;
pub use policy::{Action, ConstantPolicy, LinearPolicy, PipePolicy, Policy, RandomPolicy, ReplayPolicy, ScriptedPolicy};

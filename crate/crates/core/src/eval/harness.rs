//! Batch evaluation, observation-noise sweeps, action sensitivity on
//! recorded episodes and target-perturbation heatmaps.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::crane::CraneDescription;
use crate::env::{EnvConfig, GraspEnv, Observation, Preset, ResetOptions, SceneCache, N_ACTIONS, N_SCALARS};
use crate::error::{Result, SimError};
use crate::scene::PileScene;

use super::episode::{run_episode, EpisodeRecord, NoiseTarget, ObsNoise, Outcome};
use super::policy::Policy;

/// Observation-noise multipliers `2^-4 … 2^3` of the reference spread.
pub const NOISE_LEVELS: [f64; 8] = [0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const HEATMAP_GRID: usize = 25;
pub const HEATMAP_HALF_WIDTH: f64 = 0.5;
/// Action-sensitivity noise as a fraction of an observation's range.
pub const SENSITIVITY_SCALE: f64 = 0.2;

/// Shared environment setup for a batch. Worker threads each build their
/// own environment; piles come from the shared cache.
#[derive(Clone)]
pub struct EvalContext {
    pub config: EnvConfig,
    pub desc: Arc<CraneDescription>,
    pub cache: Arc<SceneCache>,
    pub workers: usize,
    /// Pile used by every episode instead of generated ones.
    pub scene: Option<Arc<PileScene>>,
}

impl EvalContext {
    pub fn new(config: EnvConfig) -> Self {
        Self {
            config,
            desc: Arc::new(CraneDescription::fc12()),
            cache: Arc::new(SceneCache::new()),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            scene: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_scene(mut self, scene: Arc<PileScene>) -> Self {
        self.scene = Some(scene);
        self
    }

    pub fn env(&self) -> GraspEnv {
        let mut env = GraspEnv::new(self.config.clone(), self.desc.clone(), self.cache.clone());
        env.set_fixed_scene(self.scene.clone());
        env
    }
}

/// Applies `f` to `0..n` across the context's workers, each holding its
/// own environment and policy clone. Output order follows the index.
fn par_map<T, F>(ctx: &EvalContext, policy: &dyn Policy, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut GraspEnv, &mut dyn Policy, usize) -> T + Sync,
{
    let workers = ctx.workers.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let policies: Vec<Box<dyn Policy>> = (0..workers).map(|_| policy.boxed_clone()).collect();
    let work = |mut p: Box<dyn Policy>| {
        let mut env = ctx.env();
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            if i >= n {
                break;
            }
            let v = f(&mut env, p.as_mut(), i);
            out.lock().expect("result lock")[i] = Some(v);
        }
    };
    if workers == 1 {
        policies.into_iter().for_each(work);
    } else {
        std::thread::scope(|s| {
            for p in policies {
                s.spawn(|| work(p));
            }
        });
    }
    out.into_inner()
        .expect("result lock")
        .into_iter()
        .map(|v| v.expect("every index visited"))
        .collect()
}

/// Per-episode noise seed, independent of worker assignment.
fn noise_seed(base: u64, episode_seed: u64) -> u64 {
    base ^ episode_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17)
}

/// An episode that ran to termination, or the reason it was discarded.
pub type EpisodeResult = std::result::Result<EpisodeRecord, String>;

/// Runs the listed episodes. Noise is `(target, std, seed)`.
pub fn run_batch(
    ctx: &EvalContext,
    policy: &dyn Policy,
    episodes: &[ResetOptions],
    noise: Option<(NoiseTarget, f64, u64)>,
    keep_images: bool,
) -> Vec<EpisodeResult> {
    par_map(ctx, policy, episodes.len(), |env, p, i| {
        let opts = episodes[i];
        let mut n = match noise {
            Some((t, std, seed)) => Some(ObsNoise::new(t, std, noise_seed(seed, opts.seed)).map_err(|e| e.to_string())?),
            None => None,
        };
        run_episode(env, p, opts, n.as_mut(), keep_images).map_err(|e| e.to_string())
    })
}

/// Episode options for `count` consecutive seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub preset: Preset,
    pub difficulty: f64,
    pub seed: u64,
    pub episodes: usize,
    pub n_logs: Option<usize>,
}

impl EvalSpec {
    pub fn new(preset: Preset, episodes: usize) -> Self {
        Self {
            preset,
            difficulty: 0.0,
            seed: 0,
            episodes,
            n_logs: None,
        }
    }

    pub fn options(&self) -> Vec<ResetOptions> {
        (0..self.episodes as u64)
            .map(|k| {
                let mut o = ResetOptions::new(self.preset, self.difficulty, self.seed.wrapping_add(k));
                o.n_logs = self.n_logs;
                o
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SizeStats {
    pub episodes: usize,
    pub successes: usize,
}

impl SizeStats {
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub seed: u64,
    pub target: [f64; 2],
    pub grasp: Option<[f64; 2]>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub requested: usize,
    pub valid: usize,
    /// Discarded episodes: seed and fault.
    pub invalid: Vec<(u64, String)>,
    pub successes: usize,
    pub success_rate: f64,
    pub success_ci: (f64, f64),
    pub per_size: BTreeMap<usize, SizeStats>,
    /// Successful episodes by number of logs held at the end.
    pub held_histogram: [usize; 6],
    pub rewards: Vec<f64>,
    pub reward_mean: f64,
    pub reward_ci: (f64, f64),
    pub success_reward_mean: Option<f64>,
    pub scatter: Vec<ScatterPoint>,
}

impl EvalStats {
    pub fn from_results(options: &[ResetOptions], results: &[EpisodeResult], boot_seed: u64) -> Self {
        let mut invalid = Vec::new();
        let mut outcomes: Vec<(u64, Outcome)> = Vec::new();
        for (o, r) in options.iter().zip(results) {
            match r {
                Ok(rec) => outcomes.push((o.seed, rec.outcome)),
                Err(e) => invalid.push((o.seed, e.clone())),
            }
        }
        let mut per_size: BTreeMap<usize, SizeStats> = BTreeMap::new();
        let mut held_histogram = [0usize; 6];
        let mut successes = 0;
        let mut success_rewards = Vec::new();
        let mut scatter = Vec::with_capacity(outcomes.len());
        for (seed, o) in &outcomes {
            let s = per_size.entry(o.pile_size).or_default();
            s.episodes += 1;
            if o.success {
                s.successes += 1;
                successes += 1;
                held_histogram[o.n_logs_held.min(5)] += 1;
                success_rewards.push(o.accumulated_reward);
            }
            scatter.push(ScatterPoint {
                seed: *seed,
                target: [o.target_position.x, o.target_position.y],
                grasp: o.grasp_position.map(|p| [p.x, p.y]),
                success: o.success,
            });
        }
        let valid = outcomes.len();
        let hits: Vec<f64> = outcomes.iter().map(|(_, o)| o.success as u8 as f64).collect();
        let rewards: Vec<f64> = outcomes.iter().map(|(_, o)| o.accumulated_reward).collect();
        Self {
            requested: options.len(),
            valid,
            invalid,
            successes,
            success_rate: if valid == 0 { 0.0 } else { successes as f64 / valid as f64 },
            success_ci: bootstrap_ci(&hits, BOOTSTRAP_RESAMPLES, boot_seed),
            per_size,
            held_histogram,
            reward_mean: mean(&rewards),
            reward_ci: bootstrap_ci(&rewards, BOOTSTRAP_RESAMPLES, boot_seed ^ 1),
            rewards,
            success_reward_mean: (!success_rewards.is_empty()).then(|| mean(&success_rewards)),
            scatter,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub options: Vec<ResetOptions>,
    pub results: Vec<EpisodeResult>,
    pub stats: EvalStats,
}

/// Runs `spec.episodes` episodes and aggregates them. Faulted episodes are
/// excluded from every statistic and listed in `stats.invalid`.
pub fn evaluate(ctx: &EvalContext, policy: &dyn Policy, spec: &EvalSpec) -> EvalReport {
    let options = spec.options();
    let results = run_batch(ctx, policy, &options, None, false);
    let stats = EvalStats::from_results(&options, &results, spec.seed);
    EvalReport { options, results, stats }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// 95 % percentile bootstrap interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb007_57a9);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

/// Streaming mean and variance (parallel-merge form).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    pub fn std(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0)).sqrt()
        }
    }
}

fn observe_moments(m: &mut [Moments; N_SCALARS + 2], obs: &Observation) {
    for (k, x) in obs.scalars.iter().enumerate() {
        m[k].push(*x as f64);
    }
    for x in &obs.grey {
        m[N_SCALARS].push(*x as f64);
    }
    for x in &obs.depth {
        m[N_SCALARS + 1].push(*x as f64);
    }
}

/// Reference spread of every sweep target over all observations of a
/// noiseless run, in `NoiseTarget::all()` order.
pub fn reference_sigmas(ctx: &EvalContext, policy: &dyn Policy, episodes: &[ResetOptions]) -> Vec<f64> {
    let per: Vec<[Moments; N_SCALARS + 2]> = par_map(ctx, policy, episodes.len(), |env, p, i| {
        let mut m = [Moments::default(); N_SCALARS + 2];
        if let Ok(rec) = run_episode(env, p, episodes[i], None, true) {
            let all = std::iter::once(&rec.initial_obs).chain(rec.steps.iter().map(|s| &s.obs));
            for o in all {
                observe_moments(&mut m, &o.observation().expect("frames kept"));
            }
        }
        m
    });
    let mut total = [Moments::default(); N_SCALARS + 2];
    for m in &per {
        for (t, x) in total.iter_mut().zip(m) {
            t.merge(x);
        }
    }
    total.iter().map(Moments::std).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub target: NoiseTarget,
    pub level: f64,
    pub std: f64,
    pub mean_reward: f64,
    pub ci: (f64, f64),
    pub valid: usize,
}

/// Mean accumulated reward with noise `level · sigma` on one target.
pub fn noise_sweep(
    ctx: &EvalContext,
    policy: &dyn Policy,
    target: NoiseTarget,
    level: f64,
    sigma: f64,
    episodes: &[ResetOptions],
    seed: u64,
) -> SweepPoint {
    let std = level * sigma;
    let results = run_batch(ctx, policy, episodes, Some((target, std, seed)), false);
    let rewards: Vec<f64> = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.outcome.accumulated_reward)
        .collect();
    SweepPoint {
        target,
        level,
        std,
        mean_reward: mean(&rewards),
        ci: bootstrap_ci(&rewards, BOOTSTRAP_RESAMPLES, seed),
        valid: rewards.len(),
    }
}

/// Every target at every level of `NOISE_LEVELS`; `sigmas` in
/// `NoiseTarget::all()` order.
pub fn noise_sweep_grid(
    ctx: &EvalContext,
    policy: &dyn Policy,
    targets: &[NoiseTarget],
    sigmas: &[f64],
    episodes: &[ResetOptions],
    seed: u64,
) -> Vec<SweepPoint> {
    let mut out = Vec::with_capacity(targets.len() * NOISE_LEVELS.len());
    for t in targets {
        let sigma = sigmas[target_index(*t)];
        for level in NOISE_LEVELS {
            out.push(noise_sweep(ctx, policy, *t, level, sigma, episodes, seed));
        }
    }
    out
}

pub fn target_index(t: NoiseTarget) -> usize {
    match t {
        NoiseTarget::Scalar(i) => i,
        NoiseTarget::Grey => N_SCALARS,
        NoiseTarget::Depth => N_SCALARS + 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub target: NoiseTarget,
    pub sigma: f64,
    pub mean_abs_delta: [f64; N_ACTIONS],
    pub samples: usize,
}

fn full_obs(rec: &EpisodeRecord, t: usize) -> Observation {
    let (o, _) = rec.before(t);
    o.observation().unwrap_or_else(|| {
        let mut z = Observation::zeros();
        z.scalars = o.scalars;
        z
    })
}

/// `0.2 (max − min)` of the target over the observations the policy saw.
pub fn sensitivity_sigma(records: &[EpisodeRecord], target: NoiseTarget) -> Result<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for rec in records {
        for t in 0..rec.steps.len() {
            let (o, _) = rec.before(t);
            let vals: Vec<f32> = match (target, o.observation()) {
                (NoiseTarget::Scalar(i), _) => vec![o.scalars[i]],
                (NoiseTarget::Grey, Some(obs)) => obs.grey,
                (NoiseTarget::Depth, Some(obs)) => obs.depth,
                _ => return Err(SimError::InvalidArgument("camera sensitivity needs records with frames".into())),
            };
            for v in vals {
                lo = lo.min(v as f64);
                hi = hi.max(v as f64);
            }
        }
    }
    if !lo.is_finite() {
        return Err(SimError::InvalidArgument("no recorded steps".into()));
    }
    Ok(SENSITIVITY_SCALE * (hi - lo))
}

/// Re-queries the policy along each recorded episode with Gaussian noise of
/// std `sigma` on one target (not clipped) and averages `|a(õ) − a(o)|`.
/// The policy is advanced on the clean observations; each noisy query uses
/// a clone of its state before that step. Records without frames feed
/// zero camera channels.
pub fn action_sensitivity(
    records: &[EpisodeRecord],
    policy: &dyn Policy,
    target: NoiseTarget,
    sigma: f64,
    samples_per_step: usize,
    seed: u64,
) -> Result<Sensitivity> {
    if records.is_empty() {
        return Err(SimError::InvalidArgument("no records".into()));
    }
    if let NoiseTarget::Scalar(i) = target {
        if i >= N_SCALARS {
            return Err(SimError::InvalidArgument(format!("scalar index {i} out of range")));
        }
    }
    let normal = Normal::new(0.0, sigma.max(0.0)).map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = [0.0; N_ACTIONS];
    let mut count = 0usize;
    for rec in records {
        let mut p = policy.boxed_clone();
        p.begin_episode(rec.options.seed);
        for t in 0..rec.steps.len() {
            let obs = full_obs(rec, t);
            let (_, info) = rec.before(t);
            let snapshot = p.boxed_clone();
            let clean = p.act(&obs, info)?;
            for _ in 0..samples_per_step {
                let mut noisy = obs.clone();
                match target {
                    NoiseTarget::Scalar(i) => noisy.scalars[i] = (noisy.scalars[i] as f64 + normal.sample(&mut rng)) as f32,
                    NoiseTarget::Grey => noisy.grey.iter_mut().for_each(|x| *x = (*x as f64 + normal.sample(&mut rng)) as f32),
                    NoiseTarget::Depth => noisy.depth.iter_mut().for_each(|x| *x = (*x as f64 + normal.sample(&mut rng)) as f32),
                }
                let a = snapshot.boxed_clone().act(&noisy, info)?;
                for k in 0..N_ACTIONS {
                    sum[k] += (a[k] - clean[k]).abs();
                }
                count += 1;
            }
        }
    }
    let c = count.max(1) as f64;
    Ok(Sensitivity {
        target,
        sigma,
        mean_abs_delta: sum.map(|s| s / c),
        samples: count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    pub preset: Preset,
    pub difficulty: f64,
    pub seed: u64,
    pub n_logs: Option<usize>,
    pub grid: usize,
    pub half_width: f64,
    /// Density raster: `bins × bins` cells covering ±`raster_half_width`
    /// around the unperturbed target.
    pub bins: usize,
    pub raster_half_width: f64,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self {
            preset: Preset::Eval,
            difficulty: 0.0,
            seed: 0,
            n_logs: Some(2),
            grid: HEATMAP_GRID,
            half_width: HEATMAP_HALF_WIDTH,
            bins: 40,
            raster_half_width: 1.0,
        }
    }
}

impl HeatmapSpec {
    /// Evenly spaced offsets, row-major with y outer.
    pub fn offsets(&self) -> Vec<[f64; 2]> {
        let g = self.grid;
        let at = |k: usize| {
            if g == 1 {
                0.0
            } else {
                -self.half_width + 2.0 * self.half_width * k as f64 / (g - 1) as f64
            }
        };
        (0..g).flat_map(|iy| (0..g).map(move |ix| [at(ix), at(iy)])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapAttempt {
    pub offset: [f64; 2],
    pub success: bool,
    /// Grasp position relative to the unperturbed target.
    pub grasp: Option<[f64; 2]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub spec: HeatmapSpec,
    pub target: [f64; 2],
    pub attempts: Vec<HeatmapAttempt>,
    /// Successful grasps per cell, row 0 at +y.
    pub density: Vec<f64>,
}

impl Heatmap {
    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.attempts.iter().filter(|a| a.success).filter_map(|a| a.grasp)
    }
}

/// One episode per grid offset on a fixed pile and placement, recording
/// where the first hold happened. Failed attempts stay in `attempts` but
/// not in the density.
pub fn perturbation_heatmap(ctx: &EvalContext, policy: &dyn Policy, spec: &HeatmapSpec) -> Heatmap {
    let offsets = spec.offsets();
    let mut base = ResetOptions::new(spec.preset, spec.difficulty, spec.seed);
    base.n_logs = spec.n_logs;
    let options: Vec<ResetOptions> = offsets
        .iter()
        .map(|o| ResetOptions {
            target_offset: *o,
            ..base
        })
        .collect();
    let results = run_batch(ctx, policy, &options, None, false);
    let mut target = [0.0; 2];
    let attempts: Vec<HeatmapAttempt> = offsets
        .iter()
        .zip(&results)
        .map(|(off, r)| match r {
            Ok(rec) => {
                let t = rec.outcome.target_position;
                target = [t.x - off[0], t.y - off[1]];
                HeatmapAttempt {
                    offset: *off,
                    success: rec.outcome.success,
                    grasp: rec.outcome.grasp_position.map(|p| [p.x - target[0], p.y - target[1]]),
                    error: None,
                }
            }
            Err(e) => HeatmapAttempt {
                offset: *off,
                success: false,
                grasp: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    let n = spec.bins;
    let mut density = vec![0.0; n * n];
    let h = spec.raster_half_width;
    for a in attempts.iter().filter(|a| a.success) {
        if let Some([x, y]) = a.grasp {
            let c = ((x + h) / (2.0 * h) * n as f64).floor();
            let r = ((h - y) / (2.0 * h) * n as f64).floor();
            if c >= 0.0 && r >= 0.0 && (c as usize) < n && (r as usize) < n {
                density[r as usize * n + c as usize] += 1.0;
            }
        }
    }
    Heatmap {
        spec: spec.clone(),
        target,
        attempts,
        density,
    }
}

/// Comma-separated tables with a header row.
pub mod csv {
    use super::*;

    /// `seed,valid,pile_size,success,n_logs_held,reward,steps,target_x,target_y,grasp_x,grasp_y,error`
    pub fn outcomes(options: &[ResetOptions], results: &[EpisodeResult]) -> String {
        let mut s = String::from("seed,valid,pile_size,success,n_logs_held,reward,steps,target_x,target_y,grasp_x,grasp_y,error\n");
        for (o, r) in options.iter().zip(results) {
            match r {
                Ok(rec) => {
                    let oc = &rec.outcome;
                    let (gx, gy) = oc.grasp_position.map(|p| (p.x.to_string(), p.y.to_string())).unwrap_or_default();
                    s += &format!(
                        "{},1,{},{},{},{},{},{},{},{},{},\n",
                        o.seed,
                        oc.pile_size,
                        oc.success as u8,
                        oc.n_logs_held,
                        oc.accumulated_reward,
                        oc.steps,
                        oc.target_position.x,
                        oc.target_position.y,
                        gx,
                        gy
                    );
                }
                Err(e) => s += &format!("{},0,,,,,,,,,,\"{}\"\n", o.seed, e.replace('"', "'")),
            }
        }
        s
    }

    /// `group,key,value`: overall rate and interval, per-size rates,
    /// held-log histogram and reward summary.
    pub fn summary(st: &EvalStats) -> String {
        let mut s = String::from("group,key,value\n");
        s += &format!("overall,requested,{}\n", st.requested);
        s += &format!("overall,valid,{}\n", st.valid);
        s += &format!("overall,invalid,{}\n", st.invalid.len());
        s += &format!("overall,success_rate,{}\n", st.success_rate);
        s += &format!("overall,success_ci_lo,{}\n", st.success_ci.0);
        s += &format!("overall,success_ci_hi,{}\n", st.success_ci.1);
        s += &format!("overall,reward_mean,{}\n", st.reward_mean);
        s += &format!("overall,reward_ci_lo,{}\n", st.reward_ci.0);
        s += &format!("overall,reward_ci_hi,{}\n", st.reward_ci.1);
        if let Some(r) = st.success_reward_mean {
            s += &format!("overall,success_reward_mean,{r}\n");
        }
        for (size, p) in &st.per_size {
            s += &format!("pile_size_{size},episodes,{}\n", p.episodes);
            s += &format!("pile_size_{size},success_rate,{}\n", p.rate());
        }
        for (k, c) in st.held_histogram.iter().enumerate() {
            s += &format!("held_histogram,{k},{c}\n");
        }
        s
    }

    /// `target,level,std,mean_reward,ci_lo,ci_hi,valid`
    pub fn sweep(points: &[SweepPoint]) -> String {
        let mut s = String::from("target,level,std,mean_reward,ci_lo,ci_hi,valid\n");
        for p in points {
            s += &format!(
                "{},{},{},{},{},{},{}\n",
                p.target.name(),
                p.level,
                p.std,
                p.mean_reward,
                p.ci.0,
                p.ci.1,
                p.valid
            );
        }
        s
    }

    /// `target,sigma,samples,d_x,d_y,d_z,d_rotate,d_grip`
    pub fn sensitivity(rows: &[Sensitivity]) -> String {
        let mut s = String::from("target,sigma,samples,d_x,d_y,d_z,d_rotate,d_grip\n");
        for r in rows {
            let d = r.mean_abs_delta;
            s += &format!(
                "{},{},{},{},{},{},{},{}\n",
                r.target.name(),
                r.sigma,
                r.samples,
                d[0],
                d[1],
                d[2],
                d[3],
                d[4]
            );
        }
        s
    }

    /// `offset_x,offset_y,success,grasp_x,grasp_y,error`, grasp relative to
    /// the unperturbed target.
    pub fn heatmap_points(h: &Heatmap) -> String {
        let mut s = String::from("offset_x,offset_y,success,grasp_x,grasp_y,error\n");
        for a in &h.attempts {
            let (gx, gy) = a.grasp.map(|g| (g[0].to_string(), g[1].to_string())).unwrap_or_default();
            let err = a.error.as_deref().unwrap_or("").replace('"', "'");
            s += &format!("{},{},{},{},{},\"{}\"\n", a.offset[0], a.offset[1], a.success as u8, gx, gy, err);
        }
        s
    }

    /// Density raster, one row per line, row 0 at +y.
    pub fn density(h: &Heatmap) -> String {
        let n = h.spec.bins;
        h.density
            .chunks(n)
            .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
            .collect()
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grapplesim::camera::FRAME_SIZE;
use grapplesim::crane::{CraneDescription, JointVector, N_JOINTS};
use grapplesim::dynamics::static_hold_drift;
use grapplesim::env::{EnvConfig, Preset, ResetOptions};
use grapplesim::eval::{
    self, action_sensitivity, csv, evaluate, noise_sweep_grid, perturbation_heatmap, reference_sigmas, run_episode,
    sensitivity_sigma, EvalContext, EvalSpec, HeatmapSpec, NoiseTarget, PipePolicy, Policy, RandomPolicy,
    ReplayPolicy, ScriptedPolicy,
};
use grapplesim::ik;
use grapplesim::records;
use grapplesim::scene::{gen_pile, generate_scene};
use grapplesim::server::{serve_stdio, Server};

mod image;

#[derive(Parser)]
#[command(name = "grapplesim", about = "Forestry crane grasping simulator and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve environments over TCP or stdio.
    Serve {
        #[arg(long, default_value = "127.0.0.1:5555")]
        bind: String,
        #[arg(long, default_value_t = 8)]
        max_sessions: usize,
        /// Serve one session on stdin/stdout instead of TCP.
        #[arg(long)]
        stdio: bool,
    },
    /// Generate and save log piles.
    GenScenes {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 2)]
        logs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode, optionally recording it or replaying a record.
    RunEpisode {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Write the episode record here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep camera frames in the record.
        #[arg(long)]
        images: bool,
    },
    /// Success statistics over many episodes.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save all episode records to this file.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Mean reward under observation noise at eight levels.
    AblateNoise {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Episodes of the noiseless run that sets each target's spread.
        #[arg(long, default_value_t = 1000)]
        reference_episodes: usize,
        /// Comma-separated target names, or "all".
        #[arg(long, default_value = "all")]
        targets: String,
        #[arg(long, default_value_t = 1)]
        noise_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Action change under observation noise on recorded episodes.
    AblateActions {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Records to re-query; without it `--episodes` are recorded first.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        samples_per_step: usize,
        #[arg(long, default_value = "all")]
        targets: String,
        #[arg(long, default_value_t = 1)]
        noise_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grasp positions over a 25 × 25 grid of target perturbations.
    Heatmap {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = eval::HEATMAP_GRID)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the first camera frame of an episode as PNG.
    Render {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full pile reconstruction.
        #[arg(long)]
        reconstruction: Option<PathBuf>,
    },
    /// Check reach, static capacity and the static hold of a crane description.
    ValidateCrane {
        #[arg(long)]
        description: Option<PathBuf>,
    },
    /// Velocity IK accuracy and timing on random configurations.
    IkBench {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Drop and settle one pile and report relaxation statistics.
    Settle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        logs: usize,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value = "eval", value_parser = parse_preset)]
    preset: Preset,
    #[arg(long, default_value_t = 0.0)]
    difficulty: f64,
    /// Pile size; drawn from the preset when omitted.
    #[arg(long)]
    logs: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Scripted,
    /// Scripted controller that re-centres on the log seen by the camera.
    ScriptedVisual,
    Random,
    Replay,
    Pipe,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    policy: PolicyKind,
    /// Record file whose first episode supplies the replayed actions.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Program for the pipe policy: one line of 16 scalars in, 5 actions out.
    #[arg(long)]
    command: Option<String>,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: grapplesim::SimError| e.to_string())
}

impl RunArgs {
    fn spec(&self) -> EvalSpec {
        EvalSpec {
            preset: self.preset,
            difficulty: self.difficulty,
            seed: self.seed,
            episodes: self.episodes,
            n_logs: self.logs,
        }
    }

    fn options(&self) -> ResetOptions {
        let mut o = ResetOptions::new(self.preset, self.difficulty, self.seed);
        o.n_logs = self.logs;
        o
    }

    fn context(&self) -> Result<EvalContext> {
        let ctx = EvalContext::new(EnvConfig::from_env()?);
        Ok(match self.workers {
            Some(w) => ctx.with_workers(w),
            None => ctx,
        })
    }
}

impl PolicyArgs {
    fn build(&self) -> Result<Box<dyn Policy>> {
        Ok(match self.policy {
            PolicyKind::Scripted => Box::new(ScriptedPolicy::new()),
            PolicyKind::ScriptedVisual => Box::new(ScriptedPolicy::visual()),
            PolicyKind::Random => Box::new(RandomPolicy::new(0)),
            PolicyKind::Replay => {
                let path = self.replay.as_ref().ok_or_else(|| anyhow!("--policy replay needs --replay FILE"))?;
                let recs = records::load(path)?;
                let first = recs.first().ok_or_else(|| anyhow!("{} holds no episodes", path.display()))?;
                Box::new(ReplayPolicy::new(first.actions()))
            }
            PolicyKind::Pipe => {
                let cmd = self.command.as_ref().ok_or_else(|| anyhow!("--policy pipe needs --command"))?;
                let mut parts = cmd.split_whitespace();
                let prog = parts.next().ok_or_else(|| anyhow!("empty --command"))?;
                let args: Vec<String> = parts.map(String::from).collect();
                Box::new(PipePolicy::spawn(prog, &args)?)
            }
        })
    }
}

fn parse_targets(s: &str) -> Result<Vec<NoiseTarget>> {
    if s == "all" {
        return Ok(NoiseTarget::all());
    }
    s.split(',')
        .map(|name| {
            let name = name.trim();
            NoiseTarget::all()
                .into_iter()
                .find(|t| t.name() == name)
                .ok_or_else(|| anyhow!("unknown observation {name:?}"))
        })
        .collect()
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Serve { bind, max_sessions, stdio } => {
            let ctx = EvalContext::new(EnvConfig::from_env()?);
            if stdio {
                serve_stdio(&ctx)?;
            } else {
                let server = Server::bind(&bind, max_sessions, ctx)?;
                eprintln!("listening on {}", server.local_addr()?);
                server.run()?;
            }
        }
        Cmd::GenScenes { seed, count, logs, out } => {
            let cfg = EnvConfig::from_env()?;
            fs::create_dir_all(&out)?;
            println!("seed,logs,rejections,settle_time,terrain_span,target_x,target_y,target_z,file");
            for s in seed..seed + count {
                let (scene, rejected) = generate_scene(s, logs, &cfg.pile)?;
                let file = out.join(format!("pile_{s}_{logs}.gscn"));
                scene.save(&file)?;
                let t = scene.target.position;
                println!(
                    "{s},{logs},{rejected},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
                    scene.settle_time,
                    scene.terrain.span(),
                    t.x,
                    t.y,
                    t.z,
                    file.display()
                );
            }
        }
        Cmd::RunEpisode { run, policy, out, images } => {
            let ctx = run.context()?;
            let mut env = ctx.env();
            let mut p = policy.build()?;
            let rec = run_episode(&mut env, p.as_mut(), run.options(), None, images)?;
            let o = &rec.outcome;
            println!(
                "seed {} success {} logs_held {} steps {} reward {:.4}",
                run.seed, o.success, o.n_logs_held, o.steps, o.accumulated_reward
            );
            if let (PolicyKind::Replay, Some(path)) = (policy.policy, &policy.replay) {
                let original = &records::load(path)?[0];
                let same = records::encode(std::slice::from_ref(original))
                    == records::encode(std::slice::from_ref(&records::replay(&mut env, original)?));
                println!("replay byte-identical: {same}");
            }
            if let Some(path) = out {
                records::save(&path, &[rec])?;
            }
        }
        Cmd::Evaluate { run, policy, out, records: rec_path } => {
            let ctx = run.context()?;
            let p = policy.build()?;
            let t0 = Instant::now();
            let report = evaluate(&ctx, p.as_ref(), &run.spec());
            let st = &report.stats;
            eprintln!(
                "{} episodes in {:.1} s: success {:.3} [{:.3}, {:.3}], reward {:.3}, invalid {}",
                st.requested,
                t0.elapsed().as_secs_f64(),
                st.success_rate,
                st.success_ci.0,
                st.success_ci.1,
                st.reward_mean,
                st.invalid.len()
            );
            match &out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("outcomes.csv"), csv::outcomes(&report.options, &report.results))?;
                    fs::write(dir.join("summary.csv"), csv::summary(st))?;
                }
                None => print!("{}", csv::summary(st)),
            }
            if let Some(path) = rec_path {
                let recs: Vec<_> = report.results.into_iter().filter_map(|r| r.ok()).collect();
                records::save(&path, &recs)?;
            }
        }
        Cmd::AblateNoise {
            run,
            policy,
            reference_episodes,
            targets,
            noise_seed,
            out,
        } => {
            let ctx = run.context()?;
            let p = policy.build()?;
            let targets = parse_targets(&targets)?;
            let mut ref_spec = run.spec();
            ref_spec.episodes = reference_episodes;
            let sigmas = reference_sigmas(&ctx, p.as_ref(), &ref_spec.options());
            let baseline = evaluate(&ctx, p.as_ref(), &run.spec()).stats;
            eprintln!("baseline reward {:.4} [{:.4}, {:.4}]", baseline.reward_mean, baseline.reward_ci.0, baseline.reward_ci.1);
            let points = noise_sweep_grid(&ctx, p.as_ref(), &targets, &sigmas, &run.spec().options(), noise_seed);
            let mut text = csv::sweep(&points);
            text += &format!("baseline,0,0,{},{},{},{}\n", baseline.reward_mean, baseline.reward_ci.0, baseline.reward_ci.1, baseline.valid);
            write_out(&out, &text)?;
        }
        Cmd::AblateActions {
            run,
            policy,
            records: rec_path,
            samples_per_step,
            targets,
            noise_seed,
            out,
        } => {
            let p = policy.build()?;
            let recs = match rec_path {
                Some(path) => records::load(&path)?,
                None => {
                    let ctx = run.context()?;
                    eval::run_batch(&ctx, p.as_ref(), &run.spec().options(), None, true)
                        .into_iter()
                        .filter_map(|r| r.ok())
                        .collect()
                }
            };
            let mut rows = Vec::new();
            for t in parse_targets(&targets)? {
                let sigma = match sensitivity_sigma(&recs, t) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("skipping {}: {e}", t.name());
                        continue;
                    }
                };
                rows.push(action_sensitivity(&recs, p.as_ref(), t, sigma, samples_per_step, noise_seed)?);
            }
            write_out(&out, &csv::sensitivity(&rows))?;
        }
        Cmd::Heatmap { run, policy, grid, out } => {
            let ctx = run.context()?;
            let p = policy.build()?;
            let spec = HeatmapSpec {
                preset: run.preset,
                difficulty: run.difficulty,
                seed: run.seed,
                n_logs: run.logs,
                grid,
                ..HeatmapSpec::default()
            };
            let h = perturbation_heatmap(&ctx, p.as_ref(), &spec);
            fs::create_dir_all(&out)?;
            fs::write(out.join("points.csv"), csv::heatmap_points(&h))?;
            fs::write(out.join("density.csv"), csv::density(&h))?;
            let peak = h.density.iter().cloned().fold(0.0, f64::max).max(1.0);
            let pixels: Vec<f32> = h.density.iter().map(|v| (v / peak) as f32).collect();
            image::write_grey(&out.join("density.png"), spec.bins, spec.bins, &pixels)?;
            let ok = h.attempts.iter().filter(|a| a.success).count();
            eprintln!("{} attempts, {} successful", h.attempts.len(), ok);
        }
        Cmd::Render { run, out, reconstruction } => {
            let ctx = run.context()?;
            let mut env = ctx.env();
            let first = env.reset(run.options())?;
            let n = FRAME_SIZE;
            let max_depth = first.obs.depth.iter().cloned().fold(0.0f32, f32::max).max(1e-6);
            let mut pixels = vec![0.0f32; 2 * n * n];
            for r in 0..n {
                for c in 0..n {
                    pixels[r * 2 * n + c] = first.obs.grey[r * n + c];
                    pixels[r * 2 * n + n + c] = first.obs.depth[r * n + c] / max_depth;
                }
            }
            image::write_grey(&out, 2 * n, n, &pixels)?;
            if let Some(path) = reconstruction {
                let rec = &env.scene().expect("scene after reset").reconstruction;
                let grey: Vec<f32> = rec.rgb.iter().map(|c| grapplesim::camera::to_greyscale(*c)).collect();
                image::write_grey(&path, rec.resolution, rec.resolution, &grey)?;
            }
        }
        Cmd::ValidateCrane { description } => validate_crane(description.as_deref())?,
        Cmd::IkBench { samples, seed } => ik_bench(samples, seed),
        Cmd::Settle { seed, logs } => {
            let cfg = EnvConfig::from_env()?;
            let t0 = Instant::now();
            match gen_pile(seed, logs, &cfg.pile) {
                Ok((scene, rep)) => println!(
                    "relaxed {} after {:.2} s simulated ({:.2} s wall), mean speed {:.2e} m/s, max penetration {:.4} m, terrain span {:.3} m, target log {}",
                    rep.relaxed,
                    rep.time,
                    t0.elapsed().as_secs_f64(),
                    rep.mean_speed,
                    rep.max_penetration,
                    scene.terrain.span(),
                    scene.target.log_index
                ),
                Err(e) => println!("rejected: {e}"),
            }
        }
    }
    Ok(())
}

fn validate_crane(path: Option<&Path>) -> Result<()> {
    let desc = match path {
        Some(p) => CraneDescription::from_toml(&fs::read_to_string(p)?)?,
        None => CraneDescription::fc12(),
    };
    let reach = desc.max_reach();
    let cap = desc.lift_capacity_at_full_reach();
    println!("crane {}: {:.1} kg total, grapple {:.1} kg", desc.name, desc.total_mass(), desc.grapple_mass());
    println!("max reach {reach:.3} m");
    println!("static capacity at full reach {:.0} N", cap);
    let desc = Arc::new(desc);
    let hold = static_hold_drift(desc.clone(), 0.97 * cap, 2.0);
    let sag = static_hold_drift(desc, 1.03 * cap, 2.0);
    println!("boom drift over 2 s: {hold:.2e} at 97 % capacity, {sag:.2e} at 103 %");
    let ok = (reach - 8.0).abs() <= 0.05 && (cap - 9700.0).abs() <= 0.05 * 9700.0 && hold < 1e-2 && sag > 1e-2;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        bail!("crane description out of tolerance");
    }
    Ok(())
}

fn ik_bench(samples: usize, seed: u64) {
    let desc = CraneDescription::fc12();
    let cfg = ik::IkConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = desc.mount_pose();
    let mut worst: f64 = 0.0;
    let mut unclipped = 0;
    let mut elapsed = 0.0;
    for _ in 0..samples {
        let q = JointVector::from_fn(|i, _| {
            let (lo, hi) = desc.joints[i].range;
            rng.random_range(lo..=hi)
        });
        let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0)).normalize();
        let v = dir * rng.random_range(0.05..=0.5);
        let frames = desc.frames(&base, &q);
        let t = Instant::now();
        let sol = ik::solve(&desc, &frames, &q, &v, &cfg);
        elapsed += t.elapsed().as_secs_f64();
        if !sol.clipped {
            unclipped += 1;
            worst = worst.max((sol.achieved - v).norm() / v.norm());
        }
    }
    let _ = N_JOINTS;
    println!(
        "{samples} solves, {unclipped} unclipped, worst relative error {:.2e}, {:.2} µs per solve",
        worst,
        1e6 * elapsed / samples.max(1) as f64
    );
}

use std::sync::Arc;

use grapplesim::env::*;
use grapplesim::error::SimError;
use grapplesim::eval::{run_episode, Policy, RandomPolicy, ReplayPolicy, ScriptedPolicy};
use grapplesim::scene::{build_pile, LogOffset};
use grapplesim::terrain::gen_terrain;

fn eval_opts(seed: u64) -> ResetOptions {
    ResetOptions::new(Preset::Eval, 0.0, seed).with_logs(2)
}

#[test]
fn zero_action_holds_the_grapple_still() {
    let mut env = GraspEnv::with_defaults();
    let r0 = env.reset(eval_opts(1)).unwrap();
    let mut r = r0.clone();
    for _ in 0..20 {
        r = env.step(&[0.0; N_ACTIONS]).unwrap();
    }
    let drift = (r.info.reference - r0.info.reference).norm();
    assert!(drift < 0.05, "drift {drift}");
}

#[test]
fn stepping_a_finished_episode_is_an_error() {
    let mut env = GraspEnv::with_defaults();
    assert!(matches!(env.step(&[0.0; N_ACTIONS]), Err(SimError::EpisodeNotActive)));
    env.reset(eval_opts(2)).unwrap();
    let mut done = false;
    while !done {
        done = env.step(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap().done;
    }
    assert!(matches!(env.step(&[0.0; N_ACTIONS]), Err(SimError::EpisodeNotActive)));
}

#[test]
fn bad_actions_and_options_are_rejected() {
    let mut env = GraspEnv::with_defaults();
    env.reset(eval_opts(3)).unwrap();
    assert!(env.step(&[0.0; 4]).is_err());
    assert!(matches!(env.step(&[f64::NAN, 0.0, 0.0, 0.0, 0.0]), Err(SimError::NonFiniteAction)));
    assert!(env.reset(ResetOptions::new(Preset::Train, 1.5, 0)).is_err());
    assert!(env.reset(ResetOptions::new(Preset::Train, 0.0, 0).with_logs(6)).is_err());
}

#[test]
fn reset_is_deterministic() {
    let mut a = GraspEnv::with_defaults();
    let mut b = GraspEnv::with_defaults();
    let opts = ResetOptions::new(Preset::Train, 0.4, 17);
    let ra = a.reset(opts).unwrap();
    let rb = b.reset(opts).unwrap();
    assert_eq!(ra.obs, rb.obs);
    assert_eq!(ra.info, rb.info);
    assert_eq!(a.world().unwrap().snapshot_hash(), b.world().unwrap().snapshot_hash());
}

#[test]
fn random_policy_rarely_succeeds() {
    let mut env = GraspEnv::with_defaults();
    let mut wins = 0;
    for seed in 0..20 {
        let mut p = RandomPolicy::new(seed);
        let rec = run_episode(&mut env, &mut p, eval_opts(seed), None, false).unwrap();
        wins += rec.outcome.success as usize;
    }
    assert!(wins <= 1, "{wins} random successes");
}

#[test]
fn reward_parts_are_consistent() {
    let mut env = GraspEnv::with_defaults();
    let mut p = ScriptedPolicy::new();
    let rec = run_episode(&mut env, &mut p, eval_opts(5), None, false).unwrap();
    assert!(rec.outcome.success);
    let mut prev = rec.initial_info.stage;
    let mut reached = [false; 4];
    for s in &rec.steps {
        let r = &s.reward;
        assert!((r.total - (r.r_target + r.r_guide + r.r_energy)).abs() < 1e-12);
        assert!(r.r_guide >= 0.0 && r.r_guide <= 8.0 / 200.0 + 1e-12, "r_guide {}", r.r_guide);
        assert!(r.r_energy <= 0.0);
        assert!((1..=3).contains(&r.stage));
        assert!(r.stage.abs_diff(prev) <= 1, "stage jump {prev} -> {}", r.stage);
        if r.r_target != 0.0 {
            assert!(s.info.success);
        }
        reached[r.stage as usize] = true;
        prev = r.stage;
    }
    assert!(reached[1] && reached[2] && reached[3]);
    let sum: f64 = rec.steps.iter().map(|s| s.reward.total).sum();
    assert!((sum - rec.outcome.accumulated_reward).abs() < 1e-9);
}

#[test]
fn replaying_actions_reproduces_the_outcome() {
    let mut env = GraspEnv::with_defaults();
    let mut p = ScriptedPolicy::new();
    let rec = run_episode(&mut env, &mut p, eval_opts(8), None, false).unwrap();
    let mut replay = ReplayPolicy::new(rec.actions());
    let again = run_episode(&mut env, &mut replay, eval_opts(8), None, false).unwrap();
    assert_eq!(rec.outcome, again.outcome);
    let ha: Vec<u64> = rec.steps.iter().map(|s| s.world_hash).collect();
    let hb: Vec<u64> = again.steps.iter().map(|s| s.world_hash).collect();
    assert_eq!(ha, hb);
}

#[test]
fn single_log_fixture_is_lifted() {
    let cfg = EnvConfig::default();
    let params = &cfg.pile;
    let terrain = gen_terrain(21, &params.terrain);
    let offsets = [LogOffset {
        dx: 0.0,
        dy: 0.0,
        yaw: 0.0,
    }];
    let (scene, _) = build_pile(21, terrain, &offsets, params).unwrap();
    let mut env = GraspEnv::with_defaults();
    env.set_fixed_scene(Some(Arc::new(scene)));
    let mut p = ScriptedPolicy::new();
    let rec = run_episode(&mut env, &mut p, ResetOptions::new(Preset::Eval, 0.0, 3), None, false).unwrap();
    assert_eq!(rec.outcome.pile_size, 1);
    assert!(rec.outcome.success, "steps {}", rec.outcome.steps);
    assert_eq!(rec.outcome.n_logs_held, 1);
    assert!(rec.outcome.accumulated_reward > 21.0);
}

#[test]
fn policies_see_clean_observations_by_default() {
    struct Probe(Vec<[f32; N_SCALARS]>);
    impl Policy for Probe {
        fn act(&mut self, obs: &Observation, _info: &StepInfo) -> grapplesim::error::Result<[f64; N_ACTIONS]> {
            self.0.push(obs.scalars);
            Ok([0.0; N_ACTIONS])
        }
        fn boxed_clone(&self) -> Box<dyn Policy> {
            Box::new(Probe(self.0.clone()))
        }
        fn name(&self) -> &str {
            "probe"
        }
    }
    let mut env = GraspEnv::with_defaults();
    let mut p = Probe(Vec::new());
    let rec = run_episode(&mut env, &mut p, eval_opts(4), None, false).unwrap();
    assert_eq!(p.0[0], rec.initial_obs.scalars);
    for (seen, step) in p.0[1..].iter().zip(&rec.steps) {
        assert_eq!(*seen, step.obs.scalars);
    }
    for (k, s) in p.0.iter().flatten().enumerate() {
        assert!(s.abs() as f64 <= scalar_bound(k % N_SCALARS));
    }
}

#[test]
fn curriculum_ring_survives_an_advance() {
    let mut c = Curriculum::new();
    for _ in 0..9 {
        assert!(!c.update(&[22.0; BATCH_EPISODES]).unwrap());
    }
    assert!(c.update(&[22.0; BATCH_EPISODES]).unwrap());
    // the full window still averages 22, so the next batch advances again
    assert!(c.update(&[22.0; BATCH_EPISODES]).unwrap());
    assert_eq!(c.lesson, 2);
    assert!(c.update(&[0.0; 3]).is_err());
}

//! Versioned binary episode records ("GREC") and deterministic replay.

use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::env::{GraspEnv, Preset, ResetOptions, RewardBreakdown, StepInfo, N_ACTIONS, N_SCALARS};
use crate::error::{Result, SimError};
use crate::eval::{run_episode, EpisodeRecord, ImageData, ObsRecord, Outcome, ReplayPolicy, StepRecord};
use crate::camera::FRAME_PIXELS;

pub const RECORD_MAGIC: &[u8; 4] = b"GREC";
pub const RECORD_VERSION: u32 = 1;
const MAX_STEPS: u32 = 100_000;

fn put_obs(w: &mut Writer, o: &ObsRecord) {
    w.f32s(&o.scalars);
    match &o.images {
        ImageData::Digest(d) => {
            w.u8(0);
            w.u64(*d);
        }
        ImageData::Full { grey, depth } => {
            w.u8(1);
            w.f32s(grey);
            w.f32s(depth);
        }
    }
}

fn get_obs(r: &mut Reader) -> Result<ObsRecord> {
    let s = r.f32s(N_SCALARS)?;
    let scalars: [f32; N_SCALARS] = s.try_into().expect("length checked");
    let images = match r.u8()? {
        0 => ImageData::Digest(r.u64()?),
        1 => ImageData::Full {
            grey: r.f32s(FRAME_PIXELS)?,
            depth: r.f32s(FRAME_PIXELS)?,
        },
        t => return Err(SimError::Format(format!("bad image tag {t}"))),
    };
    Ok(ObsRecord { scalars, images })
}

fn put_info(w: &mut Writer, i: &StepInfo) {
    w.u8(i.stage);
    w.u32(i.n_logs_held as u32);
    w.f64(i.x_delta_grasp);
    w.f64(i.power);
    w.u8(i.success as u8);
    w.u8(i.truncated as u8);
    w.vec3(&i.target_position);
    w.f64(i.target_axis_angle);
    w.f64(i.grapple_yaw);
    w.f64(i.angle_error);
    w.u8(i.grapple_closed as u8);
    w.f64(i.lift);
    w.vec3(&i.reference);
    w.u32(i.step as u32);
}

fn get_info(r: &mut Reader) -> Result<StepInfo> {
    Ok(StepInfo {
        stage: r.u8()?,
        n_logs_held: r.u32()? as usize,
        x_delta_grasp: r.f64()?,
        power: r.f64()?,
        success: r.u8()? != 0,
        truncated: r.u8()? != 0,
        target_position: r.vec3()?,
        target_axis_angle: r.f64()?,
        grapple_yaw: r.f64()?,
        angle_error: r.f64()?,
        grapple_closed: r.u8()? != 0,
        lift: r.f64()?,
        reference: r.vec3()?,
        step: r.u32()? as usize,
    })
}

fn put_reward(w: &mut Writer, rb: &RewardBreakdown) {
    w.f64(rb.r_target);
    w.f64(rb.r_guide);
    w.f64(rb.r_energy);
    w.f64(rb.total);
    w.u8(rb.stage);
    w.u32(rb.n_steps as u32);
}

fn get_reward(r: &mut Reader) -> Result<RewardBreakdown> {
    Ok(RewardBreakdown {
        r_target: r.f64()?,
        r_guide: r.f64()?,
        r_energy: r.f64()?,
        total: r.f64()?,
        stage: r.u8()?,
        n_steps: r.u32()? as usize,
    })
}

fn put_record(w: &mut Writer, rec: &EpisodeRecord) {
    let o = &rec.options;
    w.u8(o.preset.code());
    w.f64(o.difficulty);
    w.u64(o.seed);
    w.u8(o.n_logs.map_or(0, |n| n as u8));
    w.f64(o.target_offset[0]);
    w.f64(o.target_offset[1]);
    w.str(&rec.policy);
    put_obs(w, &rec.initial_obs);
    put_info(w, &rec.initial_info);
    w.u64(rec.initial_hash);
    w.u32(rec.steps.len() as u32);
    for s in &rec.steps {
        for a in s.action {
            w.f64(a);
        }
        put_obs(w, &s.obs);
        put_reward(w, &s.reward);
        put_info(w, &s.info);
        w.u64(s.world_hash);
        w.u8(s.done as u8);
    }
    let oc = &rec.outcome;
    w.u8(oc.success as u8);
    w.u32(oc.n_logs_held as u32);
    w.u32(oc.pile_size as u32);
    w.f64(oc.accumulated_reward);
    w.vec3(&oc.target_position);
    w.f64(oc.target_axis_angle);
    match &oc.grasp_position {
        Some(p) => {
            w.u8(1);
            w.vec3(p);
        }
        None => w.u8(0),
    }
    w.u32(oc.steps as u32);
}

fn get_record(r: &mut Reader) -> Result<EpisodeRecord> {
    let code = r.u8()?;
    let preset = Preset::from_code(code).ok_or_else(|| SimError::Format(format!("bad preset {code}")))?;
    let difficulty = r.f64()?;
    let seed = r.u64()?;
    let n_logs = match r.u8()? {
        0 => None,
        n => Some(n as usize),
    };
    let target_offset = [r.f64()?, r.f64()?];
    let options = ResetOptions {
        preset,
        difficulty,
        seed,
        n_logs,
        target_offset,
    };
    let policy = r.str()?;
    let initial_obs = get_obs(r)?;
    let initial_info = get_info(r)?;
    let initial_hash = r.u64()?;
    let n = r.u32()?;
    if n > MAX_STEPS {
        return Err(SimError::Format(format!("implausible step count {n}")));
    }
    let mut steps = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut action = [0.0; N_ACTIONS];
        for a in &mut action {
            *a = r.f64()?;
        }
        steps.push(StepRecord {
            action,
            obs: get_obs(r)?,
            reward: get_reward(r)?,
            info: get_info(r)?,
            world_hash: r.u64()?,
            done: r.u8()? != 0,
        });
    }
    let outcome = Outcome {
        success: r.u8()? != 0,
        n_logs_held: r.u32()? as usize,
        pile_size: r.u32()? as usize,
        accumulated_reward: r.f64()?,
        target_position: r.vec3()?,
        target_axis_angle: r.f64()?,
        grasp_position: match r.u8()? {
            0 => None,
            1 => Some(r.vec3()?),
            t => return Err(SimError::Format(format!("bad grasp tag {t}"))),
        },
        steps: r.u32()? as usize,
    };
    Ok(EpisodeRecord {
        options,
        policy,
        initial_obs,
        initial_info,
        initial_hash,
        steps,
        outcome,
    })
}

/// Serializes a batch of records into one file image.
pub fn encode(records: &[EpisodeRecord]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(RECORD_MAGIC);
    w.u32(RECORD_VERSION);
    w.u32(records.len() as u32);
    for rec in records {
        put_record(&mut w, rec);
    }
    w.buf
}

/// Parses a whole file image; any truncation, trailing bytes or version
/// mismatch is an error.
pub fn decode(data: &[u8]) -> Result<Vec<EpisodeRecord>> {
    let mut r = Reader::new(data);
    r.header(RECORD_MAGIC, RECORD_VERSION)?;
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(4096));
    for _ in 0..n {
        out.push(get_record(&mut r)?);
    }
    r.finish()?;
    Ok(out)
}

pub fn save(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    std::fs::write(path, encode(records))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<EpisodeRecord>> {
    decode(&std::fs::read(path)?)
}

/// Re-runs a record's actions from its reset options, keeping frames iff
/// the record kept them.
pub fn replay(env: &mut GraspEnv, rec: &EpisodeRecord) -> Result<EpisodeRecord> {
    let keep = matches!(rec.initial_obs.images, ImageData::Full { .. });
    let mut p = ReplayPolicy::new(rec.actions());
    let mut out = run_episode(env, &mut p, rec.options, None, keep)?;
    out.policy = rec.policy.clone();
    Ok(out)
}

/// Whether a replay reproduced the record byte for byte.
pub fn replay_matches(env: &mut GraspEnv, rec: &EpisodeRecord) -> Result<bool> {
    let again = replay(env, rec)?;
    Ok(encode(std::slice::from_ref(rec)) == encode(std::slice::from_ref(&again)))
}

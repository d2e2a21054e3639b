//! Length-prefixed session protocol between the simulator and external
//! trainers.
//!
//! A frame is a little-endian u32 payload length followed by the payload;
//! the first payload byte is the message tag. Numbers are little-endian,
//! observation data 32-bit floats.
//!
//! | tag  | message   | body |
//! |------|-----------|------|
//! | 0x01 | reset     | preset u8, difficulty f32, seed u64 |
//! | 0x02 | step      | 5 × f32 |
//! | 0x03 | close     | empty |
//! | 0x80 | hello     | `GSIM`, version u32 (sent once on connect) |
//! | 0x81 | obs_reply | 16 f32 scalars, 4096 f32 grey, 4096 f32 depth, reward f32, done u8, info |
//! | 0x82 | error     | code u16, detail length u16, UTF-8 detail |
//! | 0x83 | closed    | empty |
//!
//! The obs_reply info block is: stage u8, logs held u8, success u8,
//! truncated u8, grasp offset f32, lift f32, power f32, step u32,
//! r_target f32, r_guide f32, r_energy f32.

use std::io::{self, Read, Write};

use crate::camera::FRAME_PIXELS;
use crate::codec::{Reader, Writer};
use crate::env::{Preset, StepResult, N_ACTIONS, N_SCALARS};
use crate::error::{Result, SimError};

pub const PROTOCOL_MAGIC: &[u8; 4] = b"GSIM";
pub const PROTOCOL_VERSION: u32 = 1;
/// Largest payload accepted from a client.
pub const MAX_REQUEST: usize = 1024;
/// Largest payload a client should accept from the server.
pub const MAX_REPLY: usize = 1 << 20;

pub const TAG_RESET: u8 = 0x01;
pub const TAG_STEP: u8 = 0x02;
pub const TAG_CLOSE: u8 = 0x03;
pub const TAG_HELLO: u8 = 0x80;
pub const TAG_OBS: u8 = 0x81;
pub const TAG_ERROR: u8 = 0x82;
pub const TAG_CLOSED: u8 = 0x83;

pub const INFO_BYTES: usize = 4 + 4 * 3 + 4 + 4 * 3;
pub const OBS_REPLY_BYTES: usize = 1 + 4 * (N_SCALARS + 2 * FRAME_PIXELS) + 4 + 1 + INFO_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    MalformedFrame = 1,
    UnknownTag = 2,
    BadAction = 3,
    NotReset = 4,
    BadReset = 5,
    Busy = 6,
    Internal = 7,
    FrameTooLarge = 8,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        use ErrorCode::*;
        [MalformedFrame, UnknownTag, BadAction, NotReset, BadReset, Busy, Internal, FrameTooLarge]
            .into_iter()
            .find(|c| *c as u16 == v)
    }

    /// Codes after which the server ends the session.
    pub fn is_fatal(self) -> bool {
        matches!(
            self,
            ErrorCode::MalformedFrame | ErrorCode::UnknownTag | ErrorCode::FrameTooLarge | ErrorCode::Busy
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Request {
    Reset { preset: Preset, difficulty: f32, seed: u64 },
    Step { action: [f32; N_ACTIONS] },
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WireInfo {
    pub stage: u8,
    pub n_logs_held: u8,
    pub success: bool,
    pub truncated: bool,
    pub x_delta_grasp: f32,
    pub lift: f32,
    pub power: f32,
    pub step: u32,
    pub r_target: f32,
    pub r_guide: f32,
    pub r_energy: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsReply {
    pub scalars: [f32; N_SCALARS],
    pub grey: Vec<f32>,
    pub depth: Vec<f32>,
    pub reward: f32,
    pub done: bool,
    pub info: WireInfo,
}

impl ObsReply {
    pub fn from_step(r: &StepResult) -> Self {
        Self {
            scalars: r.obs.scalars,
            grey: r.obs.grey.clone(),
            depth: r.obs.depth.clone(),
            reward: r.reward.total as f32,
            done: r.done,
            info: WireInfo {
                stage: r.info.stage,
                n_logs_held: r.info.n_logs_held.min(255) as u8,
                success: r.info.success,
                truncated: r.info.truncated,
                x_delta_grasp: r.info.x_delta_grasp as f32,
                lift: r.info.lift as f32,
                power: r.info.power as f32,
                step: r.info.step as u32,
                r_target: r.reward.r_target as f32,
                r_guide: r.reward.r_guide as f32,
                r_energy: r.reward.r_energy as f32,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Hello { version: u32 },
    Obs(Box<ObsReply>),
    Error { code: ErrorCode, detail: String },
    Closed,
}

/// A request that could not be decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    pub code: ErrorCode,
    pub detail: String,
}

fn bad(code: ErrorCode, detail: impl Into<String>) -> DecodeError {
    DecodeError {
        code,
        detail: detail.into(),
    }
}

impl Request {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Request::Reset { preset, difficulty, seed } => {
                w.u8(TAG_RESET);
                w.u8(preset.code());
                w.f32(*difficulty);
                w.u64(*seed);
            }
            Request::Step { action } => {
                w.u8(TAG_STEP);
                w.f32s(action);
            }
            Request::Close => w.u8(TAG_CLOSE),
        }
        w.buf
    }

    pub fn decode(payload: &[u8]) -> std::result::Result<Self, DecodeError> {
        let (&tag, body) = payload
            .split_first()
            .ok_or_else(|| bad(ErrorCode::MalformedFrame, "empty frame"))?;
        match tag {
            TAG_RESET => {
                if body.len() != 13 {
                    return Err(bad(ErrorCode::MalformedFrame, format!("reset body of {} bytes", body.len())));
                }
                let mut r = Reader::new(body);
                let code = r.u8().expect("length checked");
                let difficulty = r.f32().expect("length checked");
                let seed = r.u64().expect("length checked");
                let preset = Preset::from_code(code).ok_or_else(|| bad(ErrorCode::BadReset, format!("unknown preset {code}")))?;
                Ok(Request::Reset { preset, difficulty, seed })
            }
            TAG_STEP => {
                if body.len() != 4 * N_ACTIONS {
                    return Err(bad(
                        ErrorCode::BadAction,
                        format!("step carries {} bytes, expected {} floats", body.len(), N_ACTIONS),
                    ));
                }
                let v = Reader::new(body).f32s(N_ACTIONS).expect("length checked");
                Ok(Request::Step {
                    action: v.try_into().expect("length checked"),
                })
            }
            TAG_CLOSE if body.is_empty() => Ok(Request::Close),
            TAG_CLOSE => Err(bad(ErrorCode::MalformedFrame, "close carries a body")),
            t => Err(bad(ErrorCode::UnknownTag, format!("unknown tag 0x{t:02x}"))),
        }
    }
}

impl Reply {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        Reply::Error {
            code,
            detail: detail.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Reply::Hello { version } => {
                w.u8(TAG_HELLO);
                w.bytes(PROTOCOL_MAGIC);
                w.u32(*version);
            }
            Reply::Obs(o) => {
                w.buf.reserve(OBS_REPLY_BYTES);
                w.u8(TAG_OBS);
                w.f32s(&o.scalars);
                w.f32s(&o.grey);
                w.f32s(&o.depth);
                w.f32(o.reward);
                w.u8(o.done as u8);
                let i = &o.info;
                w.u8(i.stage);
                w.u8(i.n_logs_held);
                w.u8(i.success as u8);
                w.u8(i.truncated as u8);
                w.f32(i.x_delta_grasp);
                w.f32(i.lift);
                w.f32(i.power);
                w.u32(i.step);
                w.f32(i.r_target);
                w.f32(i.r_guide);
                w.f32(i.r_energy);
            }
            Reply::Error { code, detail } => {
                w.u8(TAG_ERROR);
                w.u16(*code as u16);
                let mut d = detail.as_bytes();
                if d.len() > u16::MAX as usize {
                    d = &d[..u16::MAX as usize];
                }
                w.u16(d.len() as u16);
                w.bytes(d);
            }
            Reply::Closed => w.u8(TAG_CLOSED),
        }
        w.buf
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut r = Reader::new(payload);
        let reply = match r.u8()? {
            TAG_HELLO => {
                if r.take(4)? != PROTOCOL_MAGIC {
                    return Err(SimError::Format("bad hello magic".into()));
                }
                Reply::Hello { version: r.u32()? }
            }
            TAG_OBS => {
                let scalars: [f32; N_SCALARS] = r.f32s(N_SCALARS)?.try_into().expect("length checked");
                let grey = r.f32s(FRAME_PIXELS)?;
                let depth = r.f32s(FRAME_PIXELS)?;
                let reward = r.f32()?;
                let done = r.u8()? != 0;
                let info = WireInfo {
                    stage: r.u8()?,
                    n_logs_held: r.u8()?,
                    success: r.u8()? != 0,
                    truncated: r.u8()? != 0,
                    x_delta_grasp: r.f32()?,
                    lift: r.f32()?,
                    power: r.f32()?,
                    step: r.u32()?,
                    r_target: r.f32()?,
                    r_guide: r.f32()?,
                    r_energy: r.f32()?,
                };
                Reply::Obs(Box::new(ObsReply {
                    scalars,
                    grey,
                    depth,
                    reward,
                    done,
                    info,
                }))
            }
            TAG_ERROR => {
                let c = r.u16()?;
                let code = ErrorCode::from_u16(c).ok_or_else(|| SimError::Format(format!("unknown error code {c}")))?;
                let n = r.u16()? as usize;
                let detail = String::from_utf8(r.take(n)?.to_vec()).map_err(|e| SimError::Format(e.to_string()))?;
                Reply::Error { code, detail }
            }
            TAG_CLOSED => Reply::Closed,
            t => return Err(SimError::Format(format!("unknown reply tag 0x{t:02x}"))),
        };
        r.finish()?;
        Ok(reply)
    }
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

/// Outcome of reading one frame.
#[derive(Debug, PartialEq)]
pub enum Frame {
    Payload(Vec<u8>),
    /// Clean end of stream before a length prefix.
    Eof,
    /// Declared length above the limit; the payload is not read.
    TooLarge(usize),
}

pub fn read_frame(r: &mut impl Read, limit: usize) -> io::Result<Frame> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(Frame::Eof),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > limit {
        return Ok(Frame::TooLarge(n));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(Frame::Payload(buf))
}

/// Blocking client for one session, used by tests and tools.
pub struct Client<S: Read + Write> {
    stream: S,
    pub version: u32,
}

impl<S: Read + Write> Client<S> {
    /// Reads the server hello.
    pub fn new(mut stream: S) -> Result<Self> {
        match Self::read_reply(&mut stream)? {
            Reply::Hello { version } => Ok(Self { stream, version }),
            other => Err(SimError::Format(format!("expected hello, got {other:?}"))),
        }
    }

    fn read_reply(s: &mut S) -> Result<Reply> {
        match read_frame(s, MAX_REPLY)? {
            Frame::Payload(p) => Reply::decode(&p),
            Frame::Eof => Err(SimError::Io(io::ErrorKind::UnexpectedEof.into())),
            Frame::TooLarge(n) => Err(SimError::Format(format!("reply of {n} bytes"))),
        }
    }

    pub fn send_raw(&mut self, payload: &[u8]) -> Result<Reply> {
        write_frame(&mut self.stream, payload)?;
        Self::read_reply(&mut self.stream)
    }

    pub fn request(&mut self, req: &Request) -> Result<Reply> {
        self.send_raw(&req.encode())
    }

    pub fn reset(&mut self, preset: Preset, difficulty: f32, seed: u64) -> Result<Reply> {
        self.request(&Request::Reset { preset, difficulty, seed })
    }

    pub fn step(&mut self, action: [f32; N_ACTIONS]) -> Result<Reply> {
        self.request(&Request::Step { action })
    }

    pub fn close(mut self) -> Result<Reply> {
        self.request(&Request::Close)
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

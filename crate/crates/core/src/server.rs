//! Session handling over any byte stream, plus TCP and stdio transports.

use std::io::{self, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use crate::env::{GraspEnv, ResetOptions};
use crate::error::SimError;
use crate::eval::EvalContext;
use crate::protocol::{read_frame, write_frame, ErrorCode, Frame, ObsReply, Reply, Request, MAX_REQUEST, PROTOCOL_VERSION};

/// One environment behind the protocol.
pub struct Session {
    pub env: GraspEnv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionStats {
    pub requests: u64,
    pub steps: u64,
    pub errors: u64,
}

impl Session {
    pub fn new(env: GraspEnv) -> Self {
        Self { env }
    }

    /// Reply to one payload and whether the session continues.
    pub fn handle(&mut self, payload: &[u8]) -> (Reply, bool) {
        let req = match Request::decode(payload) {
            Ok(r) => r,
            Err(e) => return (Reply::error(e.code, e.detail), !e.code.is_fatal()),
        };
        match req {
            Request::Close => (Reply::Closed, false),
            Request::Reset { preset, difficulty, seed } => {
                let d = difficulty as f64;
                if !(0.0..=1.0).contains(&d) {
                    return (Reply::error(ErrorCode::BadReset, format!("difficulty {difficulty} outside [0, 1]")), true);
                }
                match self.env.reset(ResetOptions::new(preset, d, seed)) {
                    Ok(r) => (Reply::Obs(Box::new(ObsReply::from_step(&r))), true),
                    Err(e @ SimError::InvalidArgument(_)) => (Reply::error(ErrorCode::BadReset, e.to_string()), true),
                    Err(e) => (Reply::error(ErrorCode::Internal, e.to_string()), true),
                }
            }
            Request::Step { action } => {
                let a: Vec<f64> = action.iter().map(|&x| x as f64).collect();
                match self.env.step(&a) {
                    Ok(r) => (Reply::Obs(Box::new(ObsReply::from_step(&r))), true),
                    Err(SimError::EpisodeNotActive) => {
                        (Reply::error(ErrorCode::NotReset, "step without an active episode; send reset"), true)
                    }
                    Err(e @ SimError::NonFiniteAction) => (Reply::error(ErrorCode::BadAction, e.to_string()), true),
                    Err(e) => (Reply::error(ErrorCode::Internal, e.to_string()), true),
                }
            }
        }
    }

    /// Sends the hello, then answers frames until close, end of stream or a
    /// fatal protocol error.
    pub fn run<R: Read, W: Write>(&mut self, mut r: R, mut w: W) -> io::Result<SessionStats> {
        let mut stats = SessionStats::default();
        write_frame(&mut w, &Reply::Hello { version: PROTOCOL_VERSION }.encode())?;
        loop {
            let frame = match read_frame(&mut r, MAX_REQUEST) {
                Ok(f) => f,
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                    stats.errors += 1;
                    let _ = write_frame(&mut w, &Reply::error(ErrorCode::MalformedFrame, "stream ended inside a frame").encode());
                    return Ok(stats);
                }
                Err(e) => return Err(e),
            };
            let (reply, more) = match frame {
                Frame::Eof => return Ok(stats),
                Frame::TooLarge(n) => (
                    Reply::error(ErrorCode::FrameTooLarge, format!("frame of {n} bytes exceeds {MAX_REQUEST}")),
                    false,
                ),
                Frame::Payload(p) => {
                    stats.requests += 1;
                    let out = self.handle(&p);
                    if matches!(out.0, Reply::Obs(_)) && p.first() == Some(&crate::protocol::TAG_STEP) {
                        stats.steps += 1;
                    }
                    out
                }
            };
            if matches!(reply, Reply::Error { .. }) {
                stats.errors += 1;
            }
            write_frame(&mut w, &reply.encode())?;
            if !more {
                return Ok(stats);
            }
        }
    }
}

/// Serves a single session on stdin and stdout.
pub fn serve_stdio(ctx: &EvalContext) -> io::Result<SessionStats> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    Session::new(ctx.env()).run(BufReader::new(stdin.lock()), stdout.lock())
}

/// Stops a running `Server`.
#[derive(Clone)]
pub struct ServerHandle {
    stop: Arc<AtomicBool>,
    addr: SocketAddr,
    active: Arc<AtomicUsize>,
}

impl ServerHandle {
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
    }

    pub fn active_sessions(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }
}

/// TCP server: one thread and one environment per connection, at most
/// `max_sessions` at a time. Connections beyond that get a busy error.
pub struct Server {
    listener: TcpListener,
    ctx: EvalContext,
    max_sessions: usize,
    stop: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
}

struct ActiveGuard(Arc<AtomicUsize>);

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Server {
    pub fn bind(addr: &str, max_sessions: usize, ctx: EvalContext) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            ctx,
            max_sessions: max_sessions.max(1),
            stop: Arc::new(AtomicBool::new(false)),
            active: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn handle(&self) -> io::Result<ServerHandle> {
        Ok(ServerHandle {
            stop: self.stop.clone(),
            addr: self.local_addr()?,
            active: self.active.clone(),
        })
    }

    /// Accepts connections until `ServerHandle::shutdown`.
    pub fn run(self) -> io::Result<()> {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let _ = stream.set_nodelay(true);
            if self.active.fetch_add(1, Ordering::SeqCst) >= self.max_sessions {
                self.active.fetch_sub(1, Ordering::SeqCst);
                let mut s = stream;
                let _ = write_frame(&mut s, &Reply::Hello { version: PROTOCOL_VERSION }.encode());
                let _ = write_frame(&mut s, &Reply::error(ErrorCode::Busy, "session limit reached").encode());
                continue;
            }
            let guard = ActiveGuard(self.active.clone());
            let env = self.ctx.env();
            std::thread::spawn(move || {
                let _guard = guard;
                let Ok(read_half) = stream.try_clone() else { return };
                let _ = Session::new(env).run(BufReader::new(read_half), stream);
            });
        }
        Ok(())
    }
}

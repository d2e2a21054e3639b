use std::io::Cursor;
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use grapplesim::env::{EnvConfig, GraspEnv, Preset};
use grapplesim::eval::EvalContext;
use grapplesim::protocol::*;
use grapplesim::server::{Server, Session};

fn frames(bytes: Vec<u8>) -> Vec<Reply> {
    let mut cur = Cursor::new(bytes);
    let mut out = Vec::new();
    while let Frame::Payload(p) = read_frame(&mut cur, MAX_REPLY).unwrap() {
        out.push(Reply::decode(&p).unwrap());
    }
    out
}

fn script(reqs: &[Vec<u8>]) -> Vec<Reply> {
    let mut input = Vec::new();
    for r in reqs {
        write_frame(&mut input, r).unwrap();
    }
    let mut out = Vec::new();
    Session::new(GraspEnv::with_defaults()).run(Cursor::new(input), &mut out).unwrap();
    frames(out)
}

fn code(r: &Reply) -> Option<ErrorCode> {
    match r {
        Reply::Error { code, .. } => Some(*code),
        _ => None,
    }
}

#[test]
fn episode_runs_to_done_over_a_stream() {
    let reset = Request::Reset {
        preset: Preset::Eval,
        difficulty: 0.0,
        seed: 4,
    }
    .encode();
    let mut reqs = vec![reset];
    reqs.extend((0..200).map(|_| Request::Step { action: [0.0, 0.0, 0.5, 0.0, 0.0] }.encode()));
    reqs.push(Request::Close.encode());
    let replies = script(&reqs);
    assert_eq!(replies[0], Reply::Hello { version: PROTOCOL_VERSION });
    assert_eq!(replies.len(), 203);
    let obs: Vec<&ObsReply> = replies[1..202]
        .iter()
        .map(|r| match r {
            Reply::Obs(o) => o.as_ref(),
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(obs[0].info.step, 0);
    assert!(obs[200].done && obs[200].info.truncated);
    assert!(obs[..200].iter().all(|o| !o.done));
    assert_eq!(replies[202], Reply::Closed);
}

#[test]
fn errors_keep_the_session_alive() {
    let step = |n: usize| {
        let mut p = vec![TAG_STEP];
        p.extend(std::iter::repeat_n(0u8, 4 * n));
        p
    };
    let reset = Request::Reset {
        preset: Preset::Eval,
        difficulty: 0.0,
        seed: 1,
    }
    .encode();
    let mut bad_reset = reset.clone();
    bad_reset[2..6].copy_from_slice(&2.0f32.to_le_bytes());
    let mut nan = vec![TAG_STEP];
    for _ in 0..5 {
        nan.extend(f32::NAN.to_le_bytes());
    }
    let replies = script(&[step(5), reset.clone(), step(4), bad_reset, nan, step(5), reset, step(5)]);
    let codes: Vec<Option<ErrorCode>> = replies[1..].iter().map(code).collect();
    assert_eq!(
        codes,
        vec![
            Some(ErrorCode::NotReset),
            None,
            Some(ErrorCode::BadAction),
            Some(ErrorCode::BadReset),
            Some(ErrorCode::BadAction),
            Some(ErrorCode::NotReset),
            None,
            None,
        ]
    );
}

#[test]
fn fatal_errors_end_the_session() {
    for payload in [vec![], vec![0x7f, 1, 2], vec![TAG_RESET, 0]] {
        let replies = script(&[payload.clone(), Request::Close.encode()]);
        assert_eq!(replies.len(), 2, "{payload:?}");
        assert!(code(&replies[1]).unwrap().is_fatal());
    }
    let mut huge = Vec::new();
    huge.extend(((MAX_REQUEST + 1) as u32).to_le_bytes());
    let mut out = Vec::new();
    Session::new(GraspEnv::with_defaults()).run(Cursor::new(huge), &mut out).unwrap();
    assert_eq!(code(&frames(out)[1]), Some(ErrorCode::FrameTooLarge));
    let mut cut = Vec::new();
    cut.extend(10u32.to_le_bytes());
    cut.extend([TAG_STEP, 0, 0]);
    let mut out = Vec::new();
    Session::new(GraspEnv::with_defaults()).run(Cursor::new(cut), &mut out).unwrap();
    assert_eq!(code(&frames(out)[1]), Some(ErrorCode::MalformedFrame));
}

#[test]
fn messages_round_trip() {
    let reqs = [
        Request::Reset {
            preset: Preset::Train,
            difficulty: 0.25,
            seed: u64::MAX,
        },
        Request::Step {
            action: [1.0, -1.0, 0.5, 0.0, -0.25],
        },
        Request::Close,
    ];
    for r in reqs {
        assert_eq!(Request::decode(&r.encode()).unwrap(), r);
    }
    let e = Reply::error(ErrorCode::Busy, "full");
    assert_eq!(Reply::decode(&e.encode()).unwrap(), e);
    for c in 1..=8 {
        assert_eq!(ErrorCode::from_u16(c).unwrap() as u16, c);
    }
    assert!(ErrorCode::from_u16(0).is_none());
}

#[test]
fn tcp_sessions_are_independent_and_limited() {
    let ctx = EvalContext::new(EnvConfig::default());
    let server = Server::bind("127.0.0.1:0", 2, ctx).unwrap();
    let addr = server.local_addr().unwrap();
    let handle = server.handle().unwrap();
    let th = thread::spawn(move || server.run());

    let run = |seed: u64| {
        let mut c = Client::new(TcpStream::connect(addr).unwrap()).unwrap();
        let mut out = vec![c.reset(Preset::Eval, 0.0, seed).unwrap()];
        for k in 0..30 {
            let a = (k as f32 / 30.0) - 0.5;
            out.push(c.step([a, -a, 0.3, 0.1, 0.0]).unwrap());
        }
        (c, out)
    };
    let (c1, a) = run(9);
    let (c2, b) = run(9);
    assert_eq!(a, b);
    assert_eq!(handle.active_sessions(), 2);

    let mut third = Client::new(TcpStream::connect(addr).unwrap()).unwrap();
    assert_eq!(third.version, PROTOCOL_VERSION);
    let busy = third.reset(Preset::Eval, 0.0, 0);
    match busy {
        Ok(r) => assert_eq!(code(&r), Some(ErrorCode::Busy)),
        Err(_) => {}
    }
    assert_eq!(c1.close().unwrap(), Reply::Closed);
    assert_eq!(c2.close().unwrap(), Reply::Closed);
    for _ in 0..100 {
        if handle.active_sessions() == 0 {
            break;
        }
        thread::sleep(Duration::from_millis(20));
    }
    assert_eq!(handle.active_sessions(), 0);
    handle.shutdown();
    th.join().unwrap().unwrap();
}

mod props {
    use grapplesim::env::Preset;
    use grapplesim::protocol::*;
    use proptest::prelude::*;

    fn preset() -> impl Strategy<Value = Preset> {
        prop_oneof![Just(Preset::Train), Just(Preset::Initial), Just(Preset::Eval)]
    }

    proptest! {
        #[test]
        fn any_payload_decodes_or_reports(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            match Request::decode(&bytes) {
                Ok(r) => prop_assert_eq!(Request::decode(&r.encode()).unwrap(), r),
                Err(e) => prop_assert!(ErrorCode::from_u16(e.code as u16).is_some()),
            }
        }

        #[test]
        fn requests_round_trip(p in preset(), d in 0.0f32..=1.0, seed in any::<u64>(),
                               a in proptest::array::uniform5(-1.0f32..=1.0)) {
            let r = Request::Reset { preset: p, difficulty: d, seed };
            prop_assert_eq!(Request::decode(&r.encode()).unwrap(), r);
            let s = Request::Step { action: a };
            prop_assert_eq!(Request::decode(&s.encode()).unwrap(), s);
        }

        #[test]
        fn error_replies_round_trip(c in 1u16..=8, detail in "[ -~]{0,40}") {
            let e = Reply::error(ErrorCode::from_u16(c).unwrap(), detail);
            prop_assert_eq!(Reply::decode(&e.encode()).unwrap(), e);
        }
    }
}

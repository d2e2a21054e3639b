use grapplesim::env::*;
use grapplesim::eval::*;
use grapplesim::records;
use grapplesim::SimError;

fn record(seed: u64, keep: bool) -> EpisodeRecord {
    let mut env = GraspEnv::with_defaults();
    let mut p = ScriptedPolicy::new();
    run_episode(&mut env, &mut p, ResetOptions::new(Preset::Eval, 0.0, seed).with_logs(2), None, keep).unwrap()
}

#[test]
fn batch_round_trips_through_a_file() {
    let recs = vec![record(1, false), record(2, true)];
    let dir = std::env::temp_dir().join(format!("grec-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("batch.grec");
    records::save(&path, &recs).unwrap();
    let back = records::load(&path).unwrap();
    assert_eq!(back, recs);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn replays_are_byte_identical() {
    let mut env = GraspEnv::with_defaults();
    for keep in [false, true] {
        let rec = record(6, keep);
        assert!(records::replay_matches(&mut env, &rec).unwrap());
    }
}

#[test]
fn damaged_files_are_rejected() {
    let bytes = records::encode(&[record(3, false)]);
    for cut in [0, 3, 8, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(records::decode(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(records::decode(&long).is_err());
    let mut v2 = bytes.clone();
    v2[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(records::decode(&v2), Err(SimError::Version { .. })));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(records::decode(&magic).is_err());
}

#[test]
fn empty_batch_is_valid() {
    assert_eq!(records::decode(&records::encode(&[])).unwrap(), vec![]);
}

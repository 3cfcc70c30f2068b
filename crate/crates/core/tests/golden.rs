//! Byte-exact golden files for the wire frame and the GameController packet.
//! Run with `NGB_BLESS=1` to rewrite the files after an intentional format change.

use std::path::PathBuf;

use ngb_core::codec::{frame_message, parse_frame, Payload};
use ngb_core::gamecontroller::{encode_gc_packet, parse_gc_packet, GC_PACKET_LEN};
use ngb_core::model::{
    DomainId, Encoding, GameState, Header, Image, Imu, JointState, PlayState, Quaternion, TeamInfo,
    Time, TopicName,
};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, bytes: &[u8]) {
    let path = golden_path(name);
    if std::env::var_os("NGB_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, bytes).unwrap();
    }
    let want = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(bytes, &want[..], "{name} differs from its golden file");
}

fn stamp() -> Time {
    Time::from_nanos(1_700_000_000_123_456_789)
}

fn sample_game_state() -> GameState {
    GameState::new(
        42,
        5,
        PlayState::Playing,
        true,
        1,
        0,
        300,
        -2,
        [
            TeamInfo {
                team_number: 12,
                team_colour: 0,
                score: 2,
                penalty_shot: 0,
            },
            TeamInfo {
                team_number: 7,
                team_colour: 1,
                score: 1,
                penalty_shot: 3,
            },
        ],
    )
}

fn frames() -> Vec<(&'static str, Vec<u8>)> {
    let domain = DomainId::new(2).unwrap();
    let image = Image::new(Header::new(stamp(), "cam"), 3, 2, Encoding::Mono8, vec![0, 1, 2, 253, 254, 255]).unwrap();
    let imu = Imu::new(
        Header::new(stamp(), "imu_link"),
        Quaternion::IDENTITY,
        [0.0, 0.0, 0.5],
        [0.0, -0.5, 9.80665],
    )
    .unwrap();
    let joints = JointState::new(
        Header::new(stamp(), "base_link"),
        vec!["head_pan".into(), "head_tilt".into()],
        vec![0.25, -0.125],
        vec![],
        vec![1.0, 2.0],
    )
    .unwrap();
    vec![
        ("frame_image.bin", frame_message(domain, &TopicName::new("/image_raw").unwrap(), 1, &image)),
        ("frame_imu.bin", frame_message(domain, &TopicName::new("/imu/data").unwrap(), 2, &imu)),
        ("frame_joint_state.bin", frame_message(domain, &TopicName::new("/cmd_head").unwrap(), 3, &joints)),
        (
            "frame_game_state.bin",
            frame_message(domain, &TopicName::new("/game_state").unwrap(), 4, &sample_game_state()),
        ),
    ]
}

#[test]
fn wire_frames_match_golden_files() {
    for (name, bytes) in frames() {
        check_golden(name, &bytes);
        assert!(parse_frame(&bytes).is_ok(), "{name}");
    }
}

#[test]
fn golden_frames_decode_to_the_originals() {
    let bytes = std::fs::read(golden_path("frame_game_state.bin")).unwrap();
    let f = parse_frame(&bytes).unwrap();
    assert_eq!(f.decode::<GameState>().unwrap(), sample_game_state());
    let bytes = std::fs::read(golden_path("frame_image.bin")).unwrap();
    let img: Image = parse_frame(&bytes).unwrap().decode().unwrap();
    assert_eq!(img.data(), &[0, 1, 2, 253, 254, 255]);
    assert_eq!(img.header.stamp, stamp());
}

/// Builds the game state frame byte by byte from the documented layout.
#[test]
fn game_state_frame_matches_hand_assembled_bytes() {
    let mut want = Vec::new();
    want.extend_from_slice(b"BHW1");
    want.extend_from_slice(&[2, 0, 0, 0]);
    want.extend_from_slice(&[11, 0]);
    want.extend_from_slice(b"/game_state");
    want.push(4);
    want.extend_from_slice(&[4, 0, 0, 0, 0, 0, 0, 0]);
    want.extend_from_slice(&[18, 0, 0, 0]);
    want.extend_from_slice(&[42, 5, 3, 1, 1, 0]);
    want.extend_from_slice(&[0x2c, 0x01, 0xfe, 0xff]);
    want.extend_from_slice(&[12, 0, 2, 0, 7, 1, 1, 3]);
    let (_, got) = frames().pop().unwrap();
    assert_eq!(got, want);
}

#[test]
fn imu_frame_length_is_fixed_by_layout() {
    let (_, bytes) = &frames()[1];
    // frame head 23 + topic 9, payload: stamp 8 + frame_id 4+8 + 10 f64
    assert_eq!(bytes.len(), 23 + 9 + 8 + 12 + 80);
    let f = parse_frame(bytes).unwrap();
    assert_eq!(f.type_tag, Imu::TAG.as_byte());
}

#[test]
fn gc_packets_match_golden_files() {
    let initial = encode_gc_packet(&GameState::initial());
    let playing = encode_gc_packet(&sample_game_state());
    check_golden("gc_initial.bin", &initial);
    check_golden("gc_playing.bin", &playing);

    let mut want = [0u8; GC_PACKET_LEN];
    want[..4].copy_from_slice(b"RGme");
    want[4] = 12;
    want[6..16].copy_from_slice(&[42, 5, 3, 1, 1, 0, 0x2c, 0x01, 0xfe, 0xff]);
    want[16..24].copy_from_slice(&[12, 0, 2, 0, 7, 1, 1, 3]);
    assert_eq!(playing, want);
    assert_eq!(parse_gc_packet(&want).unwrap(), sample_game_state());
}

#[test]
fn golden_encoding_is_stable_across_repeats() {
    for _ in 0..3 {
        for (name, bytes) in frames() {
            assert_eq!(bytes, std::fs::read(golden_path(name)).unwrap());
        }
    }
}

use ngb_core::codec::{frame_message, parse_frame, Payload};
use ngb_core::model::{
    DomainId, Encoding, GameState, Header, Image, Imu, JointState, PlayState, Quaternion, TeamInfo,
    Time, TopicName,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const CASES: u32 = 1000;

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]))
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

fn header() -> impl Strategy<Value = Header> {
    (any::<i64>(), "[a-z_]{0,12}").prop_map(|(n, id)| Header::new(Time::from_nanos(n), id))
}

fn image() -> impl Strategy<Value = Image> {
    (header(), 0u32..24, 0u32..24, prop_oneof![Just(Encoding::Mono8), Just(Encoding::Rgb8)]).prop_flat_map(
        |(h, w, ht, enc)| {
            let len = (w * ht * enc.bytes_per_pixel()) as usize;
            prop::collection::vec(any::<u8>(), len)
                .prop_map(move |data| Image::new(h.clone(), w, ht, enc, data).unwrap())
        },
    )
}

fn imu() -> impl Strategy<Value = Imu> {
    (
        header(),
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform3(finite()),
        prop::array::uniform3(finite()),
    )
        .prop_filter("quaternion must be normalizable", |(_, q, _, _)| {
            q.iter().map(|x| x * x).sum::<f64>() > 1e-6
        })
        .prop_map(|(h, q, gyro, accel)| {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let q = Quaternion {
                w: q[0] / n,
                x: q[1] / n,
                y: q[2] / n,
                z: q[3] / n,
            };
            Imu::new(h, q, gyro, accel).unwrap()
        })
}

fn joint_state() -> impl Strategy<Value = JointState> {
    (header(), 0usize..24, any::<bool>(), any::<bool>()).prop_flat_map(|(h, n, with_vel, with_eff)| {
        (
            prop::collection::vec("[a-z0-9]{0,8}", n),
            prop::collection::vec(finite(), n),
            prop::collection::vec(finite(), if with_vel { n } else { 0 }),
            prop::collection::vec(finite(), if with_eff { n } else { 0 }),
        )
            .prop_map(move |(names, p, v, e)| JointState::new(h.clone(), names, p, v, e).unwrap())
    })
}

fn team() -> impl Strategy<Value = TeamInfo> {
    any::<[u8; 4]>().prop_map(|b| TeamInfo {
        team_number: b[0],
        team_colour: b[1],
        score: b[2],
        penalty_shot: b[3],
    })
}

fn game_state() -> impl Strategy<Value = GameState> {
    (
        any::<[u8; 2]>(),
        prop::sample::select(PlayState::ALL.to_vec()),
        any::<bool>(),
        any::<[u8; 2]>(),
        any::<[i16; 2]>(),
        [team(), team()],
    )
        .prop_map(|(a, state, first_half, b, t, teams)| {
            GameState::new(a[0], a[1], state, first_half, b[0], b[1], t[0], t[1], teams)
        })
}

/// Frames `msg`, parses it back and checks value and byte equality.
fn round_trip<M: Payload + PartialEq + std::fmt::Debug>(msg: &M, seq: u64) -> Result<(), TestCaseError> {
    let domain = DomainId::new(3).unwrap();
    let topic = TopicName::new("/prop/topic").unwrap();
    let bytes = frame_message(domain, &topic, seq, msg);
    let frame = parse_frame(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(frame.domain_id, 3);
    prop_assert_eq!(&frame.topic, &topic);
    prop_assert_eq!(frame.seq, seq);
    prop_assert_eq!(frame.type_tag, M::TAG.as_byte());
    let back: M = frame.decode().map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&back, msg);
    prop_assert_eq!(back.diag().deep_copy_count(), 1);
    prop_assert_eq!(frame_message(domain, &topic, seq, &back), bytes);
    Ok(())
}

#[test]
fn image_round_trips() {
    runner().run(&(image(), any::<u64>()), |(m, s)| round_trip(&m, s)).unwrap();
}

#[test]
fn imu_round_trips() {
    runner().run(&(imu(), any::<u64>()), |(m, s)| round_trip(&m, s)).unwrap();
}

#[test]
fn joint_state_round_trips() {
    runner().run(&(joint_state(), any::<u64>()), |(m, s)| round_trip(&m, s)).unwrap();
}

#[test]
fn game_state_round_trips() {
    runner().run(&(game_state(), any::<u64>()), |(m, s)| round_trip(&m, s)).unwrap();
}

#[test]
fn every_truncation_is_rejected() {
    let topic = TopicName::new("/t").unwrap();
    let domain = DomainId::new(0).unwrap();
    runner()
        .run(&(joint_state(), imu()), |(js, imu)| {
            for bytes in [frame_message(domain, &topic, 1, &js), frame_message(domain, &topic, 2, &imu)] {
                for cut in 0..bytes.len() {
                    prop_assert!(parse_frame(&bytes[..cut]).is_err(), "prefix {cut} accepted");
                }
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn arbitrary_bytes_never_panic() {
    runner()
        .run(&prop::collection::vec(any::<u8>(), 0..256), |bytes| {
            let _ = parse_frame(&bytes);
            for tag in 0u8..=5 {
                let _ = ngb_core::codec::decode_payload(tag, &bytes);
            }
            Ok(())
        })
        .unwrap();
}

#[test]
fn corrupted_frames_never_panic() {
    let topic = TopicName::new("/img").unwrap();
    let domain = DomainId::new(1).unwrap();
    runner()
        .run(&(image(), any::<prop::sample::Index>(), any::<u8>()), |(img, at, byte)| {
            let mut bytes = frame_message(domain, &topic, 9, &img);
            let i = at.index(bytes.len());
            bytes[i] ^= byte | 1;
            if let Ok(f) = parse_frame(&bytes) {
                let _ = f.decode::<Image>();
            }
            Ok(())
        })
        .unwrap();
}

//! Acceptance checks, one pass/fail line per criterion.
//!
//! Criteria 5 to 11 are library-level and take seconds. Criteria 1 to 4 drive
//! the `bench` binary through a full campaign (Case 1 in all three modes,
//! three repetitions, 10,000 samples at 640x480 and 30 fps, plus Case 2),
//! which takes roughly an hour. `NGB_ACCEPTANCE_SAMPLES` shrinks the campaign
//! for a dry run; the run then always exits nonzero because the criteria
//! were not checked at their required size.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ngb_core::bench::emit::{read_report_json, REPORT_FILE};
use ngb_core::bench::stats::{compute_stats, percentile};
use ngb_core::bench::{build_topology, run_isolation, BenchReport, CaseConfig};
use ngb_core::codec::{frame_message, parse_frame, Payload};
use ngb_core::gamecontroller::{encode_gc_packet, parse_gc_packet};
use ngb_core::intra::IntraChannel;
use ngb_core::model::{
    DomainId, Encoding, GameState, Header, Image, Imu, JointState, PlayState, QoSProfile, Quaternion,
    Reliability, TeamInfo, Time, TopicName,
};
use ngb_core::nodes::fusion::{angle_between, fusion_step, FusionState, STANDARD_GRAVITY};
use ngb_core::nodes::image::sobel;
use ngb_core::runtime::{build_container, ExecutorKind, Mode, NodeSelection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REQUIRED_SAMPLES: u64 = 10_000;
const REPETITIONS: usize = 3;
/// Case 2 runs that only feed the copy-count criterion.
const COPY_CHECK_SAMPLES: u64 = 1_000;

type Verdict = Result<String, String>;

struct Line {
    id: u8,
    title: &'static str,
    verdict: Verdict,
}

fn check(id: u8, title: &'static str, f: impl FnOnce() -> Verdict) -> Line {
    eprintln!("[acceptance] criterion {id}: {title} ...");
    let t0 = Instant::now();
    let verdict = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    eprintln!("[acceptance] criterion {id} finished in {:.1?}", t0.elapsed());
    Line { id, title, verdict }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- criterion 6

fn rand_header(rng: &mut ChaCha8Rng) -> Header {
    let len = rng.gen_range(0..10);
    let id: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
    Header::new(Time::from_nanos(rng.gen()), id)
}

fn rand_f64(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(-1e6..1e6),
        2 => f64::from_bits(rng.gen::<u64>() & !(0x7ff << 52)) * if rng.gen() { 1.0 } else { -1.0 },
        _ => rng.gen::<f64>() * 1e-300,
    }
}

fn rand_game_state(rng: &mut ChaCha8Rng) -> GameState {
    let mut team = || TeamInfo {
        team_number: rng.gen(),
        team_colour: rng.gen(),
        score: rng.gen(),
        penalty_shot: rng.gen(),
    };
    let teams = [team(), team()];
    GameState::new(
        rng.gen(),
        rng.gen(),
        PlayState::ALL[rng.gen_range(0..5)],
        rng.gen(),
        rng.gen(),
        rng.gen(),
        rng.gen(),
        rng.gen(),
        teams,
    )
}

fn round_trip<M: Payload + PartialEq + std::fmt::Debug>(msg: &M, seq: u64, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let domain = DomainId::new(rng.gen_range(0..=DomainId::MAX)).unwrap();
    let topic = TopicName::new("/accept/codec").unwrap();
    let bytes = frame_message(domain, &topic, seq, msg);
    let frame = parse_frame(&bytes).map_err(|e| e.to_string())?;
    let back: M = frame.decode().map_err(|e| e.to_string())?;
    ensure(&back == msg && frame.seq == seq && frame.domain_id == domain.id(), || {
        format!("{:?} changed in transit", M::TAG)
    })?;
    ensure(frame_message(domain, &topic, seq, &back) == bytes, || {
        format!("{:?} re-encoding differs", M::TAG)
    })?;
    // truncations must be rejected, never panic
    for _ in 0..8 {
        let cut = rng.gen_range(0..bytes.len());
        ensure(parse_frame(&bytes[..cut]).is_err(), || format!("{:?} prefix {cut} accepted", M::TAG))?;
    }
    let mut bad = bytes.clone();
    let i = rng.gen_range(0..bad.len());
    bad[i] ^= rng.gen::<u8>() | 1;
    if let Ok(f) = parse_frame(&bad) {
        let _ = f.decode::<M>();
    }
    Ok(())
}

fn criterion_codec() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000u64 {
        let (w, h) = (rng.gen_range(0..20u32), rng.gen_range(0..20u32));
        let enc = if rng.gen() { Encoding::Mono8 } else { Encoding::Rgb8 };
        let data: Vec<u8> = (0..w * h * enc.bytes_per_pixel()).map(|_| rng.gen()).collect();
        let img = Image::new(rand_header(&mut rng), w, h, enc, data).unwrap();
        round_trip(&img, i, &mut rng)?;

        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        let q = Quaternion {
            w: q[0] / n,
            x: q[1] / n,
            y: q[2] / n,
            z: q[3] / n,
        };
        let q = if (q.norm() - 1.0).abs() > 1e-12 { Quaternion::IDENTITY } else { q };
        let imu = Imu::new(
            rand_header(&mut rng),
            q,
            std::array::from_fn(|_| rand_f64(&mut rng)),
            std::array::from_fn(|_| rand_f64(&mut rng)),
        )
        .unwrap();
        round_trip(&imu, i, &mut rng)?;

        let k = rng.gen_range(0..25);
        let names = (0..k).map(|j| format!("joint_{j}")).collect();
        let positions = (0..k).map(|_| rand_f64(&mut rng)).collect();
        let velocities = if rng.gen() { (0..k).map(|_| rand_f64(&mut rng)).collect() } else { vec![] };
        let efforts = if rng.gen() { (0..k).map(|_| rand_f64(&mut rng)).collect() } else { vec![] };
        let js = JointState::new(rand_header(&mut rng), names, positions, velocities, efforts).unwrap();
        round_trip(&js, i, &mut rng)?;

        round_trip(&rand_game_state(&mut rng), i, &mut rng)?;
    }
    for _ in 0..20_000 {
        let n = rng.gen_range(0..200);
        let mut junk: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        if n >= 4 && rng.gen() {
            junk[..4].copy_from_slice(b"BHW1");
        }
        let _ = parse_frame(&junk);
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.1?}"))?;
    Ok(format!("4000 round trips bit-exact, fuzzing clean, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 7

fn sobel_oracle(w: usize, h: usize, px: &[u8]) -> Vec<u8> {
    let at = |x: isize, y: isize| -> i32 {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        i32::from(px[y * w + x])
    };
    let mut out = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2 * at(x, y - 1)
                - at(x + 1, y - 1);
            out[y as usize * w + x as usize] = (gx.abs() + gy.abs()).min(255) as u8;
        }
    }
    out
}

fn criterion_sobel() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let (w, h) = (rng.gen_range(3..=32usize), rng.gen_range(3..=32usize));
        let px: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
        let img = Image::new(Header::default(), w as u32, h as u32, Encoding::Mono8, px.clone()).unwrap();
        let got = sobel(&img).map_err(|e| e.to_string())?;
        ensure(got.data() == &sobel_oracle(w, h, &px)[..], || format!("image {i} ({w}x{h}) differs"))?;
    }
    Ok("200 random images byte-identical".into())
}

// ---------------------------------------------------------------- criterion 8

fn criterion_fusion() -> Verdict {
    // gyro only: alpha = 1 disables the correction
    let axis = [0.6, 0.0, 0.8];
    let (rate, dt, steps) = (0.9, 0.008, 625);
    let mut s = FusionState::new(1.0);
    for _ in 0..steps {
        s = fusion_step(s, [axis[0] * rate, axis[1] * rate, axis[2] * rate], [0.0, 0.0, STANDARD_GRAVITY], dt);
    }
    let half = rate * dt * steps as f64 / 2.0;
    let (c, sn) = (half.cos(), half.sin());
    let dot = (s.q.w * c + s.q.x * axis[0] * sn + s.q.y * axis[1] * sn + s.q.z * axis[2] * sn).abs();
    let gyro_err = 2.0 * dot.min(1.0).acos();
    ensure(gyro_err < 1e-3, || format!("gyro integration off by {gyro_err} rad"))?;

    let tilt = 0.35f64;
    let accel = [STANDARD_GRAVITY * tilt.sin(), 0.0, STANDARD_GRAVITY * tilt.cos()];
    let mut s = FusionState::new(0.98);
    for _ in 0..2000 {
        s = fusion_step(s, [0.0; 3], accel, 0.008);
    }
    let grav_err = angle_between(s.predicted_gravity(), accel);
    ensure(grav_err < 1e-3, || format!("gravity error {grav_err} rad after 2000 steps"))?;

    let mut s = FusionState::new(0.98);
    let mut drift = 0.0f64;
    for i in 0..1_000_000u32 {
        let t = f64::from(i) * 0.008;
        s = fusion_step(s, [0.4 * t.sin(), 0.3 * (0.5 * t).cos(), 0.2], [0.3, -0.6, 9.7], 0.008);
        drift = drift.max((s.q.norm() - 1.0).abs());
    }
    ensure(drift < 1e-9, || format!("|q| drift {drift}"))?;
    Ok(format!("gyro {gyro_err:.1e} rad, gravity {grav_err:.1e} rad, drift {drift:.1e}"))
}

// ---------------------------------------------------------------- criterion 9

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn criterion_gamecontroller() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1000 {
        let s = rand_game_state(&mut rng);
        let b = encode_gc_packet(&s);
        let back = parse_gc_packet(&b).map_err(|e| format!("state {i}: {e}"))?;
        ensure(back == s && encode_gc_packet(&back) == b, || format!("state {i} not preserved"))?;
    }
    let golden = std::fs::read(golden_dir().join("gc_initial.bin")).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        ensure(encode_gc_packet(&GameState::initial())[..] == golden[..], || "gc_initial.bin differs".into())?;
    }
    let playing = std::fs::read(golden_dir().join("gc_playing.bin")).map_err(|e| e.to_string())?;
    let parsed = parse_gc_packet(&playing).map_err(|e| e.to_string())?;
    ensure(encode_gc_packet(&parsed)[..] == playing[..], || "gc_playing.bin does not re-encode".into())?;
    for _ in 0..50_000 {
        let n = rng.gen_range(0..48);
        let mut b: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        if n >= 6 && rng.gen() {
            b[..6].copy_from_slice(&[b'R', b'G', b'm', b'e', 12, 0]);
        }
        let _ = parse_gc_packet(&b);
    }
    Ok("1000 states round-trip, 24-byte golden files stable, fuzz clean".into())
}

// --------------------------------------------------------------- criterion 10

fn criterion_keep_last_and_fairness() -> Verdict {
    let ch = IntraChannel::<u32>::new(
        TopicName::new("/accept/qos").unwrap(),
        QoSProfile::new(Reliability::BestEffort, 1).unwrap(),
    );
    let sub = ch.subscribe();
    for v in [1, 2, 3] {
        ch.publish_unique(v).map_err(|e| e.to_string())?;
    }
    let got: Vec<u32> = std::iter::from_fn(|| sub.take().map(|m| *m)).collect();
    ensure(got == [3], || format!("depth-1 queue yielded {got:?}"))?;

    let cfg = CaseConfig {
        samples: 1_000_000,
        warmup: 0,
        domain: 30,
        ..CaseConfig::default()
    };
    let mut topo = build_topology(&cfg, None).map_err(|e| e.to_string())?;
    topo.executor = ExecutorKind::SingleThreaded;
    let built = build_container(Arc::new(topo), &NodeSelection::All).map_err(|e| e.to_string())?;
    let mut container = built.container;
    let sink = built.probes.sink.clone().ok_or("no sink")?;
    let shutdown = container.shutdown_handle();
    let window = Duration::from_secs(5);
    let stopper = std::thread::spawn(move || {
        std::thread::sleep(window);
        shutdown.request();
    });
    container.spin().map_err(|e| e.to_string())?;
    stopper.join().unwrap();
    let rate = sink.status().collected as f64 / window.as_secs_f64();
    ensure(rate >= 25.0, || format!("single-threaded executor processed {rate:.1} frames/s"))?;
    Ok(format!("depth-1 keeps last only, single-threaded {rate:.1} frames/s at 30 Hz"))
}

// --------------------------------------------------------------- criterion 11

fn criterion_stats() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values: Vec<i64> = (0..10_000).map(|_| rng.gen_range(0..10_000_000)).collect();
    let mut sorted = values.clone();
    sorted.sort_unstable();
    let oracle = |p: u32| -> i64 {
        // smallest index whose cumulative share reaches p percent
        let n = sorted.len() as u64;
        let idx = (0..n).find(|&i| (i + 1) * 100 >= u64::from(p) * n).unwrap_or(n - 1);
        sorted[idx as usize]
    };
    for p in 1..=100 {
        let got = percentile(&sorted, p).map_err(|e| e.to_string())?;
        ensure(got == oracle(p), || format!("p{p}: {got} vs oracle {}", oracle(p)))?;
    }
    let s = compute_stats(&values).map_err(|e| e.to_string())?;
    let want = [oracle(0), oracle(5), oracle(25), oracle(50), oracle(75), oracle(95), oracle(99), sorted[9999]];
    let got = [s.min, s.p5, s.p25, s.median, s.p75, s.p95, s.p99, s.max];
    ensure(got == want, || format!("stats {got:?} vs oracle {want:?}"))?;
    Ok("all percentiles equal the sort-and-index oracle on 10,000 inputs".into())
}

// ---------------------------------------------------------------- criterion 5

fn criterion_isolation() -> Verdict {
    let results = run_isolation([0, 1], Duration::from_secs(10), 640, 480, 30.0).map_err(|e| e.to_string())?;
    for r in &results {
        ensure(r.own_frames > 0, || format!("domain {} processed no frames", r.domain))?;
        ensure(r.foreign_surfaced == 0, || format!("domain {} surfaced {} foreign frames", r.domain, r.foreign_surfaced))?;
        ensure(r.wrong_domain > 0, || format!("domain {} counted no wrong-domain frames", r.domain))?;
    }
    Ok(results
        .iter()
        .map(|r| format!("domain {}: {} own, 0 foreign, {} wrong-domain", r.domain, r.own_frames, r.wrong_domain))
        .collect::<Vec<_>>()
        .join("; "))
}

// ------------------------------------------------------------- criteria 1 - 4

struct Campaign {
    out: PathBuf,
    samples: u64,
    next_domain: u32,
}

impl Campaign {
    fn run(&mut self, case: u8, mode: Mode, samples: u64, tag: &str) -> Result<BenchReport, String> {
        let out = self.out.join(tag);
        let domain = self.next_domain;
        self.next_domain += 1;
        eprintln!("[acceptance]   case {case} {} ({samples} samples, domain {domain})", mode.as_str());
        let status = Command::new(env!("CARGO_BIN_EXE_bench"))
            .args(["run", "--case", &case.to_string(), "--mode", mode.as_str()])
            .args(["--samples", &samples.to_string(), "--domain", &domain.to_string()])
            .args(["--width", "640", "--height", "480", "--fps", "30", "--gc-port", "39300"])
            .arg("--out")
            .arg(&out)
            .env("NGB_NODE_BIN", env!("CARGO_BIN_EXE_ngb-node"))
            .status()
            .map_err(|e| format!("spawning bench: {e}"))?;
        ensure(status.success(), || format!("bench run case {case} {} exited with {status}", mode.as_str()))?;
        let dir = out.join(format!("case{case}-{}", mode.as_str()));
        read_report_json(&dir.join(REPORT_FILE)).map_err(|e| e.to_string())
    }
}

struct Repetition {
    standalone: BenchReport,
    noipc: BenchReport,
    ipc: BenchReport,
}

struct CampaignResults {
    reps: Vec<Repetition>,
    case2_ipc: BenchReport,
    case2_copies: Vec<BenchReport>,
}

fn ms(ns: i64) -> String {
    format!("{:.3} ms", ns as f64 / 1e6)
}

fn run_campaign(c: &mut Campaign) -> Result<CampaignResults, String> {
    let mut reps = Vec::new();
    for r in 0..REPETITIONS {
        let tag = format!("rep{}", r + 1);
        reps.push(Repetition {
            standalone: c.run(1, Mode::Standalone, c.samples, &tag)?,
            noipc: c.run(1, Mode::ComposedNoipc, c.samples, &tag)?,
            ipc: c.run(1, Mode::ComposedIpc, c.samples, &tag)?,
        });
    }
    let case2_ipc = c.run(2, Mode::ComposedIpc, c.samples, "case2")?;
    let copy_samples = COPY_CHECK_SAMPLES.min(c.samples);
    let case2_copies = vec![
        c.run(2, Mode::Standalone, copy_samples, "case2")?,
        c.run(2, Mode::ComposedNoipc, copy_samples, "case2")?,
    ];
    Ok(CampaignResults {
        reps,
        case2_ipc,
        case2_copies,
    })
}

fn criterion_ordering(res: &CampaignResults) -> Verdict {
    let mut parts = Vec::new();
    for (i, r) in res.reps.iter().enumerate() {
        let (s, n, p) = (r.standalone.stats.median, r.noipc.stats.median, r.ipc.stats.median);
        let reduction = (s - p) as f64 / s as f64;
        parts.push(format!("rep{}: sa {} / noipc {} / ipc {} ({:.1}% below sa)", i + 1, ms(s), ms(n), ms(p), reduction * 100.0));
        ensure(p < s && p < n, || format!("ordering broken in rep {}: {}", i + 1, parts.join("; ")))?;
        ensure(reduction >= 0.10, || format!("ipc reduction below 10% in rep {}: {}", i + 1, parts.join("; ")))?;
    }
    Ok(parts.join("; "))
}

fn criterion_dispersion(res: &CampaignResults) -> Verdict {
    let mut parts = Vec::new();
    for (i, r) in res.reps.iter().enumerate() {
        let (s, p) = (r.standalone.iqr, r.ipc.iqr);
        parts.push(format!("rep{}: IQR ipc {} vs sa {}", i + 1, ms(p), ms(s)));
        ensure(p <= s, || format!("ipc distribution wider in rep {}: {}", i + 1, parts.join("; ")))?;
    }
    Ok(parts.join("; "))
}

fn criterion_stability(res: &CampaignResults) -> Verdict {
    let mut medians: Vec<i64> = res.reps.iter().map(|r| r.ipc.stats.median).collect();
    medians.sort_unstable();
    let case1 = medians[medians.len() / 2];
    let case2 = res.case2_ipc.stats.median;
    let rel = (case2 - case1).abs() as f64 / case1 as f64;
    let msg = format!("case2 ipc {} vs case1 ipc {} ({:.1}%)", ms(case2), ms(case1), rel * 100.0);
    ensure(rel <= 0.25, || msg.clone())?;
    Ok(msg)
}

fn criterion_copies(res: &CampaignResults) -> Verdict {
    let mut zero = vec![&res.case2_ipc];
    let mut copying = Vec::new();
    for r in &res.reps {
        zero.push(&r.ipc);
        copying.push(&r.standalone);
        copying.push(&r.noipc);
    }
    copying.extend(res.case2_copies.iter());
    for r in &zero {
        ensure(r.image_copies.total == 0, || {
            format!("{} {}: {} deep copies", r.scenario, r.mode.as_str(), r.image_copies.total)
        })?;
    }
    for r in &copying {
        ensure(r.image_copies.images > 0 && r.image_copies.min_per_image >= 1, || {
            format!("{} {}: an image arrived with {} copies", r.scenario, r.mode.as_str(), r.image_copies.min_per_image)
        })?;
    }
    let images: u64 = zero.iter().map(|r| r.image_copies.images).sum();
    Ok(format!("{} ipc runs with 0 copies over {images} images; {} copying runs with >= 1 per image", zero.len(), copying.len()))
}

fn main() {
    let samples = match std::env::var("NGB_ACCEPTANCE_SAMPLES") {
        Ok(v) => v.parse::<u64>().expect("NGB_ACCEPTANCE_SAMPLES must be a positive integer").max(1),
        Err(_) => REQUIRED_SAMPLES,
    };
    let reduced = samples != REQUIRED_SAMPLES;

    let mut lines = vec![
        check(5, "domain isolation", criterion_isolation),
        check(6, "codec properties", criterion_codec),
        check(7, "Sobel oracle equivalence", criterion_sobel),
        check(8, "IMU fusion", criterion_fusion),
        check(9, "GameController codec", criterion_gamecontroller),
        check(10, "KEEP_LAST and executor fairness", criterion_keep_last_and_fairness),
        check(11, "statistics oracle", criterion_stats),
    ];

    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&out);
    eprintln!("[acceptance] benchmark campaign in {} ({samples} samples per run)", out.display());
    let mut campaign = Campaign {
        out,
        samples,
        next_domain: 10,
    };
    let t0 = Instant::now();
    let results = catch_unwind(AssertUnwindSafe(|| run_campaign(&mut campaign)))
        .unwrap_or_else(|_| Err("campaign panicked".into()));
    eprintln!("[acceptance] campaign finished in {:.0?}", t0.elapsed());
    let mut campaign_line = |id: u8, title: &'static str, f: fn(&CampaignResults) -> Verdict| {
        let verdict = match &results {
            Ok(r) => f(r),
            Err(e) => Err(format!("campaign failed: {e}")),
        };
        lines.push(Line { id, title, verdict });
    };
    campaign_line(1, "median ordering ipc < noipc, ipc < standalone, >= 10% reduction", criterion_ordering);
    campaign_line(2, "IQR(ipc) <= IQR(standalone)", criterion_dispersion);
    campaign_line(3, "Case 2 ipc median within 25% of Case 1", criterion_stability);
    campaign_line(4, "zero-copy invariant", criterion_copies);

    lines.sort_by_key(|l| l.id);
    let ids: BTreeSet<u8> = lines.iter().map(|l| l.id).collect();
    assert_eq!(ids, (1..=11).collect());
    println!();
    let mut failed = 0;
    for l in &lines {
        match &l.verdict {
            Ok(detail) => println!("criterion {:>2} PASS  {}: {detail}", l.id, l.title),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {}: {why}", l.id, l.title)
            }
        }
    }
    if reduced {
        println!("campaign used {samples} samples per run instead of {REQUIRED_SAMPLES}; criteria 1-4 are not certified");
    }
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 || reduced {
        std::process::exit(1);
    }
}

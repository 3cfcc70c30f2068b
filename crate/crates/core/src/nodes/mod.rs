//! The robot node set and the registry that builds nodes from topology
//! declarations.

pub mod cm730;
pub mod fusion;
pub mod image;
pub mod sink;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::codec::Payload;
use crate::gamecontroller::{bind_gc_socket, bridge_run, BridgeCounters, DEFAULT_GC_PORT};
use crate::model::{now, Header, Image, Imu, JointState, GameState, TopicName};
use crate::runtime::executor::CallbackResult;
use crate::runtime::node::{callback_error, Node, Participant, RuntimeError};
use crate::runtime::topology::{MsgType, NodeDecl};

use self::fusion::{fusion_step, FusionState, DEFAULT_ALPHA, DEFAULT_RATE_HZ};
use self::sink::SinkRecorder;

pub const CAMERA: &str = "camera";
pub const SOBEL: &str = "sobel";
pub const CM730: &str = "cm730";
pub const IMU_FUSION: &str = "imu_fusion";
pub const HEAD_CONTROLLER: &str = "head_controller";
pub const GC_BRIDGE: &str = "gc_bridge";
pub const MONITOR: &str = "monitor";

pub const KINDS: [&str; 7] = [CAMERA, SOBEL, CM730, IMU_FUSION, HEAD_CONTROLLER, GC_BRIDGE, MONITOR];

pub const DEFAULT_WIDTH: u32 = 640;
pub const DEFAULT_HEIGHT: u32 = 480;
pub const DEFAULT_FPS: f64 = 30.0;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_IDLE_TIMEOUT_S: f64 = 10.0;
pub const DEFAULT_STARTUP_TIMEOUT_S: f64 = 60.0;

/// Per-topic message counts seen by a monitor node.
#[derive(Debug, Default)]
pub struct MonitorCounters {
    counts: std::sync::Mutex<BTreeMap<TopicName, u64>>,
}

impl MonitorCounters {
    fn bump(&self, topic: &TopicName) {
        *self.counts.lock().unwrap().entry(topic.clone()).or_default() += 1;
    }

    pub fn snapshot(&self) -> BTreeMap<TopicName, u64> {
        self.counts.lock().unwrap().clone()
    }
}

/// Handles into running nodes that a harness can inspect.
#[derive(Default, Clone)]
pub struct NodeProbes {
    pub sink: Option<Arc<SinkRecorder>>,
    pub bridge: Option<Arc<BridgeCounters>>,
    pub monitor: Option<Arc<MonitorCounters>>,
    pub frames_published: Option<Arc<AtomicU64>>,
}

fn node_err(decl: &NodeDecl, msg: impl Into<String>) -> RuntimeError {
    RuntimeError::Node(decl.name.clone(), msg.into())
}

/// The first topic in `list` carrying `ty`.
fn topic_of(p: &Participant, list: &[TopicName], ty: MsgType) -> Option<TopicName> {
    list.iter()
        .find(|t| p.topology().topic(t).map(|d| d.msg_type) == Some(ty))
        .cloned()
}

fn required_topic(
    p: &Participant,
    decl: &NodeDecl,
    list: &[TopicName],
    ty: MsgType,
    dir: &str,
) -> Result<TopicName, RuntimeError> {
    topic_of(p, list, ty).ok_or_else(|| node_err(decl, format!("{dir} no {ty:?} topic")))
}

fn period(decl: &NodeDecl, default_hz: f64) -> Result<Duration, RuntimeError> {
    let hz = decl.rate_hz.unwrap_or(default_hz);
    if !(hz > 0.0 && hz.is_finite()) {
        return Err(node_err(decl, format!("invalid rate {hz}")));
    }
    Ok(Duration::from_secs_f64(1.0 / hz))
}

/// Builds the node described by `decl`, wiring its topics through `p`.
pub fn build_node(p: &Arc<Participant>, decl: &NodeDecl, probes: &mut NodeProbes) -> Result<Node, RuntimeError> {
    match decl.kind.as_str() {
        CAMERA => build_camera(p, decl, probes),
        SOBEL => build_sobel(p, decl, probes),
        CM730 => build_cm730(p, decl),
        IMU_FUSION => build_imu_fusion(p, decl),
        HEAD_CONTROLLER => build_head_controller(p, decl),
        GC_BRIDGE => build_gc_bridge(p, decl, probes),
        MONITOR => build_monitor(p, decl, probes),
        other => Err(node_err(decl, format!("unknown node kind {other:?}"))),
    }
}

fn build_camera(p: &Arc<Participant>, decl: &NodeDecl, probes: &mut NodeProbes) -> Result<Node, RuntimeError> {
    let topic = required_topic(p, decl, &decl.publishes, MsgType::Image, "publishes")?;
    let publisher = p.create_publisher::<Image>(&topic)?;
    let width = decl.param_u64("width").unwrap_or(DEFAULT_WIDTH as u64) as u32;
    let height = decl.param_u64("height").unwrap_or(DEFAULT_HEIGHT as u64) as u32;
    let seed = decl.param_u64("seed").unwrap_or(DEFAULT_SEED);
    let frame_id = decl.param_str("frame_id").unwrap_or("camera").to_string();
    if width < 3 || height < 3 {
        return Err(node_err(decl, format!("frame {width}x{height} is smaller than 3x3")));
    }
    let published = Arc::new(AtomicU64::new(0));
    probes.frames_published = Some(published.clone());
    let mut node = Node::new(&decl.name);
    let mut index = 0u64;
    node.add_timer(period(decl, DEFAULT_FPS)?, move || {
        let img = image::generate_frame_with_id(width, height, index, seed, &frame_id)?;
        index += 1;
        publisher.publish(img)?;
        published.fetch_add(1, Ordering::Relaxed);
        Ok(())
    });
    Ok(node)
}

fn build_sobel(p: &Arc<Participant>, decl: &NodeDecl, probes: &mut NodeProbes) -> Result<Node, RuntimeError> {
    let input = required_topic(p, decl, &decl.subscribes, MsgType::Image, "subscribes")?;
    let output = match topic_of(p, &decl.publishes, MsgType::Image) {
        Some(t) => Some(p.create_publisher::<Image>(&t)?),
        None => None,
    };
    let sub = p.create_subscription::<Image>(&input)?;
    let topo = p.topology();
    let recorder = Arc::new(SinkRecorder::new(topo.sample_target, topo.warmup_discard));
    probes.sink = Some(recorder.clone());
    let expect_frame_id = decl.param_str("expect_frame_id").map(str::to_string);
    let stop_on_target = decl.param_bool("stop_on_target").unwrap_or(true);
    let idle = Duration::from_secs_f64(decl.param_f64("idle_timeout_s").unwrap_or(DEFAULT_IDLE_TIMEOUT_S));
    let startup = Duration::from_secs_f64(decl.param_f64("startup_timeout_s").unwrap_or(DEFAULT_STARTUP_TIMEOUT_S));
    let shutdown = p.shutdown_handle();

    let mut node = Node::new(&decl.name);
    let rec = recorder.clone();
    let mut gradient = Vec::new();
    node.add_subscription(sub, move |img: Arc<Image>| -> CallbackResult {
        if let Some(id) = &expect_frame_id {
            if img.header.frame_id != *id {
                rec.record_foreign();
                return Ok(());
            }
        }
        let copies = img.diag().deep_copy_count();
        image::sobel_into(&img, &mut gradient)?;
        let done = now();
        let complete = rec.record(img.header.stamp, done, copies);
        if let Some(out) = &output {
            let msg = Image::new(img.header.clone(), img.width(), img.height(), img.encoding(), gradient.clone())?;
            out.publish(msg)?;
        }
        if complete && stop_on_target {
            shutdown.request();
        }
        Ok(())
    });
    let rec = recorder;
    node.add_timer(Duration::from_millis(200), move || {
        if rec.check_timeout(startup, idle) {
            let s = rec.status();
            return Err(callback_error(format!(
                "sink timed out with {} of {} samples",
                s.valid_after_warmup, s.sample_target
            )));
        }
        Ok(())
    });
    Ok(node)
}

fn build_cm730(p: &Arc<Participant>, decl: &NodeDecl) -> Result<Node, RuntimeError> {
    let joints_topic = required_topic(p, decl, &decl.publishes, MsgType::JointState, "publishes")?;
    let imu_topic = required_topic(p, decl, &decl.publishes, MsgType::Imu, "publishes")?;
    let joints = p.create_publisher::<JointState>(&joints_topic)?;
    let imu = p.create_publisher::<Imu>(&imu_topic)?;
    let mut node = Node::new(&decl.name);
    node.add_timer(period(decl, DEFAULT_RATE_HZ)?, move || {
        let (j, i) = cm730::cm730_tick(now());
        joints.publish(j)?;
        imu.publish(i)?;
        Ok(())
    });
    Ok(node)
}

fn build_imu_fusion(p: &Arc<Participant>, decl: &NodeDecl) -> Result<Node, RuntimeError> {
    let input = required_topic(p, decl, &decl.subscribes, MsgType::Imu, "subscribes")?;
    let output = required_topic(p, decl, &decl.publishes, MsgType::Imu, "publishes")?;
    let alpha = decl.param_f64("alpha").unwrap_or(DEFAULT_ALPHA);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(node_err(decl, format!("alpha {alpha} outside [0, 1]")));
    }
    let nominal_dt = period(decl, DEFAULT_RATE_HZ)?.as_secs_f64();
    let publisher = p.create_publisher::<Imu>(&output)?;
    let sub = p.create_subscription::<Imu>(&input)?;
    let mut state = FusionState::new(alpha);
    let mut node = Node::new(&decl.name);
    node.add_subscription(sub, move |raw: Arc<Imu>| -> CallbackResult {
        let dt = match state.last_stamp {
            Some(prev) if raw.header.stamp > prev => raw.header.stamp.nanos_since(prev) as f64 * 1e-9,
            _ => nominal_dt,
        };
        state = fusion_step(state, raw.angular_velocity, raw.linear_acceleration, dt);
        state.last_stamp = Some(raw.header.stamp);
        let fused = Imu::new(
            Header::new(raw.header.stamp, raw.header.frame_id.clone()),
            state.q,
            raw.angular_velocity,
            raw.linear_acceleration,
        )?;
        publisher.publish(fused)?;
        Ok(())
    });
    Ok(node)
}

fn build_head_controller(p: &Arc<Participant>, decl: &NodeDecl) -> Result<Node, RuntimeError> {
    let input = required_topic(p, decl, &decl.subscribes, MsgType::Imu, "subscribes")?;
    let output = required_topic(p, decl, &decl.publishes, MsgType::JointState, "publishes")?;
    let gain = decl.param_f64("gain").unwrap_or(1.0);
    let publisher = p.create_publisher::<JointState>(&output)?;
    let sub = p.create_subscription::<Imu>(&input)?;
    let mut node = Node::new(&decl.name);
    node.add_subscription(sub, move |imu: Arc<Imu>| -> CallbackResult {
        let [roll, pitch, _] = imu.orientation.to_euler();
        let cmd = JointState::new(
            Header::new(imu.header.stamp, "head"),
            vec!["head_pan".into(), "head_tilt".into()],
            vec![-gain * roll, -gain * pitch],
            Vec::new(),
            Vec::new(),
        )?;
        publisher.publish(cmd)?;
        Ok(())
    });
    Ok(node)
}

fn build_gc_bridge(p: &Arc<Participant>, decl: &NodeDecl, probes: &mut NodeProbes) -> Result<Node, RuntimeError> {
    let output = required_topic(p, decl, &decl.publishes, MsgType::GameState, "publishes")?;
    let port = decl.param_u64("gc_port").unwrap_or(DEFAULT_GC_PORT as u64);
    let port = u16::try_from(port).map_err(|_| node_err(decl, format!("gc_port {port} out of range")))?;
    let socket = bind_gc_socket(port).map_err(|e| node_err(decl, format!("cannot bind GameController port {port}: {e}")))?;
    let publisher = p.create_publisher::<GameState>(&output)?;
    let counters = Arc::new(BridgeCounters::default());
    probes.bridge = Some(counters.clone());
    let mut node = Node::new(&decl.name);
    node.add_background(move |shutdown| {
        bridge_run(&socket, &counters, || !shutdown.is_requested(), |s| publisher.publish(s))?;
        Ok(())
    });
    Ok(node)
}

fn subscribe_counting<M: Payload>(
    p: &Participant,
    node: &mut Node,
    topic: &TopicName,
    counters: &Arc<MonitorCounters>,
) -> Result<(), RuntimeError> {
    let sub = p.create_subscription::<M>(topic)?;
    let counters = counters.clone();
    let topic = topic.clone();
    node.add_subscription(sub, move |_msg: Arc<M>| {
        counters.bump(&topic);
        Ok(())
    });
    Ok(())
}

fn build_monitor(p: &Arc<Participant>, decl: &NodeDecl, probes: &mut NodeProbes) -> Result<Node, RuntimeError> {
    let counters = Arc::new(MonitorCounters::default());
    probes.monitor = Some(counters.clone());
    let mut node = Node::new(&decl.name);
    for topic in &decl.subscribes {
        let ty = p
            .topology()
            .topic(topic)
            .map(|d| d.msg_type)
            .ok_or_else(|| RuntimeError::UnknownTopic(topic.clone()))?;
        match ty {
            MsgType::Image => subscribe_counting::<Image>(p, &mut node, topic, &counters)?,
            MsgType::Imu => subscribe_counting::<Imu>(p, &mut node, topic, &counters)?,
            MsgType::JointState => subscribe_counting::<JointState>(p, &mut node, topic, &counters)?,
            MsgType::GameState => subscribe_counting::<GameState>(p, &mut node, topic, &counters)?,
        }
    }
    Ok(node)
}

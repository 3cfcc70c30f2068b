//! Shared vocabulary: time stamps, topic names, domains, QoS and the four
//! closed payload types that flow through the node graph.

use std::fmt;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed topic {topic:?}: {rule}")]
    MalformedTopic { topic: String, rule: &'static str },
    #[error("domain id {0} out of range (max {max})", max = DomainId::MAX)]
    DomainOutOfRange(u32),
    #[error("history depth must be at least 1")]
    ZeroDepth,
    #[error("image invariant violated: {0}")]
    Image(String),
    #[error("joint state invariant violated: {0}")]
    JointState(String),
    #[error("imu orientation is not a unit quaternion (norm {0})")]
    ImuOrientation(f64),
}

/// Wall-clock nanoseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Time {
    pub nanos: i64,
}

static LAST_NOW: AtomicI64 = AtomicI64::new(0);

impl Time {
    pub const fn from_nanos(nanos: i64) -> Self {
        Self { nanos }
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Self {
            nanos: (secs * 1e9).round() as i64,
        }
    }

    pub fn as_secs_f64(self) -> f64 {
        self.nanos as f64 * 1e-9
    }

    /// Signed difference `self - earlier` in nanoseconds.
    pub fn nanos_since(self, earlier: Time) -> i64 {
        self.nanos - earlier.nanos
    }

    pub fn to_rfc3339(self) -> String {
        let secs = self.nanos.div_euclid(1_000_000_000);
        let sub = self.nanos.rem_euclid(1_000_000_000) as u32;
        match chrono::DateTime::from_timestamp(secs, sub) {
            Some(dt) => dt.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            None => format!("{}ns", self.nanos),
        }
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

/// Current wall-clock time. Successive calls within one process never go
/// backwards, even if the system clock is stepped.
pub fn now() -> Time {
    let wall = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or(Duration::ZERO)
        .as_nanos() as i64;
    let prev = LAST_NOW.fetch_max(wall, Ordering::AcqRel);
    Time::from_nanos(prev.max(wall))
}

/// A validated topic name matching `^(/[a-z0-9_]+)+$`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TopicName(String);

pub fn validate_topic_name(raw: &str) -> Result<TopicName, ModelError> {
    let fail = |rule| ModelError::MalformedTopic {
        topic: raw.to_string(),
        rule,
    };
    if raw.is_empty() {
        return Err(fail("empty name"));
    }
    let Some(rest) = raw.strip_prefix('/') else {
        return Err(fail("must start with '/'"));
    };
    if rest.is_empty() || raw.ends_with('/') {
        return Err(fail("trailing '/'"));
    }
    for segment in rest.split('/') {
        if segment.is_empty() {
            return Err(fail("empty segment"));
        }
        if !segment
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        {
            return Err(fail("segment characters must match [a-z0-9_]"));
        }
    }
    Ok(TopicName(raw.to_string()))
}

impl TopicName {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        validate_topic_name(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TopicName {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        validate_topic_name(&value)
    }
}

impl From<TopicName> for String {
    fn from(t: TopicName) -> String {
        t.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Isolation namespace. Bounded so that derived transport ports stay below 65536.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct DomainId(u32);

impl DomainId {
    pub const MAX: u32 = 232;

    pub fn new(id: u32) -> Result<Self, ModelError> {
        if id > Self::MAX {
            return Err(ModelError::DomainOutOfRange(id));
        }
        Ok(Self(id))
    }

    pub fn id(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for DomainId {
    type Error = ModelError;
    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<DomainId> for u32 {
    fn from(d: DomainId) -> u32 {
        d.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reliability {
    Reliable,
    BestEffort,
}

impl fmt::Display for Reliability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reliability::Reliable => "reliable",
            Reliability::BestEffort => "best-effort",
        })
    }
}

/// Reliability plus KEEP_LAST history depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QoSProfile {
    pub reliability: Reliability,
    history_depth: usize,
}

impl QoSProfile {
    pub fn new(reliability: Reliability, history_depth: usize) -> Result<Self, ModelError> {
        if history_depth == 0 {
            return Err(ModelError::ZeroDepth);
        }
        Ok(Self {
            reliability,
            history_depth,
        })
    }

    pub fn history_depth(&self) -> usize {
        self.history_depth
    }
}

/// Best-effort, depth 5: high-rate sensor data where a missed sample is harmless.
pub fn sensor_qos() -> QoSProfile {
    QoSProfile {
        reliability: Reliability::BestEffort,
        history_depth: 5,
    }
}

/// Reliable, depth 10.
pub fn reliable_qos() -> QoSProfile {
    QoSProfile {
        reliability: Reliability::Reliable,
        history_depth: 10,
    }
}

/// Count of deep copies a payload has gone through.
///
/// Starts at 0 on construction. Cloning a message carrying a `PayloadDiag`
/// duplicates its bytes, so the clone starts at `source + 1`. Diagnostics
/// never take part in message equality.
#[derive(Debug, Default)]
pub struct PayloadDiag {
    deep_copies: AtomicU64,
}

impl PayloadDiag {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn with_count(count: u64) -> Self {
        Self {
            deep_copies: AtomicU64::new(count),
        }
    }

    pub fn deep_copy_count(&self) -> u64 {
        self.deep_copies.load(Ordering::Acquire)
    }

    pub fn record_copy(&self) {
        self.deep_copies.fetch_add(1, Ordering::AcqRel);
    }
}

impl Clone for PayloadDiag {
    fn clone(&self) -> Self {
        Self::with_count(self.deep_copy_count() + 1)
    }
}

impl PartialEq for PayloadDiag {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Header {
    pub stamp: Time,
    pub frame_id: String,
}

impl Header {
    pub fn new(stamp: Time, frame_id: impl Into<String>) -> Self {
        Self {
            stamp,
            frame_id: frame_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Mono8,
    Rgb8,
}

impl Encoding {
    pub fn bytes_per_pixel(self) -> u32 {
        match self {
            Encoding::Mono8 => 1,
            Encoding::Rgb8 => 3,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Encoding::Mono8 => 0,
            Encoding::Rgb8 => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Encoding::Mono8),
            1 => Some(Encoding::Rgb8),
            _ => None,
        }
    }
}

/// Raw image. `step == width * bytes_per_pixel` and `data.len() == step * height`
/// hold for every constructed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub header: Header,
    width: u32,
    height: u32,
    encoding: Encoding,
    step: u32,
    data: Vec<u8>,
    diag: PayloadDiag,
}

impl Image {
    pub fn new(
        header: Header,
        width: u32,
        height: u32,
        encoding: Encoding,
        data: Vec<u8>,
    ) -> Result<Self, ModelError> {
        let step = width
            .checked_mul(encoding.bytes_per_pixel())
            .ok_or_else(|| ModelError::Image("row size overflows u32".into()))?;
        Self::with_step(header, width, height, encoding, step, data)
    }

    /// Builds an image with an explicit row stride, rejecting any stride other
    /// than the packed one.
    pub fn with_step(
        header: Header,
        width: u32,
        height: u32,
        encoding: Encoding,
        step: u32,
        data: Vec<u8>,
    ) -> Result<Self, ModelError> {
        let packed = u64::from(width) * u64::from(encoding.bytes_per_pixel());
        if u64::from(step) != packed {
            return Err(ModelError::Image(format!(
                "step {step} != width {width} x {} bytes",
                encoding.bytes_per_pixel()
            )));
        }
        let expected = u64::from(step) * u64::from(height);
        if data.len() as u64 != expected {
            return Err(ModelError::Image(format!(
                "data length {} != step {step} x height {height}",
                data.len()
            )));
        }
        Ok(Self {
            header,
            width,
            height,
            encoding,
            step,
            data,
            diag: PayloadDiag::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn diag(&self) -> &PayloadDiag {
        &self.diag
    }

    pub(crate) fn set_diag(&mut self, diag: PayloadDiag) {
        self.diag = diag;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imu {
    pub header: Header,
    pub orientation: Quaternion,
    pub angular_velocity: [f64; 3],
    pub linear_acceleration: [f64; 3],
    diag: PayloadDiag,
}

impl Imu {
    pub const UNIT_TOLERANCE: f64 = 1e-9;

    /// A raw reading: identity orientation.
    pub fn raw(header: Header, angular_velocity: [f64; 3], linear_acceleration: [f64; 3]) -> Self {
        Self {
            header,
            orientation: Quaternion::IDENTITY,
            angular_velocity,
            linear_acceleration,
            diag: PayloadDiag::new(),
        }
    }

    pub fn new(
        header: Header,
        orientation: Quaternion,
        angular_velocity: [f64; 3],
        linear_acceleration: [f64; 3],
    ) -> Result<Self, ModelError> {
        let norm = orientation.norm();
        if norm.is_nan() || (norm - 1.0).abs() > Self::UNIT_TOLERANCE {
            return Err(ModelError::ImuOrientation(norm));
        }
        Ok(Self {
            header,
            orientation,
            angular_velocity,
            linear_acceleration,
            diag: PayloadDiag::new(),
        })
    }

    pub fn diag(&self) -> &PayloadDiag {
        &self.diag
    }

    pub(crate) fn set_diag(&mut self, diag: PayloadDiag) {
        self.diag = diag;
    }
}

/// Joint readings. `velocities` and `efforts` are either empty or as long as `names`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub header: Header,
    names: Vec<String>,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    efforts: Vec<f64>,
    diag: PayloadDiag,
}

impl JointState {
    pub fn new(
        header: Header,
        names: Vec<String>,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        efforts: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = names.len();
        if positions.len() != n {
            return Err(ModelError::JointState(format!(
                "{} positions for {n} names",
                positions.len()
            )));
        }
        for (what, list) in [("velocities", &velocities), ("efforts", &efforts)] {
            if !list.is_empty() && list.len() != n {
                return Err(ModelError::JointState(format!(
                    "{} {what} for {n} names",
                    list.len()
                )));
            }
        }
        Ok(Self {
            header,
            names,
            positions,
            velocities,
            efforts,
            diag: PayloadDiag::new(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn efforts(&self) -> &[f64] {
        &self.efforts
    }

    pub fn diag(&self) -> &PayloadDiag {
        &self.diag
    }

    pub(crate) fn set_diag(&mut self, diag: PayloadDiag) {
        self.diag = diag;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlayState {
    Initial,
    Ready,
    Set,
    Playing,
    Finished,
}

impl PlayState {
    pub const ALL: [PlayState; 5] = [
        PlayState::Initial,
        PlayState::Ready,
        PlayState::Set,
        PlayState::Playing,
        PlayState::Finished,
    ];

    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TeamInfo {
    pub team_number: u8,
    pub team_colour: u8,
    pub score: u8,
    pub penalty_shot: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub packet_number: u8,
    pub players_per_team: u8,
    pub state: PlayState,
    pub first_half: bool,
    pub kickoff_team: u8,
    pub secondary_state: u8,
    pub secs_remaining: i16,
    pub secondary_time: i16,
    pub teams: [TeamInfo; 2],
    diag: PayloadDiag,
}

impl GameState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        packet_number: u8,
        players_per_team: u8,
        state: PlayState,
        first_half: bool,
        kickoff_team: u8,
        secondary_state: u8,
        secs_remaining: i16,
        secondary_time: i16,
        teams: [TeamInfo; 2],
    ) -> Self {
        Self {
            packet_number,
            players_per_team,
            state,
            first_half,
            kickoff_team,
            secondary_state,
            secs_remaining,
            secondary_time,
            teams,
            diag: PayloadDiag::new(),
        }
    }

    /// All-zero fields in the INITIAL state.
    pub fn initial() -> Self {
        Self::new(0, 0, PlayState::Initial, false, 0, 0, 0, 0, Default::default())
    }

    pub fn diag(&self) -> &PayloadDiag {
        &self.diag
    }

    pub(crate) fn set_diag(&mut self, diag: PayloadDiag) {
        self.diag = diag;
    }
}

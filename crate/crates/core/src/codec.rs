//! Deterministic little-endian encoding of the payload types and the
//! `BHW1` frame that carries them between processes.
//!
//! Payload layout: fixed-width fields in declaration order; strings and
//! lists are a `u32` element count followed by the elements; image pixel
//! data is appended raw after its count. The frame layout is documented in
//! `docs/wire-format.md`.

use thiserror::Error;

use crate::model::{
    DomainId, Encoding, GameState, Header, Image, Imu, JointState, ModelError, PayloadDiag,
    PlayState, Quaternion, TeamInfo, Time, TopicName,
};

pub const FRAME_MAGIC: [u8; 4] = *b"BHW1";
/// magic + domain + topic_len + tag + seq + payload_len, excluding the topic bytes.
pub const FRAME_FIXED_LEN: usize = 4 + 4 + 2 + 1 + 8 + 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("unknown type tag {0}")]
    BadTag(u8),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("bad frame magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TypeTag {
    Image = 1,
    Imu = 2,
    JointState = 3,
    GameState = 4,
}

impl TypeTag {
    pub fn from_byte(b: u8) -> Result<Self, CodecError> {
        match b {
            1 => Ok(TypeTag::Image),
            2 => Ok(TypeTag::Imu),
            3 => Ok(TypeTag::JointState),
            4 => Ok(TypeTag::GameState),
            other => Err(CodecError::BadTag(other)),
        }
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }
}

/// A message type that can travel on a topic.
pub trait Payload: Send + Sync + Sized + 'static {
    const TAG: TypeTag;

    fn encode_into(&self, out: &mut Vec<u8>);

    /// Decodes one message occupying all of `bytes`. The result records one
    /// deep copy since its bytes were materialized from the buffer.
    fn decode(bytes: &[u8]) -> Result<Self, CodecError>;

    fn diag(&self) -> &PayloadDiag;

    fn encoded_len_hint(&self) -> usize {
        64
    }
}

/// Any of the four payload types.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Image(Image),
    Imu(Imu),
    JointState(JointState),
    GameState(GameState),
}

impl Message {
    pub fn tag(&self) -> TypeTag {
        match self {
            Message::Image(_) => TypeTag::Image,
            Message::Imu(_) => TypeTag::Imu,
            Message::JointState(_) => TypeTag::JointState,
            Message::GameState(_) => TypeTag::GameState,
        }
    }

    pub fn diag(&self) -> &PayloadDiag {
        match self {
            Message::Image(m) => m.diag(),
            Message::Imu(m) => m.diag(),
            Message::JointState(m) => m.diag(),
            Message::GameState(m) => m.diag(),
        }
    }
}

pub fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::Image(m) => m.encode_into(&mut out),
        Message::Imu(m) => m.encode_into(&mut out),
        Message::JointState(m) => m.encode_into(&mut out),
        Message::GameState(m) => m.encode_into(&mut out),
    }
    out
}

pub fn decode_payload(tag: u8, bytes: &[u8]) -> Result<Message, CodecError> {
    Ok(match TypeTag::from_byte(tag)? {
        TypeTag::Image => Message::Image(Image::decode(bytes)?),
        TypeTag::Imu => Message::Imu(Imu::decode(bytes)?),
        TypeTag::JointState => Message::JointState(JointState::decode(bytes)?),
        TypeTag::GameState => Message::GameState(GameState::decode(bytes)?),
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(CodecError::Truncated {
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn i16(&mut self) -> Result<i16, CodecError> {
        Ok(i16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Reads a `u32` count of `elem_size`-byte elements, checking up front
    /// that the buffer can hold them.
    fn count(&mut self, elem_size: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        let needed = n.saturating_mul(elem_size);
        let available = self.buf.len() - self.pos;
        if needed > available {
            return Err(CodecError::Truncated { needed, available });
        }
        Ok(n)
    }

    fn string(&mut self) -> Result<String, CodecError> {
        let n = self.count(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CodecError::InvariantViolation("string is not UTF-8".into()))
    }

    fn f64_list(&mut self) -> Result<Vec<f64>, CodecError> {
        let n = self.count(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn f64x3(&mut self) -> Result<[f64; 3], CodecError> {
        Ok([self.f64()?, self.f64()?, self.f64()?])
    }

    fn header(&mut self) -> Result<Header, CodecError> {
        let stamp = Time::from_nanos(self.i64()?);
        let frame_id = self.string()?;
        Ok(Header { stamp, frame_id })
    }

    fn finish(&self) -> Result<(), CodecError> {
        let rest = self.buf.len() - self.pos;
        if rest != 0 {
            return Err(CodecError::InvariantViolation(format!(
                "{rest} unconsumed bytes after payload"
            )));
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_f64_list(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    put_f64s(out, v);
}

fn put_header(out: &mut Vec<u8>, h: &Header) {
    out.extend_from_slice(&h.stamp.nanos.to_le_bytes());
    put_str(out, &h.frame_id);
}

fn header_len(h: &Header) -> usize {
    8 + 4 + h.frame_id.len()
}

impl Payload for Image {
    const TAG: TypeTag = TypeTag::Image;

    fn encode_into(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len_hint());
        put_header(out, &self.header);
        out.extend_from_slice(&self.width().to_le_bytes());
        out.extend_from_slice(&self.height().to_le_bytes());
        out.push(self.encoding().to_byte());
        out.extend_from_slice(&self.step().to_le_bytes());
        out.extend_from_slice(&(self.data().len() as u32).to_le_bytes());
        out.extend_from_slice(self.data());
    }

    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let header = r.header()?;
        let width = r.u32()?;
        let height = r.u32()?;
        let enc_byte = r.u8()?;
        let encoding = Encoding::from_byte(enc_byte).ok_or_else(|| {
            CodecError::InvariantViolation(format!("unknown image encoding {enc_byte}"))
        })?;
        let step = r.u32()?;
        let n = r.count(1)?;
        let data = r.take(n)?.to_vec();
        r.finish()?;
        let mut img = Image::with_step(header, width, height, encoding, step, data)
            .map_err(|e| CodecError::InvariantViolation(e.to_string()))?;
        img.set_diag(PayloadDiag::with_count(1));
        Ok(img)
    }

    fn diag(&self) -> &PayloadDiag {
        Image::diag(self)
    }

    fn encoded_len_hint(&self) -> usize {
        header_len(&self.header) + 4 + 4 + 1 + 4 + 4 + self.data().len()
    }
}

impl Payload for Imu {
    const TAG: TypeTag = TypeTag::Imu;

    fn encode_into(&self, out: &mut Vec<u8>) {
        put_header(out, &self.header);
        let q = self.orientation;
        put_f64s(out, &[q.w, q.x, q.y, q.z]);
        put_f64s(out, &self.angular_velocity);
        put_f64s(out, &self.linear_acceleration);
    }

    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let header = r.header()?;
        let orientation = Quaternion {
            w: r.f64()?,
            x: r.f64()?,
            y: r.f64()?,
            z: r.f64()?,
        };
        let angular_velocity = r.f64x3()?;
        let linear_acceleration = r.f64x3()?;
        r.finish()?;
        let mut imu = Imu::new(header, orientation, angular_velocity, linear_acceleration)
            .map_err(|e| CodecError::InvariantViolation(e.to_string()))?;
        imu.set_diag(PayloadDiag::with_count(1));
        Ok(imu)
    }

    fn diag(&self) -> &PayloadDiag {
        Imu::diag(self)
    }

    fn encoded_len_hint(&self) -> usize {
        header_len(&self.header) + 10 * 8
    }
}

impl Payload for JointState {
    const TAG: TypeTag = TypeTag::JointState;

    fn encode_into(&self, out: &mut Vec<u8>) {
        put_header(out, &self.header);
        out.extend_from_slice(&(self.names().len() as u32).to_le_bytes());
        for name in self.names() {
            put_str(out, name);
        }
        put_f64_list(out, self.positions());
        put_f64_list(out, self.velocities());
        put_f64_list(out, self.efforts());
    }

    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let header = r.header()?;
        let n = r.count(4)?;
        let names = (0..n).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
        let positions = r.f64_list()?;
        let velocities = r.f64_list()?;
        let efforts = r.f64_list()?;
        r.finish()?;
        let mut js = JointState::new(header, names, positions, velocities, efforts)
            .map_err(|e| CodecError::InvariantViolation(e.to_string()))?;
        js.set_diag(PayloadDiag::with_count(1));
        Ok(js)
    }

    fn diag(&self) -> &PayloadDiag {
        JointState::diag(self)
    }
}

impl Payload for GameState {
    const TAG: TypeTag = TypeTag::GameState;

    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&[
            self.packet_number,
            self.players_per_team,
            self.state.to_byte(),
            u8::from(self.first_half),
            self.kickoff_team,
            self.secondary_state,
        ]);
        out.extend_from_slice(&self.secs_remaining.to_le_bytes());
        out.extend_from_slice(&self.secondary_time.to_le_bytes());
        for t in &self.teams {
            out.extend_from_slice(&[t.team_number, t.team_colour, t.score, t.penalty_shot]);
        }
    }

    fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let packet_number = r.u8()?;
        let players_per_team = r.u8()?;
        let state_byte = r.u8()?;
        let state = PlayState::from_byte(state_byte).ok_or_else(|| {
            CodecError::InvariantViolation(format!("game state {state_byte} out of range"))
        })?;
        let first_half = match r.u8()? {
            0 => false,
            1 => true,
            b => {
                return Err(CodecError::InvariantViolation(format!(
                    "first_half flag {b} is not 0/1"
                )))
            }
        };
        let kickoff_team = r.u8()?;
        let secondary_state = r.u8()?;
        let secs_remaining = r.i16()?;
        let secondary_time = r.i16()?;
        let mut teams = [TeamInfo::default(); 2];
        for t in &mut teams {
            let [team_number, team_colour, score, penalty_shot] = r.array()?;
            *t = TeamInfo {
                team_number,
                team_colour,
                score,
                penalty_shot,
            };
        }
        r.finish()?;
        let mut gs = GameState::new(
            packet_number,
            players_per_team,
            state,
            first_half,
            kickoff_team,
            secondary_state,
            secs_remaining,
            secondary_time,
            teams,
        );
        gs.set_diag(PayloadDiag::with_count(1));
        Ok(gs)
    }

    fn diag(&self) -> &PayloadDiag {
        GameState::diag(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub domain_id: u32,
    pub topic: TopicName,
    pub type_tag: u8,
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl WireFrame {
    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }

    pub fn decode<M: Payload>(&self) -> Result<M, CodecError> {
        if self.type_tag != M::TAG.as_byte() {
            return Err(CodecError::BadTag(self.type_tag));
        }
        M::decode(&self.payload)
    }
}

fn put_frame_head(out: &mut Vec<u8>, domain: DomainId, topic: &TopicName, seq: u64, tag: u8) {
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&domain.id().to_le_bytes());
    out.extend_from_slice(&(topic.as_str().len() as u16).to_le_bytes());
    out.extend_from_slice(topic.as_str().as_bytes());
    out.push(tag);
    out.extend_from_slice(&seq.to_le_bytes());
}

pub fn frame(domain: DomainId, topic: &TopicName, seq: u64, tag: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_FIXED_LEN + topic.as_str().len() + payload.len());
    put_frame_head(&mut out, domain, topic, seq, tag);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Appends a complete frame for `msg` to `out`, encoding the payload in place.
pub fn frame_message_into<M: Payload>(
    out: &mut Vec<u8>,
    domain: DomainId,
    topic: &TopicName,
    seq: u64,
    msg: &M,
) {
    out.reserve(FRAME_FIXED_LEN + topic.as_str().len() + msg.encoded_len_hint());
    put_frame_head(out, domain, topic, seq, M::TAG.as_byte());
    let len_at = out.len();
    out.extend_from_slice(&[0; 4]);
    msg.encode_into(out);
    let payload_len = (out.len() - len_at - 4) as u32;
    out[len_at..len_at + 4].copy_from_slice(&payload_len.to_le_bytes());
}

pub fn frame_message<M: Payload>(domain: DomainId, topic: &TopicName, seq: u64, msg: &M) -> Vec<u8> {
    let mut out = Vec::new();
    frame_message_into(&mut out, domain, topic, seq, msg);
    out
}

/// Parses exactly one frame occupying all of `bytes`.
pub fn parse_frame(bytes: &[u8]) -> Result<WireFrame, CodecError> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.array()?;
    if magic != FRAME_MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    let domain_id = r.u32()?;
    let topic_len = usize::from(r.u16()?);
    let topic_bytes = r.take(topic_len)?;
    let topic_str = std::str::from_utf8(topic_bytes)
        .map_err(|_| CodecError::InvariantViolation("topic is not UTF-8".into()))?;
    let topic = TopicName::new(topic_str)?;
    let type_tag = r.u8()?;
    let seq = r.u64()?;
    let payload_len = r.u32()? as usize;
    let payload = r.take(payload_len)?.to_vec();
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(CodecError::TrailingBytes(rest));
    }
    Ok(WireFrame {
        domain_id,
        topic,
        type_tag,
        seq,
        payload,
    })
}

//! Loopback transports between processes (or between nodes of one process
//! when intra-process routing is off).
//!
//! Ports are derived, not discovered: `20000 + domain * 8 + topic_slot`.
//! UDP carries one frame per datagram. TCP carries a stream of records, each
//! a little-endian `u32` length followed by that many frame bytes.

use std::io::{self, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{frame_message_into, parse_frame, Payload, WireFrame};
use crate::model::{DomainId, TopicName};

pub const PORT_BASE: u16 = 20000;
pub const SLOTS_PER_DOMAIN: u32 = 8;
/// Largest UDP payload over IPv4.
pub const MAX_DATAGRAM: usize = 65507;
/// Records above this size are treated as stream corruption.
pub const MAX_RECORD: usize = 256 << 20;

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("frame of {size} bytes exceeds the {MAX_DATAGRAM}-byte datagram limit")]
    PayloadTooLarge { size: usize },
    #[error("connection lost: {0}")]
    ConnectionLost(#[source] io::Error),
    #[error("stream ended mid-record")]
    TruncatedStream,
    #[error("record of {0} bytes exceeds limit")]
    RecordTooLarge(usize),
    #[error("topic slot {slot} out of range for domain {domain}")]
    SlotOutOfRange { domain: u32, slot: u32 },
    #[error("failed to bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    #[serde(rename = "udp")]
    UdpBestEffort,
    #[serde(rename = "tcp")]
    TcpReliable,
}

pub fn port_for(domain: DomainId, slot: u32) -> Result<u16, TransportError> {
    if slot >= SLOTS_PER_DOMAIN {
        return Err(TransportError::SlotOutOfRange {
            domain: domain.id(),
            slot,
        });
    }
    // domain <= 232 keeps this below 21864.
    Ok(PORT_BASE + (domain.id() * SLOTS_PER_DOMAIN + slot) as u16)
}

fn loopback(port: u16) -> SocketAddr {
    SocketAddr::V4(SocketAddrV4::new(Ipv4Addr::LOCALHOST, port))
}

#[derive(Debug, Default)]
pub struct DropCounters {
    pub wrong_domain: AtomicU64,
    pub queue_full: AtomicU64,
    pub malformed: AtomicU64,
    pub truncated_streams: AtomicU64,
    pub surfaced: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCountersSnapshot {
    pub wrong_domain: u64,
    pub queue_full: u64,
    pub malformed: u64,
    pub truncated_streams: u64,
    pub surfaced: u64,
}

impl DropCounters {
    pub fn snapshot(&self) -> DropCountersSnapshot {
        DropCountersSnapshot {
            wrong_domain: self.wrong_domain.load(Ordering::Relaxed),
            queue_full: self.queue_full.load(Ordering::Relaxed),
            malformed: self.malformed.load(Ordering::Relaxed),
            truncated_streams: self.truncated_streams.load(Ordering::Relaxed),
            surfaced: self.surfaced.load(Ordering::Relaxed),
        }
    }
}

/// Writes one length-delimited record.
pub fn write_record<W: Write>(w: &mut W, frame: &[u8]) -> io::Result<()> {
    w.write_all(&(frame.len() as u32).to_le_bytes())?;
    w.write_all(frame)
}

/// Reads one record. `Ok(None)` means the stream ended cleanly between records.
pub fn read_record<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, TransportError> {
    let mut len = [0u8; 4];
    match read_full(r, &mut len)? {
        0 => return Ok(None),
        4 => {}
        _ => return Err(TransportError::TruncatedStream),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_RECORD {
        return Err(TransportError::RecordTooLarge(len));
    }
    let mut buf = vec![0u8; len];
    if read_full(r, &mut buf)? != len {
        return Err(TransportError::TruncatedStream);
    }
    Ok(Some(buf))
}

/// Like `read_exact`, but reports how many bytes arrived before EOF.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// A TCP stream that keeps waiting through read timeouts until told to stop.
struct StoppableStream<'a> {
    stream: &'a TcpStream,
    stop: &'a AtomicBool,
}

impl Read for StoppableStream<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        loop {
            match (&*self.stream).read(buf) {
                Err(e)
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
                {
                    if self.stop.load(Ordering::Relaxed) {
                        return Err(io::Error::other("endpoint stopped"));
                    }
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Sent,
    /// Nobody is listening yet; the frame was discarded.
    NoPeer,
}

enum SenderInner {
    Udp {
        socket: UdpSocket,
    },
    Tcp {
        conn: Mutex<Option<TcpStream>>,
        last_attempt: Mutex<Option<Instant>>,
    },
}

/// Sending half of a topic transport. Safe to share across threads.
pub struct Sender {
    domain: DomainId,
    topic: TopicName,
    target: SocketAddr,
    inner: SenderInner,
    buf: Mutex<Vec<u8>>,
}

impl Sender {
    pub fn new(
        kind: EndpointKind,
        domain: DomainId,
        topic: TopicName,
        port: u16,
    ) -> Result<Self, TransportError> {
        let inner = match kind {
            EndpointKind::UdpBestEffort => SenderInner::Udp {
                socket: UdpSocket::bind(loopback(0))?,
            },
            EndpointKind::TcpReliable => SenderInner::Tcp {
                conn: Mutex::new(None),
                last_attempt: Mutex::new(None),
            },
        };
        Ok(Self {
            domain,
            topic,
            target: loopback(port),
            inner,
            buf: Mutex::new(Vec::new()),
        })
    }

    pub fn kind(&self) -> EndpointKind {
        match self.inner {
            SenderInner::Udp { .. } => EndpointKind::UdpBestEffort,
            SenderInner::Tcp { .. } => EndpointKind::TcpReliable,
        }
    }

    pub fn target_port(&self) -> u16 {
        self.target.port()
    }

    pub fn send<M: Payload>(&self, seq: u64, msg: &M) -> Result<SendOutcome, TransportError> {
        let mut buf = self.buf.lock().unwrap();
        buf.clear();
        if matches!(self.inner, SenderInner::Tcp { .. }) {
            buf.extend_from_slice(&[0; 4]);
        }
        frame_message_into(&mut buf, self.domain, &self.topic, seq, msg);
        match &self.inner {
            SenderInner::Udp { socket } => {
                if buf.len() > MAX_DATAGRAM {
                    return Err(TransportError::PayloadTooLarge { size: buf.len() });
                }
                match socket.send_to(&buf, self.target) {
                    Ok(_) => Ok(SendOutcome::Sent),
                    // Loopback reports an unreachable port on a later send; fire and forget.
                    Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Ok(SendOutcome::NoPeer),
                    Err(e) => Err(e.into()),
                }
            }
            SenderInner::Tcp { .. } => {
                let len = (buf.len() - 4) as u32;
                buf[..4].copy_from_slice(&len.to_le_bytes());
                self.send_record(&buf)
            }
        }
    }

    /// Sends an already-built frame. On TCP it becomes one record.
    pub fn send_frame(&self, frame: &[u8]) -> Result<SendOutcome, TransportError> {
        match &self.inner {
            SenderInner::Udp { socket } => {
                if frame.len() > MAX_DATAGRAM {
                    return Err(TransportError::PayloadTooLarge { size: frame.len() });
                }
                match socket.send_to(frame, self.target) {
                    Ok(_) => Ok(SendOutcome::Sent),
                    Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Ok(SendOutcome::NoPeer),
                    Err(e) => Err(e.into()),
                }
            }
            SenderInner::Tcp { .. } => {
                let mut rec = Vec::with_capacity(frame.len() + 4);
                write_record(&mut rec, frame)?;
                self.send_record(&rec)
            }
        }
    }

    fn send_record(&self, record: &[u8]) -> Result<SendOutcome, TransportError> {
        let SenderInner::Tcp { conn, last_attempt } = &self.inner else {
            unreachable!("record send on datagram sender");
        };
        let mut conn = conn.lock().unwrap();
        if conn.is_none() {
            let mut last = last_attempt.lock().unwrap();
            let now = Instant::now();
            if last.is_some_and(|t| now - t < Duration::from_millis(20)) {
                return Ok(SendOutcome::NoPeer);
            }
            *last = Some(now);
            match TcpStream::connect(self.target) {
                Ok(s) => {
                    s.set_nodelay(true)?;
                    *conn = Some(s);
                }
                Err(_) => return Ok(SendOutcome::NoPeer),
            }
        }
        let stream = conn.as_mut().expect("connected above");
        if let Err(e) = stream.write_all(record) {
            *conn = None;
            return Err(TransportError::ConnectionLost(e));
        }
        Ok(SendOutcome::Sent)
    }
}

pub type FrameHandler = Arc<dyn Fn(WireFrame) + Send + Sync>;

/// Receiving half of a topic transport, bound to its derived port.
///
/// Frames are parsed, then checked against the endpoint's domain and topic;
/// only matching frames reach the handler. Everything else is counted.
pub struct Endpoint {
    domain: DomainId,
    topic: TopicName,
    kind: EndpointKind,
    port: u16,
    counters: Arc<DropCounters>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    inbox: Option<Mutex<Receiver<WireFrame>>>,
}

impl Endpoint {
    /// Binds an endpoint whose surfaced frames are pulled with [`Endpoint::recv`].
    pub fn bind(
        kind: EndpointKind,
        domain: DomainId,
        topic: TopicName,
        port: u16,
    ) -> Result<Self, TransportError> {
        let (tx, rx): (SyncSender<WireFrame>, _) = sync_channel(1024);
        let counters = Arc::new(DropCounters::default());
        let overflow = counters.clone();
        let handler: FrameHandler = Arc::new(move |f| {
            if let Err(TrySendError::Full(_)) = tx.try_send(f) {
                overflow.queue_full.fetch_add(1, Ordering::Relaxed);
            }
        });
        let mut ep = Self::spawn(kind, domain, topic, port, counters, handler)?;
        ep.inbox = Some(Mutex::new(rx));
        Ok(ep)
    }

    /// Binds an endpoint that pushes surfaced frames to `handler` on its reader thread(s).
    pub fn bind_with_handler(
        kind: EndpointKind,
        domain: DomainId,
        topic: TopicName,
        port: u16,
        handler: FrameHandler,
    ) -> Result<Self, TransportError> {
        Self::spawn(kind, domain, topic, port, Arc::new(DropCounters::default()), handler)
    }

    fn spawn(
        kind: EndpointKind,
        domain: DomainId,
        topic: TopicName,
        port: u16,
        counters: Arc<DropCounters>,
        handler: FrameHandler,
    ) -> Result<Self, TransportError> {
        let stop = Arc::new(AtomicBool::new(false));
        let gate = Gate {
            domain,
            topic: topic.clone(),
            counters: counters.clone(),
            handler,
        };
        let thread = match kind {
            EndpointKind::UdpBestEffort => {
                let socket = UdpSocket::bind(loopback(port))
                    .map_err(|source| TransportError::Bind { port, source })?;
                socket.set_read_timeout(Some(POLL))?;
                let stop = stop.clone();
                thread::Builder::new()
                    .name(format!("udp{port}"))
                    .spawn(move || udp_reader(socket, gate, stop))?
            }
            EndpointKind::TcpReliable => {
                let listener = TcpListener::bind(loopback(port))
                    .map_err(|source| TransportError::Bind { port, source })?;
                listener.set_nonblocking(true)?;
                let stop = stop.clone();
                thread::Builder::new()
                    .name(format!("tcp{port}"))
                    .spawn(move || tcp_acceptor(listener, Arc::new(gate), stop))?
            }
        };
        Ok(Self {
            domain,
            topic,
            kind,
            port,
            counters,
            stop,
            threads: vec![thread],
            inbox: None,
        })
    }

    pub fn domain(&self) -> DomainId {
        self.domain
    }

    pub fn topic(&self) -> &TopicName {
        &self.topic
    }

    pub fn kind(&self) -> EndpointKind {
        self.kind
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn counters(&self) -> &Arc<DropCounters> {
        &self.counters
    }

    /// Next surfaced frame, or `None` after `timeout` (or for handler-driven endpoints).
    pub fn recv(&self, timeout: Duration) -> Option<WireFrame> {
        let inbox = self.inbox.as_ref()?;
        inbox.lock().unwrap().recv_timeout(timeout).ok()
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

struct Gate {
    domain: DomainId,
    topic: TopicName,
    counters: Arc<DropCounters>,
    handler: FrameHandler,
}

impl Gate {
    fn admit(&self, bytes: &[u8]) {
        let frame = match parse_frame(bytes) {
            Ok(f) => f,
            Err(_) => {
                self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                return;
            }
        };
        if frame.domain_id != self.domain.id() {
            self.counters.wrong_domain.fetch_add(1, Ordering::Relaxed);
            return;
        }
        if frame.topic != self.topic {
            self.counters.malformed.fetch_add(1, Ordering::Relaxed);
            return;
        }
        self.counters.surfaced.fetch_add(1, Ordering::Relaxed);
        (self.handler)(frame);
    }
}

fn udp_reader(socket: UdpSocket, gate: Gate, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; 65536];
    while !stop.load(Ordering::Relaxed) {
        match socket.recv_from(&mut buf) {
            Ok((n, _)) => gate.admit(&buf[..n]),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => {
                log::debug!("udp endpoint {}: {e}", gate.topic);
            }
        }
    }
}

fn tcp_acceptor(listener: TcpListener, gate: Arc<Gate>, stop: Arc<AtomicBool>) {
    let mut readers: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let gate = gate.clone();
                let stop = stop.clone();
                let spawned = thread::Builder::new()
                    .name("tcp-reader".into())
                    .spawn(move || tcp_reader(stream, gate, stop));
                match spawned {
                    Ok(h) => readers.push(h),
                    Err(e) => log::warn!("cannot spawn reader: {e}"),
                }
                readers.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::debug!("accept on {}: {e}", gate.topic);
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
    for h in readers {
        let _ = h.join();
    }
}

fn tcp_reader(stream: TcpStream, gate: Arc<Gate>, stop: Arc<AtomicBool>) {
    if stream.set_nonblocking(false).is_err() || stream.set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let _ = stream.set_nodelay(true);
    let mut reader = StoppableStream {
        stream: &stream,
        stop: &stop,
    };
    while !stop.load(Ordering::Relaxed) {
        match read_record(&mut reader) {
            Ok(Some(record)) => gate.admit(&record),
            Ok(None) => return,
            Err(TransportError::TruncatedStream) => {
                gate.counters.truncated_streams.fetch_add(1, Ordering::Relaxed);
                return;
            }
            Err(TransportError::RecordTooLarge(_)) => {
                gate.counters.malformed.fetch_add(1, Ordering::Relaxed);
                return;
            }
            Err(_) => return,
        }
    }
}

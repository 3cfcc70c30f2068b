//! GameController bridge: a frozen 24-byte packet layout and a UDP listener
//! that republishes every valid packet as a `GameState` message.
//!
//! ```text
//! [0..4)   magic "RGme"
//! [4..6)   version u16 LE = 12
//! [6]      packet_number
//! [7]      players_per_team
//! [8]      game_state (0 INITIAL .. 4 FINISHED)
//! [9]      first_half (0/1)
//! [10]     kickoff_team
//! [11]     secondary_state
//! [12..14) secs_remaining i16 LE
//! [14..16) secondary_time i16 LE
//! [16..20) team A {team_number, team_colour, score, penalty_shot}
//! [20..24) team B
//! ```
//!
//! This is a subset of the league protocol and does not interoperate with
//! the official tool.

use std::io;
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use thiserror::Error;

use crate::model::{GameState, PlayState, TeamInfo};

pub const GC_MAGIC: [u8; 4] = *b"RGme";
pub const GC_VERSION: u16 = 12;
pub const GC_PACKET_LEN: usize = 24;
pub const DEFAULT_GC_PORT: u16 = 3838;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GcError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u16),
    #[error("packet is {0} bytes, expected {GC_PACKET_LEN}")]
    BadLength(usize),
    #[error("{field} value {value} out of range")]
    BadEnum { field: &'static str, value: u8 },
}

pub fn encode_gc_packet(state: &GameState) -> [u8; GC_PACKET_LEN] {
    let mut b = [0u8; GC_PACKET_LEN];
    b[0..4].copy_from_slice(&GC_MAGIC);
    b[4..6].copy_from_slice(&GC_VERSION.to_le_bytes());
    b[6] = state.packet_number;
    b[7] = state.players_per_team;
    b[8] = state.state.to_byte();
    b[9] = u8::from(state.first_half);
    b[10] = state.kickoff_team;
    b[11] = state.secondary_state;
    b[12..14].copy_from_slice(&state.secs_remaining.to_le_bytes());
    b[14..16].copy_from_slice(&state.secondary_time.to_le_bytes());
    for (i, t) in state.teams.iter().enumerate() {
        let o = 16 + 4 * i;
        b[o..o + 4].copy_from_slice(&[t.team_number, t.team_colour, t.score, t.penalty_shot]);
    }
    b
}

pub fn parse_gc_packet(bytes: &[u8]) -> Result<GameState, GcError> {
    if bytes.len() != GC_PACKET_LEN {
        return Err(GcError::BadLength(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("length checked");
    if magic != GC_MAGIC {
        return Err(GcError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != GC_VERSION {
        return Err(GcError::BadVersion(version));
    }
    let state = PlayState::from_byte(bytes[8]).ok_or(GcError::BadEnum {
        field: "game_state",
        value: bytes[8],
    })?;
    let first_half = match bytes[9] {
        0 => false,
        1 => true,
        value => {
            return Err(GcError::BadEnum {
                field: "first_half",
                value,
            })
        }
    };
    let team = |o: usize| TeamInfo {
        team_number: bytes[o],
        team_colour: bytes[o + 1],
        score: bytes[o + 2],
        penalty_shot: bytes[o + 3],
    };
    Ok(GameState::new(
        bytes[6],
        bytes[7],
        state,
        first_half,
        bytes[10],
        bytes[11],
        i16::from_le_bytes([bytes[12], bytes[13]]),
        i16::from_le_bytes([bytes[14], bytes[15]]),
        [team(16), team(20)],
    ))
}

#[derive(Debug, Default)]
pub struct BridgeCounters {
    pub published: AtomicU64,
    pub malformed: AtomicU64,
}

/// Binds the GameController listener socket on all interfaces.
pub fn bind_gc_socket(port: u16) -> io::Result<UdpSocket> {
    let socket = UdpSocket::bind(SocketAddr::from((Ipv4Addr::UNSPECIFIED, port)))?;
    socket.set_read_timeout(Some(Duration::from_millis(50)))?;
    Ok(socket)
}

/// Receives packets until `keep_running` returns false. Every valid packet
/// goes to `publish` in arrival order (duplicates included); malformed ones
/// are only counted.
pub fn bridge_run<E>(
    socket: &UdpSocket,
    counters: &BridgeCounters,
    mut keep_running: impl FnMut() -> bool,
    mut publish: impl FnMut(GameState) -> Result<(), E>,
) -> Result<(), E> {
    let mut buf = [0u8; 2048];
    while keep_running() {
        let n = match socket.recv_from(&mut buf) {
            Ok((n, _)) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                log::debug!("gamecontroller socket: {e}");
                continue;
            }
        };
        match parse_gc_packet(&buf[..n]) {
            Ok(state) => {
                publish(state)?;
                counters.published.fetch_add(1, Ordering::Relaxed);
            }
            Err(e) => {
                log::debug!("dropping gamecontroller packet: {e}");
                counters.malformed.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
    Ok(())
}

//! Datagram layout shared with an external plant: `CLF1`, a little-endian
//! u32 sequence number, then little-endian f64 fields (command: v_x, v_y,
//! omega; pose: x, y, theta, timestamp).

use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::clf::Command;
use crate::geometry::Pose;
use crate::robots::{CommandMailbox, Plant};

pub const MAGIC: [u8; 4] = *b"CLF1";
pub const COMMAND_LEN: usize = 32;
pub const POSE_LEN: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("datagram is {got} bytes, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("bad magic {0:02x?}")]
    Magic([u8; 4]),
}

fn encode<const N: usize>(seq: u32, fields: &[f64]) -> [u8; N] {
    let mut out = [0u8; N];
    out[..4].copy_from_slice(&MAGIC);
    out[4..8].copy_from_slice(&seq.to_le_bytes());
    for (k, f) in fields.iter().enumerate() {
        out[8 + 8 * k..16 + 8 * k].copy_from_slice(&f.to_le_bytes());
    }
    out
}

fn decode<const K: usize>(bytes: &[u8]) -> Result<(u32, [f64; K]), DecodeError> {
    let expected = 8 + 8 * K;
    if bytes.len() != expected {
        return Err(DecodeError::Length {
            expected,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(DecodeError::Magic(magic));
    }
    let seq = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let mut fields = [0.0; K];
    for (k, f) in fields.iter_mut().enumerate() {
        *f = f64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap());
    }
    Ok((seq, fields))
}

pub fn encode_command(cmd: &Command, seq: u32) -> [u8; COMMAND_LEN] {
    encode(seq, &[cmd.v_x, cmd.v_y, cmd.omega])
}

pub fn decode_command(bytes: &[u8]) -> Result<(u32, Command), DecodeError> {
    let (seq, [v_x, v_y, omega]) = decode::<3>(bytes)?;
    Ok((seq, Command { v_x, v_y, omega }))
}

pub fn encode_pose(pose: &Pose, timestamp: f64, seq: u32) -> [u8; POSE_LEN] {
    encode(seq, &[pose.x, pose.y, pose.theta, timestamp])
}

/// Decodes a pose datagram without wrapping the heading.
pub fn decode_pose(bytes: &[u8]) -> Result<(u32, Pose, f64), DecodeError> {
    let (seq, [x, y, theta, t]) = decode::<4>(bytes)?;
    Ok((seq, Pose { x, y, theta }, t))
}

/// Latest-wins filter over wrapping u32 sequence numbers.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequenceFilter {
    last: Option<u32>,
}

impl SequenceFilter {
    /// True when `seq` is newer than everything accepted so far.
    pub fn accept(&mut self, seq: u32) -> bool {
        let newer = match self.last {
            None => true,
            Some(last) => (seq.wrapping_sub(last) as i32) > 0,
        };
        if newer {
            self.last = Some(seq);
        }
        newer
    }

    pub fn last(&self) -> Option<u32> {
        self.last
    }
}

/// Plant proxy for the runtime: each advance sends the latest command,
/// absorbs whatever pose datagrams arrived and paces itself to wall time.
pub struct RemotePlant {
    socket: UdpSocket,
    peer: SocketAddr,
    pose: Pose,
    applied: Command,
    seq: u32,
    filter: SequenceFilter,
    steps: u64,
    started: Instant,
    pub dropped: u64,
    pub malformed: u64,
}

impl RemotePlant {
    pub fn new(socket: UdpSocket, peer: SocketAddr, initial: Pose) -> std::io::Result<Self> {
        socket.set_nonblocking(true)?;
        Ok(Self {
            socket,
            peer,
            pose: initial,
            applied: Command::ZERO,
            seq: 0,
            filter: SequenceFilter::default(),
            steps: 0,
            started: Instant::now(),
            dropped: 0,
            malformed: 0,
        })
    }

    fn drain(&mut self) {
        let mut buf = [0u8; 64];
        loop {
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => match decode_pose(&buf[..n]) {
                    Ok((seq, pose, _)) if self.filter.accept(seq) => self.pose = pose,
                    Ok(_) => self.dropped += 1,
                    Err(e) => {
                        log::warn!("ignoring datagram: {e}");
                        self.malformed += 1;
                    }
                },
                Err(e) if e.kind() == ErrorKind::WouldBlock => return,
                Err(e) => {
                    log::warn!("receive failed: {e}");
                    return;
                }
            }
        }
    }
}

impl Plant for RemotePlant {
    fn pose(&self) -> Pose {
        self.pose
    }

    fn advance(&mut self, dt: f64, mailbox: &CommandMailbox) {
        self.applied = mailbox.latest();
        self.seq = self.seq.wrapping_add(1);
        if let Err(e) = self.socket.send_to(&encode_command(&self.applied, self.seq), self.peer) {
            log::warn!("send failed: {e}");
        }
        self.steps += 1;
        let due = self.started + Duration::from_secs_f64(dt * self.steps as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        self.drain();
    }

    fn disturb(&mut self, _offset: &Pose) {
        log::warn!("disturbances are not forwarded to a remote plant");
    }

    fn applied_command(&self) -> Command {
        self.applied
    }

    fn step_index(&self) -> u64 {
        self.steps
    }
}

/// Runs `plant` behind a socket until `stop` is set: commands in, poses out,
/// paced at `dt` of wall time.
pub fn serve_plant(
    socket: UdpSocket,
    peer: SocketAddr,
    mut plant: Box<dyn Plant + Send>,
    dt: f64,
    stop: Arc<AtomicBool>,
) -> thread::JoinHandle<std::io::Result<u64>> {
    thread::spawn(move || {
        socket.set_read_timeout(Some(Duration::from_secs_f64(dt)))?;
        let mailbox = CommandMailbox::default();
        let mut filter = SequenceFilter::default();
        let mut seq = 0u32;
        let mut buf = [0u8; 64];
        let started = Instant::now();
        let mut steps = 0u64;
        while !stop.load(Ordering::Relaxed) {
            socket.set_nonblocking(true)?;
            loop {
                match socket.recv_from(&mut buf) {
                    Ok((n, _)) => {
                        if let Ok((s, cmd)) = decode_command(&buf[..n]) {
                            if filter.accept(s) {
                                mailbox.post(cmd);
                            }
                        }
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(e) => return Err(e),
                }
            }
            plant.advance(dt, &mailbox);
            steps += 1;
            seq = seq.wrapping_add(1);
            let t = dt * steps as f64;
            socket.send_to(&encode_pose(&plant.pose(), t, seq), peer)?;
            let due = started + Duration::from_secs_f64(t);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        Ok(steps)
    })
}

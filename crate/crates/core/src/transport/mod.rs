//! Metered message channels between clients and the three servers.

mod frame;
mod meter;
mod socket;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

pub use frame::{pad_to_block, Frame, MsgKind, BLOCK, HEADER_BYTES};
pub use meter::{Counter, Meter, MeterRow, Phase, TranscriptEntry};
pub use socket::SocketTransport;

use crate::error::{Abort, Error};
use crate::field::{decode_elems, encode_elems, FieldElem};
use crate::rows::Rows;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// All clients, collapsed into one endpoint for accounting.
    Client,
    S1,
    S2,
    S3,
}

impl Role {
    pub const SERVERS: [Role; 3] = [Role::S1, Role::S2, Role::S3];

    pub fn name(self) -> &'static str {
        match self {
            Role::Client => "C",
            Role::S1 => "S1",
            Role::S2 => "S2",
            Role::S3 => "S3",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s.to_ascii_uppercase().as_str() {
            "C" | "CLIENT" => Some(Role::Client),
            "S1" => Some(Role::S1),
            "S2" => Some(Role::S2),
            "S3" => Some(Role::S3),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A directed link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel {
    pub from: Role,
    pub to: Role,
}

impl Channel {
    pub fn new(from: Role, to: Role) -> Self {
        Channel { from, to }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Reliable, per-channel ordered delivery of encoded frames.
pub trait Transport: Send {
    fn send_frame(&mut self, channel: Channel, frame: Vec<u8>) -> Result<(), Error>;
    fn recv_frame(&mut self, channel: Channel) -> Result<Vec<u8>, Error>;
}

/// Queues held in memory.
#[derive(Default)]
pub struct InProcess {
    queues: HashMap<Channel, VecDeque<Vec<u8>>>,
}

impl Transport for InProcess {
    fn send_frame(&mut self, channel: Channel, frame: Vec<u8>) -> Result<(), Error> {
        self.queues.entry(channel).or_default().push_back(frame);
        Ok(())
    }

    fn recv_frame(&mut self, channel: Channel) -> Result<Vec<u8>, Error> {
        self.queues
            .get_mut(&channel)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| Error::Protocol {
                channel: channel.to_string(),
                detail: "receive with no message pending".into(),
            })
    }
}

/// Shared record of frame sizes observed by a [`Tap`].
pub type TapLog = Arc<Mutex<Vec<(Channel, usize)>>>;

/// Wraps a transport and records every frame passing through it.
pub struct Tap<T> {
    inner: T,
    log: TapLog,
}

impl<T: Transport> Tap<T> {
    pub fn new(inner: T) -> (Self, TapLog) {
        let log = TapLog::default();
        (Tap { inner, log: log.clone() }, log)
    }
}

impl<T: Transport> Transport for Tap<T> {
    fn send_frame(&mut self, channel: Channel, frame: Vec<u8>) -> Result<(), Error> {
        self.log.lock().unwrap().push((channel, frame.len()));
        self.inner.send_frame(channel, frame)
    }

    fn recv_frame(&mut self, channel: Channel) -> Result<Vec<u8>, Error> {
        self.inner.recv_frame(channel)
    }
}

/// Framing, round sequencing and metering on top of a [`Transport`].
pub struct Network {
    transport: Box<dyn Transport>,
    phase: Phase,
    meter: Meter,
    transcript: Vec<TranscriptEntry>,
    send_rounds: HashMap<Channel, u16>,
    recv_rounds: HashMap<Channel, u16>,
}

impl Default for Network {
    fn default() -> Self {
        Network::in_process()
    }
}

impl Network {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Network {
            transport,
            phase: Phase::Offline,
            meter: Meter::default(),
            transcript: Vec::new(),
            send_rounds: HashMap::new(),
            recv_rounds: HashMap::new(),
        }
    }

    pub fn in_process() -> Self {
        Network::new(Box::<InProcess>::default())
    }

    pub fn socket() -> Self {
        Network::new(Box::new(SocketTransport::new()))
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn meter(&self) -> &Meter {
        &self.meter
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Returns the meter and transcript so far and starts fresh ones. Round
    /// counters are kept, so the channel sequence continues.
    pub fn take_records(&mut self) -> (Meter, Vec<TranscriptEntry>) {
        (std::mem::take(&mut self.meter), std::mem::take(&mut self.transcript))
    }

    pub fn send(&mut self, from: Role, to: Role, kind: MsgKind, label: &'static str, payload: Vec<u8>) -> Result<(), Error> {
        let channel = Channel::new(from, to);
        let round = self.send_rounds.entry(channel).or_insert(0);
        let frame = Frame { kind, round: *round, payload };
        *round = round.wrapping_add(1);
        let bytes = frame.encode()?;
        self.meter.record(channel, self.phase, bytes.len());
        self.transcript.push(TranscriptEntry {
            channel,
            kind,
            round: frame.round,
            frame_bytes: bytes.len(),
            phase: self.phase,
            label,
        });
        self.transport.send_frame(channel, bytes)
    }

    /// Receives the next frame on `from -> to`, which must be of `kind` and
    /// carry the next expected round number.
    pub fn recv(&mut self, from: Role, to: Role, kind: MsgKind) -> Result<Vec<u8>, Error> {
        let channel = Channel::new(from, to);
        let bytes = self.transport.recv_frame(channel)?;
        let protocol = |detail: String| Error::Protocol { channel: channel.to_string(), detail };
        let frame = Frame::decode(&bytes).map_err(protocol)?;
        let expected = self.recv_rounds.entry(channel).or_insert(0);
        if frame.kind != kind {
            return Err(protocol(format!("expected {kind:?}, got {:?}", frame.kind)));
        }
        if frame.round != *expected {
            return Err(protocol(format!("expected round {}, got {}", *expected, frame.round)));
        }
        *expected = expected.wrapping_add(1);
        Ok(frame.payload)
    }

    pub fn send_elems(&mut self, from: Role, to: Role, kind: MsgKind, label: &'static str, elems: &[FieldElem]) -> Result<(), Error> {
        self.send(from, to, kind, label, encode_elems(elems))
    }

    pub fn recv_elems(&mut self, from: Role, to: Role, kind: MsgKind) -> Result<Vec<FieldElem>, Error> {
        let payload = self.recv(from, to, kind)?;
        decode_elems(&payload).map_err(|e| Error::Protocol {
            channel: Channel::new(from, to).to_string(),
            detail: e.to_string(),
        })
    }

    pub fn send_rows(&mut self, from: Role, to: Role, kind: MsgKind, label: &'static str, rows: &Rows) -> Result<(), Error> {
        self.send(from, to, kind, label, rows.to_bytes())
    }

    pub fn recv_rows(&mut self, from: Role, to: Role, kind: MsgKind, width: usize) -> Result<Rows, Error> {
        let payload = self.recv(from, to, kind)?;
        Rows::from_bytes(&payload, width).map_err(|e| Error::Protocol {
            channel: Channel::new(from, to).to_string(),
            detail: e.to_string(),
        })
    }

    /// Notifies the other servers that `from` aborted.
    pub fn send_abort(&mut self, from: Role, abort: Abort) -> Result<(), Error> {
        let mut payload = vec![0u8; BLOCK];
        payload[0] = abort.check.code();
        payload[1] = abort.reason.code();
        for to in Role::SERVERS {
            if to != from {
                self.send(from, to, MsgKind::Abort, abort.check.name(), payload.clone())?;
            }
        }
        Ok(())
    }
}

//! Wire framing: `len: u32 LE | kind: u8 | round: u16 LE | payload`.
//!
//! `len` counts payload bytes only, and payloads are whole 16-byte blocks.

use crate::error::Error;

pub const HEADER_BYTES: usize = 7;
pub const BLOCK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgKind {
    SeedShare = 0,
    Delta = 1,
    Z2 = 2,
    Z1 = 3,
    ReShare = 4,
    FHashCommit = 5,
    FReveal = 6,
    Abort = 7,
    ClientShare = 8,
    TripleDeal = 9,
    BeaverOpen = 10,
    BlockHashCommit = 11,
    BlockReveal = 12,
    ModelHashCommit = 13,
    ModelBroadcast = 14,
}

impl MsgKind {
    pub const ALL: [MsgKind; 15] = [
        MsgKind::SeedShare,
        MsgKind::Delta,
        MsgKind::Z2,
        MsgKind::Z1,
        MsgKind::ReShare,
        MsgKind::FHashCommit,
        MsgKind::FReveal,
        MsgKind::Abort,
        MsgKind::ClientShare,
        MsgKind::TripleDeal,
        MsgKind::BeaverOpen,
        MsgKind::BlockHashCommit,
        MsgKind::BlockReveal,
        MsgKind::ModelHashCommit,
        MsgKind::ModelBroadcast,
    ];

    pub fn from_u8(b: u8) -> Option<MsgKind> {
        MsgKind::ALL.get(b as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: MsgKind,
    pub round: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, Error> {
        if self.payload.len() % BLOCK != 0 {
            return Err(Error::Malformed(format!(
                "payload of {} bytes is not a multiple of {BLOCK}",
                self.payload.len()
            )));
        }
        let len = u32::try_from(self.payload.len())
            .map_err(|_| Error::Malformed("payload exceeds 4 GiB".into()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&len.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parses one complete frame; the problem is described without a channel.
    pub fn decode(bytes: &[u8]) -> Result<Frame, String> {
        if bytes.len() < HEADER_BYTES {
            return Err(format!("frame of {} bytes is shorter than the header", bytes.len()));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() != HEADER_BYTES + len {
            return Err(format!("length field says {len}, frame carries {}", bytes.len() - HEADER_BYTES));
        }
        if len % BLOCK != 0 {
            return Err(format!("payload of {len} bytes is not a multiple of {BLOCK}"));
        }
        let kind = MsgKind::from_u8(bytes[4]).ok_or_else(|| format!("unknown message type {}", bytes[4]))?;
        let round = u16::from_le_bytes([bytes[5], bytes[6]]);
        Ok(Frame { kind, round, payload: bytes[HEADER_BYTES..].to_vec() })
    }
}

/// Zero-pads `bytes` up to a whole number of blocks.
pub fn pad_to_block(mut bytes: Vec<u8>) -> Vec<u8> {
    let rem = bytes.len() % BLOCK;
    if rem != 0 {
        bytes.resize(bytes.len() + BLOCK - rem, 0);
    }
    bytes
}

use std::fmt;

use thiserror::Error;

/// Which integrity check fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckId {
    /// Pairwise check of `z2` between S1 and S3.
    Z2,
    /// Pairwise check of `z1` between S2 and S3.
    Z1,
    /// Batched MAC check over the shuffled output between S1 and S2.
    PostShuffle,
    /// Hash-committed reveal of the sampled share block.
    ShareReveal,
    /// Per-entry MAC check after reconstruction.
    EntryMac,
    /// Cross-server comparison of the updated model.
    ModelHash,
    /// Client-side comparison of the two model broadcasts.
    Broadcast,
}

impl CheckId {
    pub const ALL: [CheckId; 7] = [
        CheckId::Z2,
        CheckId::Z1,
        CheckId::PostShuffle,
        CheckId::ShareReveal,
        CheckId::EntryMac,
        CheckId::ModelHash,
        CheckId::Broadcast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckId::Z2 => "check_z2",
            CheckId::Z1 => "check_z1",
            CheckId::PostShuffle => "post_shuffle",
            CheckId::ShareReveal => "share_reveal",
            CheckId::EntryMac => "entry_mac",
            CheckId::ModelHash => "model_hash",
            CheckId::Broadcast => "broadcast",
        }
    }

    pub fn code(self) -> u8 {
        CheckId::ALL.iter().position(|c| *c == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<CheckId> {
        CheckId::ALL.get(code as usize).copied()
    }
}

/// Why a check failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbortReason {
    /// The reconstructed verification value was non-zero.
    MacMismatch,
    /// A revealed value did not match its earlier hash commitment.
    CommitMismatch,
    /// The two servers' digests disagree.
    DigestMismatch,
    /// A revealed value could not be decoded.
    Malformed,
}

impl AbortReason {
    pub fn name(self) -> &'static str {
        match self {
            AbortReason::MacMismatch => "mac_mismatch",
            AbortReason::CommitMismatch => "commit_mismatch",
            AbortReason::DigestMismatch => "digest_mismatch",
            AbortReason::Malformed => "malformed",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            AbortReason::MacMismatch => 0,
            AbortReason::CommitMismatch => 1,
            AbortReason::DigestMismatch => 2,
            AbortReason::Malformed => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Abort {
    pub check: CheckId,
    pub reason: AbortReason,
}

impl Abort {
    pub fn new(check: CheckId, reason: AbortReason) -> Self {
        Abort { check, reason }
    }
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.check.name(), self.reason.name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {0} is not a canonical field element")]
    NonCanonical(u128),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("protocol error on {channel}: {detail}")]
    Protocol { channel: String, detail: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("{bound}: precondition violated: {detail}")]
    Precondition { bound: &'static str, detail: String },
    #[error("abort: {0}")]
    Abort(Abort),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn abort(check: CheckId, reason: AbortReason) -> Self {
        Error::Abort(Abort::new(check, reason))
    }

    pub fn as_abort(&self) -> Option<Abort> {
        match self {
            Error::Abort(a) => Some(*a),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

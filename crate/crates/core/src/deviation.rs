//! Hook points where a corrupted server may depart from the protocol.
//!
//! Protocol code calls these at every point a server produces a value that
//! others rely on. [`Honest`] leaves everything untouched; attacks in
//! [`crate::adversary`] override the hooks for their corrupted role.

use crate::error::CheckId;
use crate::field::FieldElem;
use crate::rows::Rows;
use crate::shuffle::Correlation;
use crate::transport::Role;

pub trait Deviation {
    /// S3, before sending Δ to S2.
    fn tamper_delta(&mut self, _delta: &mut Rows) {}

    /// A dealer, on the explicit `c` shares it sends for `check`.
    fn tamper_triples(&mut self, _dealer: Role, _check: CheckId, _c_second: &mut [FieldElem]) {}

    /// S2, before sending `z2` to S1.
    fn tamper_z2(&mut self, _z2: &mut Rows) {}

    /// S1, before sending `z1` to S2.
    fn tamper_z1(&mut self, _z1: &mut Rows) {}

    /// The share a server discloses while re-sharing inside a pairwise check.
    fn tamper_reshare(&mut self, _from: Role, _check: CheckId, _share: &mut Rows) {}

    /// A data server's shuffled output share, before the post-shuffle check.
    fn tamper_output(&mut self, _role: Role, _share: &mut Rows) {}

    /// Whether `role` waits for the other party's `f` share before revealing.
    fn rushes(&self, _role: Role, _check: CheckId) -> bool {
        false
    }

    /// The `f` share `role` actually reveals. `other` is the peer's revealed
    /// share if `role` rushed.
    fn forge_f_share(&mut self, _role: Role, _check: CheckId, own: FieldElem, _other: Option<FieldElem>) -> FieldElem {
        own
    }

    /// The sampled share block, before it is hash-committed.
    fn tamper_block_before_commit(&mut self, _role: Role, _block: &mut Rows) {}

    /// The sampled share block, after the commitment but before reveal.
    fn tamper_block_after_commit(&mut self, _role: Role, _block: &mut Rows) {}

    /// A server's updated model, before it is hashed.
    fn tamper_model(&mut self, _role: Role, _theta: &mut [f64]) {}

    /// A server's model broadcast to clients, after the hash exchange.
    fn tamper_broadcast(&mut self, _role: Role, _theta: &mut [f64]) {}

    /// Test-only view of the true shuffle correlation, used to label or force
    /// attack outcomes. Only called when the crate is built for tests or with
    /// the `oracle` feature.
    fn observe_permutation(&mut self, _corr: &Correlation) {}
}

/// Follows the protocol exactly.
#[derive(Clone, Copy, Debug, Default)]
pub struct Honest;

impl Deviation for Honest {}

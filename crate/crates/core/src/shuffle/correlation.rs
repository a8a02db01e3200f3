//! Offline phase: seeds, permutations, masks and Δ.
//!
//! * `seed1` (S1 → S3) expands to `π1, a′2, b2`.
//! * `seed2` (S2 → S3) expands to `π2, a1`.
//! * `seed12` (S1 → S2) expands to `π12`.
//!
//! S3 then sends `Δ = π2(π1(a1) + a′2) − b2` to S2.

use std::collections::BTreeSet;

use crate::deviation::Deviation;
use crate::error::Error;
use crate::perm::{derive_permutation_stream, Permutation};
use crate::prg::{AesCtrPrg, Seed};
use crate::rows::Rows;
use crate::transport::{MsgKind, Network, Role};

/// A named piece of correlated randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Item {
    Pi1,
    Pi2,
    Pi12,
    A1,
    A2Prime,
    B2,
    Delta,
}

/// The set of correlation items a role may hold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyView {
    pub role: Role,
    pub knowledge: BTreeSet<Item>,
}

impl PartyView {
    pub fn of(role: Role) -> Self {
        use Item::*;
        let items: &[Item] = match role {
            Role::S1 => &[Pi1, Pi12, A2Prime, B2],
            Role::S2 => &[Pi2, Pi12, A1, Delta],
            Role::S3 => &[Pi1, Pi2, A1, A2Prime, B2, Delta],
            Role::Client => &[],
        };
        PartyView { role, knowledge: items.iter().copied().collect() }
    }

    pub fn holds_all_permutations(&self) -> bool {
        [Item::Pi1, Item::Pi2, Item::Pi12].iter().all(|i| self.knowledge.contains(i))
    }
}

/// Items a seed expands to.
pub fn seed_items(label: &str) -> &'static [Item] {
    match label {
        "seed1" => &[Item::Pi1, Item::A2Prime, Item::B2],
        "seed2" => &[Item::Pi2, Item::A1],
        "seed12" => &[Item::Pi12],
        _ => &[],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShuffleSeeds {
    pub seed1: Seed,
    pub seed2: Seed,
    pub seed12: Seed,
}

#[derive(Clone, Debug)]
pub struct S1View {
    pub pi1: Permutation,
    pub pi12: Permutation,
    pub a2prime: Rows,
    pub b2: Rows,
}

#[derive(Clone, Debug)]
pub struct S2View {
    pub pi2: Permutation,
    pub pi12: Permutation,
    pub a1: Rows,
    pub delta: Rows,
}

#[derive(Clone, Debug)]
pub struct S3View {
    pub pi1: Permutation,
    pub pi2: Permutation,
    pub a1: Rows,
    pub a2prime: Rows,
    pub b2: Rows,
    pub delta: Rows,
}

/// Each server's share of one shuffle correlation.
#[derive(Clone, Debug)]
pub struct Correlation {
    pub s1: S1View,
    pub s2: S2View,
    pub s3: S3View,
}

impl Correlation {
    pub fn len(&self) -> usize {
        self.s1.pi1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `π2 ∘ π1 ∘ π12` as one permutation: output row `i` is input row
    /// `composed[i]`.
    pub fn composed(&self) -> Permutation {
        self.s1.pi12.then(&self.s1.pi1).then(&self.s2.pi2)
    }
}

fn mask(seed: &Seed, stream: u64, n: usize, width: usize) -> Rows {
    Rows::from_prg(&mut AesCtrPrg::new(seed, stream), n, width)
}

pub fn expand_seed1(seed: &Seed, n: usize, width: usize) -> (Permutation, Rows, Rows) {
    (
        derive_permutation_stream(seed, 0, n),
        mask(seed, 1, n, width),
        mask(seed, 2, n, width),
    )
}

pub fn expand_seed2(seed: &Seed, n: usize, width: usize) -> (Permutation, Rows) {
    (derive_permutation_stream(seed, 0, n), mask(seed, 1, n, width))
}

pub fn expand_seed12(seed: &Seed, n: usize) -> Permutation {
    derive_permutation_stream(seed, 0, n)
}

/// `π2(π1(a1) + a′2) − b2`.
pub fn compute_delta(pi1: &Permutation, pi2: &Permutation, a1: &Rows, a2prime: &Rows, b2: &Rows) -> Rows {
    &(&a1.permute(pi1) + a2prime).permute(pi2) - b2
}

fn recv_seed(net: &mut Network, from: Role, to: Role) -> Result<Seed, Error> {
    let elems = net.recv_elems(from, to, MsgKind::SeedShare)?;
    match elems.as_slice() {
        [s] => Ok(Seed::from_elem(*s)),
        _ => Err(Error::Protocol {
            channel: format!("{from}->{to}"),
            detail: format!("seed message carries {} elements", elems.len()),
        }),
    }
}

/// Exchanges seeds, expands them at their holders and delivers Δ to S2.
pub fn offline_gen(
    net: &mut Network,
    seeds: &ShuffleSeeds,
    n: usize,
    width: usize,
    dev: &mut dyn Deviation,
) -> Result<Correlation, Error> {
    net.send_elems(Role::S1, Role::S3, MsgKind::SeedShare, "seed1", &[seeds.seed1.as_elem()])?;
    net.send_elems(Role::S2, Role::S3, MsgKind::SeedShare, "seed2", &[seeds.seed2.as_elem()])?;
    net.send_elems(Role::S1, Role::S2, MsgKind::SeedShare, "seed12", &[seeds.seed12.as_elem()])?;

    // S1: its own seeds only.
    let (pi1, a2prime, b2) = expand_seed1(&seeds.seed1, n, width);
    let s1 = S1View { pi1, pi12: expand_seed12(&seeds.seed12, n), a2prime, b2 };

    // S3: the two seeds it received.
    let seed1_at_s3 = recv_seed(net, Role::S1, Role::S3)?;
    let seed2_at_s3 = recv_seed(net, Role::S2, Role::S3)?;
    let (pi1, a2prime, b2) = expand_seed1(&seed1_at_s3, n, width);
    let (pi2, a1) = expand_seed2(&seed2_at_s3, n, width);
    let mut delta = compute_delta(&pi1, &pi2, &a1, &a2prime, &b2);
    dev.tamper_delta(&mut delta);
    net.send_rows(Role::S3, Role::S2, MsgKind::Delta, "delta", &delta)?;
    let s3 = S3View { pi1, pi2, a1, a2prime, b2, delta };

    // S2: its own seed, seed12 from S1, and Δ from S3.
    let (pi2, a1) = expand_seed2(&seeds.seed2, n, width);
    let seed12_at_s2 = recv_seed(net, Role::S1, Role::S2)?;
    let delta = net.recv_rows(Role::S3, Role::S2, MsgKind::Delta, width)?;
    if delta.len() != n {
        return Err(Error::Protocol {
            channel: "S3->S2".into(),
            detail: format!("Δ has {} rows, expected {n}", delta.len()),
        });
    }
    let s2 = S2View { pi2, pi12: expand_seed12(&seed12_at_s2, n), a1, delta };

    Ok(Correlation { s1, s2, s3 })
}

//! Three-server verifiable secret-shared shuffle.
//!
//! S1 and S2 hold additive shares of `N` rows; S3 only helps. The output is a
//! fresh sharing of the rows permuted by `π2 ∘ π1 ∘ π12`, where no single
//! server knows all three permutations. Integrity rests on three blind MAC
//! checks: one on `z2` (S1 with S3), one on `z1` (S2 with S3), and one on
//! the final output (S1 with S2).

mod audit;
mod correlation;
mod cost;

pub use audit::{audit_transcript, AuditReport};
pub use cost::{measure_shuffle, random_batch, ShuffleCost};
pub use correlation::{
    compute_delta, expand_seed1, expand_seed12, expand_seed2, offline_gen, seed_items, Correlation, Item,
    PartyView, S1View, S2View, S3View, ShuffleSeeds,
};

use crate::deviation::Deviation;
use crate::error::{CheckId, Error};
use crate::mac::{blind_mac_verify, distribute_triples, entry_width, triples_needed, CheckInput, VerifyOptions};
use crate::prg::Seed;
use crate::rng::ServerRngs;
use crate::rows::Rows;
use crate::sharing::TripleShares;
use crate::transport::{MsgKind, Network, Phase, Role};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DefenseMode {
    /// In-shuffle checks on `z2` and `z1` plus the post-shuffle check.
    #[default]
    Full,
    /// Only the post-shuffle check; vulnerable to selective failure.
    PostShuffleOnly,
}

impl DefenseMode {
    pub fn name(self) -> &'static str {
        match self {
            DefenseMode::Full => "full",
            DefenseMode::PostShuffleOnly => "post_shuffle_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Some(DefenseMode::Full),
            "post_shuffle_only" | "post_shuffle" => Some(DefenseMode::PostShuffleOnly),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ShuffleOptions {
    pub defense: DefenseMode,
    pub verify: VerifyOptions,
}

/// Triples held by the two participants of a check.
pub struct PairTriples {
    pub first: TripleShares,
    pub second: TripleShares,
}

/// Everything prepared before the data arrives.
pub struct ShufflePrep {
    pub corr: Correlation,
    pub l: usize,
    pub post: PairTriples,
    pub z2: Option<PairTriples>,
    pub z1: Option<PairTriples>,
}

impl ShufflePrep {
    pub fn len(&self) -> usize {
        self.corr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corr.is_empty()
    }
}

/// Output shares: S1 holds `b2`, S2 holds `π2(z1) + Δ`.
#[derive(Clone, Debug)]
pub struct ShuffleOutput {
    pub s1: Rows,
    pub s2: Rows,
}

impl ShuffleOutput {
    pub fn reconstruct(&self) -> Rows {
        &self.s1 + &self.s2
    }
}

fn pair(net: &mut Network, dealer: Role, first: Role, second: Role, check: CheckId, count: usize, rngs: &mut ServerRngs, dev: &mut dyn Deviation) -> Result<PairTriples, Error> {
    let (first_t, second_t) = distribute_triples(net, dealer, first, second, check, count, rngs.get(dealer), dev)?;
    Ok(PairTriples { first: first_t, second: second_t })
}

/// Offline phase for `n` rows with payload length `l`.
pub fn shuffle_offline(
    net: &mut Network,
    n: usize,
    l: usize,
    rngs: &mut ServerRngs,
    dev: &mut dyn Deviation,
    opts: ShuffleOptions,
) -> Result<ShufflePrep, Error> {
    let prev = net.phase();
    net.set_phase(Phase::Offline);
    let seeds = ShuffleSeeds {
        seed1: Seed::random(rngs.get(Role::S1)),
        seed2: Seed::random(rngs.get(Role::S2)),
        seed12: Seed::random(rngs.get(Role::S1)),
    };
    let corr = offline_gen(net, &seeds, n, entry_width(l), dev)?;
    let count = triples_needed(n, l);
    let post = pair(net, Role::S3, Role::S1, Role::S2, CheckId::PostShuffle, count, rngs, dev)?;
    let (z2, z1) = match opts.defense {
        DefenseMode::Full => (
            Some(pair(net, Role::S2, Role::S1, Role::S3, CheckId::Z2, count, rngs, dev)?),
            Some(pair(net, Role::S1, Role::S2, Role::S3, CheckId::Z1, count, rngs, dev)?),
        ),
        DefenseMode::PostShuffleOnly => (None, None),
    };
    net.set_phase(prev);
    Ok(ShufflePrep { corr, l, post, z2, z1 })
}

/// Pairwise check after `z2`: S1 re-shares `y = x̂ − a1`, S3 re-shares `a1`,
/// and both verify the resulting fresh sharing of `x̂`.
#[allow(clippy::too_many_arguments)]
pub fn check_z2(
    net: &mut Network,
    y_at_s1: &Rows,
    a1_at_s3: &Rows,
    triples: &mut PairTriples,
    l: usize,
    rngs: &mut ServerRngs,
    dev: &mut dyn Deviation,
    opts: VerifyOptions,
) -> Result<(), Error> {
    let width = y_at_s1.width();
    let (y1, mut y2) = y_at_s1.split(rngs.get(Role::S1));
    dev.tamper_reshare(Role::S1, CheckId::Z2, &mut y2);
    net.send_rows(Role::S1, Role::S3, MsgKind::ReShare, "y_share", &y2)?;
    let (mut alpha1, alpha2) = a1_at_s3.split(rngs.get(Role::S3));
    dev.tamper_reshare(Role::S3, CheckId::Z2, &mut alpha1);
    net.send_rows(Role::S3, Role::S1, MsgKind::ReShare, "a1_share", &alpha1)?;

    let alpha1 = net.recv_rows(Role::S3, Role::S1, MsgKind::ReShare, width)?;
    let y2 = net.recv_rows(Role::S1, Role::S3, MsgKind::ReShare, width)?;
    let share_s1 = &y1 + &alpha1;
    let share_s3 = &y2 + &alpha2;

    let (r1, r3) = rngs.pair(Role::S1, Role::S3);
    blind_mac_verify(
        net,
        CheckId::Z2,
        l,
        CheckInput { role: Role::S1, share: &share_s1, triples: &mut triples.first, rng: r1 },
        CheckInput { role: Role::S3, share: &share_s3, triples: &mut triples.second, rng: r3 },
        dev,
        opts,
    )
}

/// Pairwise check after `z1`: S2 re-shares `π2(z1)`, S3 re-shares
/// `π2(π1(a1) + a′2)`, and both verify the sharing of `π2(π1(x̂))`.
#[allow(clippy::too_many_arguments)]
pub fn check_z1(
    net: &mut Network,
    z1_at_s2: &Rows,
    s2: &S2View,
    s3: &S3View,
    triples: &mut PairTriples,
    l: usize,
    rngs: &mut ServerRngs,
    dev: &mut dyn Deviation,
    opts: VerifyOptions,
) -> Result<(), Error> {
    let width = z1_at_s2.width();
    let u = z1_at_s2.permute(&s2.pi2);
    let (u1, mut u2) = u.split(rngs.get(Role::S2));
    dev.tamper_reshare(Role::S2, CheckId::Z1, &mut u2);
    net.send_rows(Role::S2, Role::S3, MsgKind::ReShare, "u_share", &u2)?;
    let v = (&s3.a1.permute(&s3.pi1) + &s3.a2prime).permute(&s3.pi2);
    let (mut v1, v2) = v.split(rngs.get(Role::S3));
    dev.tamper_reshare(Role::S3, CheckId::Z1, &mut v1);
    net.send_rows(Role::S3, Role::S2, MsgKind::ReShare, "v_share", &v1)?;

    let v1 = net.recv_rows(Role::S3, Role::S2, MsgKind::ReShare, width)?;
    let u2 = net.recv_rows(Role::S2, Role::S3, MsgKind::ReShare, width)?;
    let share_s2 = &u1 + &v1;
    let share_s3 = &u2 + &v2;

    let (r2, r3) = rngs.pair(Role::S2, Role::S3);
    blind_mac_verify(
        net,
        CheckId::Z1,
        l,
        CheckInput { role: Role::S2, share: &share_s2, triples: &mut triples.first, rng: r2 },
        CheckInput { role: Role::S3, share: &share_s3, triples: &mut triples.second, rng: r3 },
        dev,
        opts,
    )
}

fn expect_rows(n: usize, rows: &Rows, role: Role) -> Result<(), Error> {
    if rows.len() == n {
        Ok(())
    } else {
        Err(Error::Protocol {
            channel: role.to_string(),
            detail: format!("{} rows received, expected {n}", rows.len()),
        })
    }
}

/// Online phase, interleaving the in-shuffle checks when they are enabled,
/// followed by the post-shuffle check.
pub fn shuffle_online(
    net: &mut Network,
    prep: &mut ShufflePrep,
    x1: &Rows,
    x2: &Rows,
    rngs: &mut ServerRngs,
    dev: &mut dyn Deviation,
    opts: ShuffleOptions,
) -> Result<ShuffleOutput, Error> {
    let n = prep.len();
    let width = entry_width(prep.l);
    if x1.len() != n || x2.len() != n || x1.width() != width || x2.width() != width {
        return Err(Error::Usage(format!(
            "shuffle prepared for {n} rows of width {width}, got {}x{} and {}x{}",
            x1.len(),
            x1.width(),
            x2.len(),
            x2.width()
        )));
    }
    let corr = &prep.corr;
    let prev = net.phase();
    net.set_phase(Phase::Online);

    // Both data servers apply the pre-shared π12 locally.
    let xh1 = x1.permute(&corr.s1.pi12);
    let xh2 = x2.permute(&corr.s2.pi12);

    // S2 -> S1: z2 = <x̂>2 − a1.
    let mut z2 = &xh2 - &corr.s2.a1;
    dev.tamper_z2(&mut z2);
    net.send_rows(Role::S2, Role::S1, MsgKind::Z2, "z2", &z2)?;
    let z2 = net.recv_rows(Role::S2, Role::S1, MsgKind::Z2, width)?;
    expect_rows(n, &z2, Role::S1)?;
    let y = &z2 + &xh1;

    if let Some(t) = prep.z2.as_mut() {
        check_z2(net, &y, &corr.s3.a1, t, prep.l, rngs, dev, opts.verify)?;
    }

    // S1 -> S2: z1 = π1(x̂ − a1) − a′2; S1 keeps b2 as its output share.
    let mut z1 = &y.permute(&corr.s1.pi1) - &corr.s1.a2prime;
    dev.tamper_z1(&mut z1);
    net.send_rows(Role::S1, Role::S2, MsgKind::Z1, "z1", &z1)?;
    let z1 = net.recv_rows(Role::S1, Role::S2, MsgKind::Z1, width)?;
    expect_rows(n, &z1, Role::S2)?;
    let mut out1 = corr.s1.b2.clone();

    if let Some(t) = prep.z1.as_mut() {
        check_z1(net, &z1, &corr.s2, &corr.s3, t, prep.l, rngs, dev, opts.verify)?;
    }

    let mut out2 = &z1.permute(&corr.s2.pi2) + &corr.s2.delta;

    dev.tamper_output(Role::S1, &mut out1);
    dev.tamper_output(Role::S2, &mut out2);
    let (r1, r2) = rngs.pair(Role::S1, Role::S2);
    blind_mac_verify(
        net,
        CheckId::PostShuffle,
        prep.l,
        CheckInput { role: Role::S1, share: &out1, triples: &mut prep.post.first, rng: r1 },
        CheckInput { role: Role::S2, share: &out2, triples: &mut prep.post.second, rng: r2 },
        dev,
        opts.verify,
    )?;
    net.set_phase(prev);
    Ok(ShuffleOutput { s1: out1, s2: out2 })
}

/// Offline and online phases back to back over shares `x1` (S1) and `x2` (S2).
pub fn veri_shuffle(
    net: &mut Network,
    x1: &Rows,
    x2: &Rows,
    l: usize,
    rngs: &mut ServerRngs,
    dev: &mut dyn Deviation,
    opts: ShuffleOptions,
) -> Result<(ShuffleOutput, Correlation), Error> {
    let mut prep = shuffle_offline(net, x1.len(), l, rngs, dev, opts)?;
    #[cfg(any(test, feature = "oracle"))]
    dev.observe_permutation(&prep.corr);
    let out = shuffle_online(net, &mut prep, x1, x2, rngs, dev, opts)?;
    Ok((out, prep.corr))
}

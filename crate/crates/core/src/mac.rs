//! Carter-Wegman MACs over `Z_p` and their blind batched verification.
//!
//! A client authenticates a payload `r` of `l` elements with
//! `t = Σ k[j]·r[j]`, where the key `k = G(m1) + G(m2)` comes from two seeds,
//! one per data server. Entries travel through the shuffle as rows
//! `[t, r[0..l], k[0..l]]` of width `2l + 1`.
//!
//! Two servers holding shares of a batch check it without opening it: they
//! compute shares of `D = Σ t − Σ k·r` with Beaver triples, multiply by a
//! jointly random `w`, commit to their shares of `f = w·D`, then reveal and
//! accept iff `f = 0`.

use rand::Rng;

use crate::deviation::Deviation;
use crate::error::{Abort, AbortReason, CheckId, Error};
use crate::field::{decode_elems, encode_elems, inner_product, FieldElem, ELEM_BYTES};
use crate::hash::{hash_parts, Digest};
use crate::ldp::CompressedGrad;
use crate::prg::{AesCtrPrg, Prg, Seed};
use crate::rows::Rows;
use crate::sharing::{beaver_local, deal_triples, expand_first, expand_second, Party, TripleShares, TripleSlice};
use crate::transport::{MsgKind, Network, Role};

/// Payload length of a compressed gradient: the sign and the seed.
pub const COMPRESSED_PAYLOAD_LEN: usize = 2;

const F_SHARE_TAG: &[u8] = b"camel/f-share";

pub fn entry_width(l: usize) -> usize {
    2 * l + 1
}

/// Expands a key seed into `l` field elements.
pub fn key_expand(m: &Seed, l: usize) -> Vec<FieldElem> {
    let mut k = vec![FieldElem::ZERO; l];
    AesCtrPrg::new(m, 0).fill_field(&mut k);
    k
}

pub fn mac_tag(payload: &[FieldElem], key: &[FieldElem]) -> Result<FieldElem, Error> {
    if payload.len() != key.len() {
        return Err(Error::Usage(format!(
            "payload has {} elements but key has {}",
            payload.len(),
            key.len()
        )));
    }
    Ok(inner_product(payload, key))
}

/// A plaintext entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacEntry {
    pub tag: FieldElem,
    pub payload: Vec<FieldElem>,
    pub key: Vec<FieldElem>,
}

impl MacEntry {
    pub fn from_row(row: &[FieldElem]) -> Self {
        assert!(row.len() % 2 == 1, "entry rows have odd width");
        let l = row.len() / 2;
        MacEntry {
            tag: row[0],
            payload: row[1..1 + l].to_vec(),
            key: row[1 + l..].to_vec(),
        }
    }

    pub fn to_row(&self) -> Vec<FieldElem> {
        let mut row = Vec::with_capacity(entry_width(self.payload.len()));
        row.push(self.tag);
        row.extend_from_slice(&self.payload);
        row.extend_from_slice(&self.key);
        row
    }

    pub fn is_valid(&self) -> bool {
        mac_tag(&self.payload, &self.key).map(|t| t == self.tag).unwrap_or(false)
    }
}

/// What one data server receives for one client entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyUpload {
    pub tag: FieldElem,
    pub payload: Vec<FieldElem>,
    pub key_seed: Seed,
}

impl PartyUpload {
    pub fn wire_bytes(l: usize) -> usize {
        ELEM_BYTES * (l + 2)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::wire_bytes(self.payload.len()));
        out.extend_from_slice(&self.tag.to_le_bytes());
        out.extend(encode_elems(&self.payload));
        out.extend_from_slice(&self.key_seed.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], l: usize) -> Result<Self, Error> {
        if bytes.len() != Self::wire_bytes(l) {
            return Err(Error::Malformed(format!(
                "upload of {} bytes, expected {}",
                bytes.len(),
                Self::wire_bytes(l)
            )));
        }
        let elems = decode_elems(bytes)?;
        Ok(PartyUpload {
            tag: elems[0],
            payload: elems[1..1 + l].to_vec(),
            key_seed: Seed::from_elem(elems[1 + l]),
        })
    }

    /// The server's share row `[⟨t⟩, ⟨r⟩, G(m)]`.
    pub fn expand_row(&self) -> Vec<FieldElem> {
        let l = self.payload.len();
        let mut row = Vec::with_capacity(entry_width(l));
        row.push(self.tag);
        row.extend_from_slice(&self.payload);
        row.extend(key_expand(&self.key_seed, l));
        row
    }
}

/// A client's output for one entry: one upload per data server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedMacEntry {
    pub s1: PartyUpload,
    pub s2: PartyUpload,
}

impl SharedMacEntry {
    pub fn reconstruct(&self) -> MacEntry {
        let l = self.s1.payload.len();
        let k1 = key_expand(&self.s1.key_seed, l);
        let k2 = key_expand(&self.s2.key_seed, l);
        MacEntry {
            tag: self.s1.tag + self.s2.tag,
            payload: self.s1.payload.iter().zip(&self.s2.payload).map(|(a, b)| *a + *b).collect(),
            key: k1.iter().zip(&k2).map(|(a, b)| *a + *b).collect(),
        }
    }
}

/// MACs `payload` under fresh key seeds and splits it between S1 and S2.
pub fn client_package<R: Rng + ?Sized>(payload: &[FieldElem], rng: &mut R) -> SharedMacEntry {
    let l = payload.len();
    let m1 = Seed::random(rng);
    let m2 = Seed::random(rng);
    let key: Vec<FieldElem> = key_expand(&m1, l)
        .iter()
        .zip(key_expand(&m2, l))
        .map(|(a, b)| *a + b)
        .collect();
    let tag = inner_product(payload, &key);
    let tag1 = FieldElem::random(rng);
    let pay1: Vec<FieldElem> = (0..l).map(|_| FieldElem::random(rng)).collect();
    let pay2 = payload.iter().zip(&pay1).map(|(x, r)| *x - *r).collect();
    SharedMacEntry {
        s1: PartyUpload { tag: tag1, payload: pay1, key_seed: m1 },
        s2: PartyUpload { tag: tag - tag1, payload: pay2, key_seed: m2 },
    }
}

/// Payload `[±1, seed]`. Both elements are nonzero (the seed with
/// overwhelming probability), so every key element is bound by the tag.
pub fn encode_compressed(r: &CompressedGrad) -> Vec<FieldElem> {
    vec![FieldElem::from_i64(i64::from(r.sign)), r.seed.as_elem()]
}

pub fn decode_compressed(payload: &[FieldElem]) -> Result<CompressedGrad, Error> {
    if payload.len() != COMPRESSED_PAYLOAD_LEN {
        return Err(Error::Malformed(format!("compressed payload has {} elements", payload.len())));
    }
    let sign = match payload[0].to_i64() {
        Some(-1) => -1,
        Some(1) => 1,
        _ => return Err(Error::Malformed(format!("sign element {}", payload[0].value()))),
    };
    Ok(CompressedGrad { sign, seed: Seed::from_elem(payload[1]) })
}

pub fn package_compressed<R: Rng + ?Sized>(r: &CompressedGrad, rng: &mut R) -> SharedMacEntry {
    client_package(&encode_compressed(r), rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Exchange hashes of the `f` shares before revealing them. Disabling
    /// this exists only to demonstrate the forgery it prevents.
    pub commit: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { commit: true }
    }
}

/// Triples for one check over `n` entries with payload length `l`.
pub fn triples_needed(n: usize, l: usize) -> usize {
    n * l + 1
}

/// `dealer` hands a batch of triples to `first` and `second`.
#[allow(clippy::too_many_arguments)]
pub fn distribute_triples<R: Rng + ?Sized>(
    net: &mut Network,
    dealer: Role,
    first: Role,
    second: Role,
    check: CheckId,
    count: usize,
    rng: &mut R,
    dev: &mut dyn Deviation,
) -> Result<(TripleShares, TripleShares), Error> {
    let mut deal = deal_triples(rng, count);
    dev.tamper_triples(dealer, check, &mut deal.c_second);
    net.send(dealer, first, MsgKind::TripleDeal, "triples", deal.seed_first.to_bytes().to_vec())?;
    let mut second_payload = deal.seed_second.to_bytes().to_vec();
    second_payload.extend(encode_elems(&deal.c_second));
    net.send(dealer, second, MsgKind::TripleDeal, "triples", second_payload)?;

    let got = net.recv_elems(dealer, first, MsgKind::TripleDeal)?;
    let seed = single_seed(&got, dealer, first)?;
    let t1 = expand_first(&seed, count);

    let mut got = net.recv_elems(dealer, second, MsgKind::TripleDeal)?;
    if got.len() != count + 1 {
        return Err(Error::Protocol {
            channel: format!("{dealer}->{second}"),
            detail: format!("expected {} triple elements, got {}", count + 1, got.len()),
        });
    }
    let c = got.split_off(1);
    let t2 = expand_second(&Seed::from_elem(got[0]), c);
    Ok((t1, t2))
}

fn single_seed(elems: &[FieldElem], from: Role, to: Role) -> Result<Seed, Error> {
    match elems {
        [s] => Ok(Seed::from_elem(*s)),
        _ => Err(Error::Protocol {
            channel: format!("{from}->{to}"),
            detail: format!("expected one seed, got {} elements", elems.len()),
        }),
    }
}

/// One participant's private inputs to a blind check.
pub struct CheckInput<'a, R: Rng + ?Sized> {
    pub role: Role,
    pub share: &'a Rows,
    pub triples: &'a mut TripleShares,
    pub rng: &'a mut R,
}

/// Masked openings `[e..., f...]` for the products `k[j]·r[j]`.
fn open_products(share: &Rows, l: usize, t: &TripleSlice<'_>) -> Vec<FieldElem> {
    let n = share.len() * l;
    let mut out = vec![FieldElem::ZERO; 2 * n];
    let (es, fs) = out.split_at_mut(n);
    for (j, row) in share.iter().enumerate() {
        for i in 0..l {
            let idx = j * l + i;
            es[idx] = row[1 + i] - t.a[idx];
            fs[idx] = row[1 + l + i] - t.b[idx];
        }
    }
    out
}

/// Share of `D = Σ t − Σ k·r` after both openings are known.
fn difference_share(party: Party, share: &Rows, l: usize, t: &TripleSlice<'_>, own: &[FieldElem], other: &[FieldElem]) -> FieldElem {
    let n = share.len() * l;
    let mut d = FieldElem::ZERO;
    for (j, row) in share.iter().enumerate() {
        d += row[0];
        for i in 0..l {
            let idx = j * l + i;
            let e = own[idx] + other[idx];
            let f = own[n + idx] + other[n + idx];
            d -= beaver_local(party, e, f, t.a[idx], t.b[idx], t.c[idx]);
        }
    }
    d
}

fn commitment(check: CheckId, share: FieldElem) -> Digest {
    hash_parts(F_SHARE_TAG, &[&(check.code() as u64).to_le_bytes(), &share.to_le_bytes()])
}

fn mismatched_shape(role: Role, detail: String) -> Error {
    Error::Protocol { channel: role.to_string(), detail }
}

/// Blindly checks that every row of the shared batch carries a valid MAC.
///
/// `a` acts as party one and `b` as party two. Only masked Beaver openings,
/// the commitments and the two `f` shares cross the network.
#[allow(clippy::too_many_arguments)]
pub fn blind_mac_verify<R: Rng + ?Sized>(
    net: &mut Network,
    check: CheckId,
    l: usize,
    a: CheckInput<'_, R>,
    b: CheckInput<'_, R>,
    dev: &mut dyn Deviation,
    opts: VerifyOptions,
) -> Result<(), Error> {
    for p in [&a, &b] {
        if p.share.width() != entry_width(l) {
            return Err(mismatched_shape(p.role, format!("row width {} for payload length {l}", p.share.width())));
        }
    }
    if a.share.len() != b.share.len() {
        return Err(mismatched_shape(b.role, "share batches differ in length".into()));
    }
    let n = a.share.len() * l;
    let (ra, rb) = (a.role, b.role);

    // Round 1: open e = r - a and f = k - b for every product.
    let ta = a.triples.take(n)?;
    let tb = b.triples.take(n)?;
    let open_a = open_products(a.share, l, &ta);
    let open_b = open_products(b.share, l, &tb);
    net.send_elems(ra, rb, MsgKind::BeaverOpen, "products", &open_a)?;
    net.send_elems(rb, ra, MsgKind::BeaverOpen, "products", &open_b)?;
    let recv_b = net.recv_elems(ra, rb, MsgKind::BeaverOpen)?;
    let recv_a = net.recv_elems(rb, ra, MsgKind::BeaverOpen)?;
    if recv_a.len() != 2 * n || recv_b.len() != 2 * n {
        return Err(mismatched_shape(ra, "product openings have the wrong length".into()));
    }
    let d_a = difference_share(Party::One, a.share, l, &ta, &open_a, &recv_a);
    let d_b = difference_share(Party::Two, b.share, l, &tb, &open_b, &recv_b);

    // Round 2: f = w·D with w shared by local sampling.
    let w_a = FieldElem::random(a.rng);
    let w_b = FieldElem::random(b.rng);
    let ua = a.triples.take(1)?;
    let ub = b.triples.take(1)?;
    let open2_a = [w_a - ua.a[0], d_a - ua.b[0]];
    let open2_b = [w_b - ub.a[0], d_b - ub.b[0]];
    net.send_elems(ra, rb, MsgKind::BeaverOpen, "w_times_d", &open2_a)?;
    net.send_elems(rb, ra, MsgKind::BeaverOpen, "w_times_d", &open2_b)?;
    let got_b = net.recv_elems(ra, rb, MsgKind::BeaverOpen)?;
    let got_a = net.recv_elems(rb, ra, MsgKind::BeaverOpen)?;
    if got_a.len() != 2 || got_b.len() != 2 {
        return Err(mismatched_shape(ra, "w*D openings have the wrong length".into()));
    }
    let f_a = beaver_local(Party::One, open2_a[0] + got_a[0], open2_a[1] + got_a[1], ua.a[0], ua.b[0], ua.c[0]);
    let f_b = beaver_local(Party::Two, open2_b[0] + got_b[0], open2_b[1] + got_b[1], ub.a[0], ub.b[0], ub.c[0]);

    // Round 3: commit to the f shares.
    let roles = [ra, rb];
    let own = [f_a, f_b];
    let mut commits: [Option<Digest>; 2] = [None, None];
    if opts.commit {
        for p in 0..2 {
            net.send(roles[p], roles[1 - p], MsgKind::FHashCommit, "f_commit", commitment(check, own[p]).to_vec())?;
        }
        for p in 0..2 {
            let bytes = net.recv(roles[p], roles[1 - p], MsgKind::FHashCommit)?;
            let digest: Digest = bytes
                .try_into()
                .map_err(|_| mismatched_shape(roles[p], "commitment is not 32 bytes".into()))?;
            commits[p] = Some(digest);
        }
    }

    // Round 4: reveal. A rushing party goes second and sees the other share.
    let order = if dev.rushes(ra, check) { [1, 0] } else { [0, 1] };
    let mut revealed = [FieldElem::ZERO; 2];
    for (step, &p) in order.iter().enumerate() {
        let seen = if step == 1 { Some(revealed[order[0]]) } else { None };
        revealed[p] = dev.forge_f_share(roles[p], check, own[p], seen);
        net.send_elems(roles[p], roles[1 - p], MsgKind::FReveal, "f_share", &[revealed[p]])?;
        let got = net.recv_elems(roles[p], roles[1 - p], MsgKind::FReveal)?;
        if got.len() != 1 {
            return Err(mismatched_shape(roles[p], "f share is not one element".into()));
        }
        revealed[p] = got[0];
    }

    // Each party checks the peer's reveal against its commitment, then f.
    for p in 0..2 {
        let peer = 1 - p;
        if let Some(c) = commits[peer] {
            if commitment(check, revealed[peer]) != c {
                let abort = Abort::new(check, AbortReason::CommitMismatch);
                net.send_abort(roles[p], abort)?;
                return Err(Error::Abort(abort));
            }
        }
    }
    if !(revealed[0] + revealed[1]).is_zero() {
        let abort = Abort::new(check, AbortReason::MacMismatch);
        net.send_abort(ra, abort)?;
        return Err(Error::Abort(abort));
    }
    Ok(())
}

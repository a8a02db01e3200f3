//! Two-party additive secret sharing and Beaver multiplication.

use rand::Rng;

use crate::error::Error;
use crate::field::FieldElem;
use crate::prg::{AesCtrPrg, Prg, Seed};

/// Index of a share holder in a two-party sharing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    One,
    Two,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::One => Party::Two,
            Party::Two => Party::One,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Share {
    pub party: Party,
    pub value: FieldElem,
}

/// Splits `x` so that the first share is uniform.
pub fn share<R: Rng + ?Sized>(x: FieldElem, rng: &mut R) -> (Share, Share) {
    let r = FieldElem::random(rng);
    (
        Share { party: Party::One, value: r },
        Share { party: Party::Two, value: x - r },
    )
}

pub fn reconstruct(s1: Share, s2: Share) -> Result<FieldElem, Error> {
    if s1.party != Party::One || s2.party != Party::Two {
        return Err(Error::Usage(format!(
            "reconstruct expects shares of parties (1, 2), got ({:?}, {:?})",
            s1.party, s2.party
        )));
    }
    Ok(s1.value + s2.value)
}

/// One shared multiplication triple `c = a * b`, usable once.
#[derive(Clone, Debug)]
pub struct BeaverTriple {
    pub a: (Share, Share),
    pub b: (Share, Share),
    pub c: (Share, Share),
    used: bool,
}

impl BeaverTriple {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let a = FieldElem::random(rng);
        let b = FieldElem::random(rng);
        BeaverTriple {
            a: share(a, rng),
            b: share(b, rng),
            c: share(a * b, rng),
            used: false,
        }
    }

    pub fn is_used(&self) -> bool {
        self.used
    }
}

/// Local share of `x*y` given the opened `e = x - a` and `f = y - b`.
/// Party two carries the public `e*f` term.
#[inline]
pub fn beaver_local(party: Party, e: FieldElem, f: FieldElem, a: FieldElem, b: FieldElem, c: FieldElem) -> FieldElem {
    let base = f * a + e * b + c;
    match party {
        Party::One => base,
        Party::Two => base + e * f,
    }
}

/// Multiplies two shared values, consuming `t`. Only `e` and `f` are opened.
pub fn beaver_mul(
    x: (Share, Share),
    y: (Share, Share),
    t: &mut BeaverTriple,
) -> Result<(Share, Share), Error> {
    if t.used {
        return Err(Error::Protocol {
            channel: "beaver".into(),
            detail: "triple already consumed".into(),
        });
    }
    t.used = true;
    let e = reconstruct(x.0, x.1)? - reconstruct(t.a.0, t.a.1)?;
    let f = reconstruct(y.0, y.1)? - reconstruct(t.b.0, t.b.1)?;
    let z1 = beaver_local(Party::One, e, f, t.a.0.value, t.b.0.value, t.c.0.value);
    let z2 = beaver_local(Party::Two, e, f, t.a.1.value, t.b.1.value, t.c.1.value);
    Ok((
        Share { party: Party::One, value: z1 },
        Share { party: Party::Two, value: z2 },
    ))
}

/// One party's shares of a batch of triples, consumed front to back.
#[derive(Clone, Debug)]
pub struct TripleShares {
    a: Vec<FieldElem>,
    b: Vec<FieldElem>,
    c: Vec<FieldElem>,
    next: usize,
}

/// A borrowed, not-yet-consumed run of triples.
pub struct TripleSlice<'a> {
    pub a: &'a [FieldElem],
    pub b: &'a [FieldElem],
    pub c: &'a [FieldElem],
}

impl TripleShares {
    pub fn new(a: Vec<FieldElem>, b: Vec<FieldElem>, c: Vec<FieldElem>) -> Self {
        assert!(a.len() == b.len() && b.len() == c.len());
        TripleShares { a, b, c, next: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.a.len() - self.next
    }

    pub fn take(&mut self, n: usize) -> Result<TripleSlice<'_>, Error> {
        if n > self.remaining() {
            return Err(Error::Protocol {
                channel: "beaver".into(),
                detail: format!("{n} triples requested, {} unused", self.remaining()),
            });
        }
        let r = self.next..self.next + n;
        self.next += n;
        Ok(TripleSlice { a: &self.a[r.clone()], b: &self.b[r.clone()], c: &self.c[r] })
    }

    pub fn c_mut(&mut self) -> &mut [FieldElem] {
        &mut self.c
    }
}

/// What a dealer sends: a seed to the first party, and a seed plus explicit
/// `c` shares to the second.
#[derive(Clone, Debug)]
pub struct DealtTriples {
    pub seed_first: Seed,
    pub seed_second: Seed,
    pub c_second: Vec<FieldElem>,
}

fn expand_vec(seed: &Seed, stream: u64, n: usize) -> Vec<FieldElem> {
    let mut v = vec![FieldElem::ZERO; n];
    AesCtrPrg::new(seed, stream).fill_field(&mut v);
    v
}

pub fn deal_triples<R: Rng + ?Sized>(rng: &mut R, count: usize) -> DealtTriples {
    let seed_first = Seed::random(rng);
    let seed_second = Seed::random(rng);
    let first = expand_first(&seed_first, count);
    let a2 = expand_vec(&seed_second, 0, count);
    let b2 = expand_vec(&seed_second, 1, count);
    let c_second = (0..count)
        .map(|i| (first.a[i] + a2[i]) * (first.b[i] + b2[i]) - first.c[i])
        .collect();
    DealtTriples { seed_first, seed_second, c_second }
}

pub fn expand_first(seed: &Seed, count: usize) -> TripleShares {
    TripleShares::new(
        expand_vec(seed, 0, count),
        expand_vec(seed, 1, count),
        expand_vec(seed, 2, count),
    )
}

pub fn expand_second(seed: &Seed, c: Vec<FieldElem>) -> TripleShares {
    let n = c.len();
    TripleShares::new(expand_vec(seed, 0, n), expand_vec(seed, 1, n), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fe(v: u64) -> FieldElem {
        FieldElem::from(v)
    }

    fn sh(x: FieldElem, rng: &mut ChaCha12Rng) -> (Share, Share) {
        share(x, rng)
    }

    #[test]
    fn zero_case() {
        let r = fe(987654321);
        let s2 = FieldElem::ZERO - r;
        assert_eq!(s2.value(), crate::field::MODULUS - 987654321);
        let s1 = Share { party: Party::One, value: r };
        assert_eq!(reconstruct(s1, Share { party: Party::Two, value: s2 }).unwrap(), FieldElem::ZERO);
    }

    #[test]
    fn small_values() {
        let one = |v| Share { party: Party::One, value: fe(v) };
        let two = |v| Share { party: Party::Two, value: fe(v) };
        assert_eq!(reconstruct(one(3), two(2)).unwrap(), fe(5));
        let wrap = Share { party: Party::One, value: -FieldElem::ONE };
        assert_eq!(reconstruct(wrap, two(1)).unwrap(), FieldElem::ZERO);
        assert!(reconstruct(two(3), one(2)).is_err());
        assert!(reconstruct(one(3), one(2)).is_err());
    }

    #[test]
    fn round_trip_many() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let x = FieldElem::random(&mut rng);
            let (a, b) = share(x, &mut rng);
            assert_eq!(reconstruct(a, b).unwrap(), x);
        }
    }

    #[test]
    fn beaver_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let k = fe(4242);
        let mut t = BeaverTriple::random(&mut rng);
        let (z1, z2) = beaver_mul(sh(FieldElem::ZERO, &mut rng), sh(k, &mut rng), &mut t).unwrap();
        assert_eq!(reconstruct(z1, z2).unwrap(), FieldElem::ZERO);
        let mut t = BeaverTriple::random(&mut rng);
        let (z1, z2) = beaver_mul(sh(FieldElem::ONE, &mut rng), sh(k, &mut rng), &mut t).unwrap();
        assert_eq!(reconstruct(z1, z2).unwrap(), k);
    }

    #[test]
    fn beaver_matches_plaintext() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let (x, y) = (FieldElem::random(&mut rng), FieldElem::random(&mut rng));
            let mut t = BeaverTriple::random(&mut rng);
            let (z1, z2) = beaver_mul(sh(x, &mut rng), sh(y, &mut rng), &mut t).unwrap();
            assert_eq!(reconstruct(z1, z2).unwrap(), x * y);
        }
    }

    #[test]
    fn triple_reuse_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let mut t = BeaverTriple::random(&mut rng);
        let x = sh(fe(2), &mut rng);
        let y = sh(fe(3), &mut rng);
        beaver_mul(x, y, &mut t).unwrap();
        assert!(t.is_used());
        assert!(matches!(beaver_mul(x, y, &mut t), Err(Error::Protocol { .. })));
    }

    #[test]
    fn dealt_triples_are_consistent() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let deal = deal_triples(&mut rng, 50);
        let mut p1 = expand_first(&deal.seed_first, 50);
        let mut p2 = expand_second(&deal.seed_second, deal.c_second.clone());
        let t1 = p1.take(50).unwrap();
        let t2 = p2.take(50).unwrap();
        for i in 0..50 {
            assert_eq!((t1.a[i] + t2.a[i]) * (t1.b[i] + t2.b[i]), t1.c[i] + t2.c[i]);
        }
        assert!(p1.take(1).is_err());
    }

    proptest! {
        #[test]
        fn share_reconstruct(x in 0..crate::field::MODULUS, s in any::<u64>()) {
            let mut rng = ChaCha12Rng::seed_from_u64(s);
            let (a, b) = share(FieldElem::new(x), &mut rng);
            prop_assert_eq!(reconstruct(a, b).unwrap(), FieldElem::new(x));
        }
    }
}

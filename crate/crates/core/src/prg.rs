//! Seeds and deterministic expansion with AES-128 in counter mode.
//!
//! The counter block is `stream_id (8 bytes BE) || counter (8 bytes BE)`, so
//! one seed can feed several independent streams. Bits are consumed
//! most-significant first within each byte.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::Rng;

use crate::error::Error;
use crate::field::{FieldElem, MODULUS};

/// A 128-bit seed whose integer value is below the field modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Seed(FieldElem);

impl Seed {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Seed(FieldElem::random(rng))
    }

    pub fn from_elem(e: FieldElem) -> Self {
        Seed(e)
    }

    pub fn from_u128(v: u128) -> Result<Self, Error> {
        FieldElem::from_canonical(v).map(Seed)
    }

    pub fn as_elem(self) -> FieldElem {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Result<Self, Error> {
        FieldElem::from_le_bytes(bytes).map(Seed)
    }
}

/// A source of pseudorandom bytes. Test code can substitute a recorded stream.
pub trait Prg {
    fn fill_bytes(&mut self, out: &mut [u8]);

    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill_bytes(&mut b);
        u64::from_be_bytes(b)
    }

    /// Uniform field element by rejection on 127-bit draws.
    fn next_field(&mut self) -> FieldElem {
        loop {
            let mut b = [0u8; 16];
            self.fill_bytes(&mut b);
            let v = u128::from_le_bytes(b) & MODULUS;
            if v < MODULUS {
                return FieldElem::new(v);
            }
        }
    }

    /// Uniform integer in `[0, bound)` by rejection sampling.
    fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    fn fill_field(&mut self, out: &mut [FieldElem]) {
        for e in out {
            *e = self.next_field();
        }
    }
}

const BATCH_BLOCKS: usize = 32;

/// AES-128-CTR keyed by a [`Seed`].
pub struct AesCtrPrg {
    cipher: Aes128,
    stream: u64,
    counter: u64,
    buf: [u8; 16 * BATCH_BLOCKS],
    pos: usize,
}

impl AesCtrPrg {
    pub fn new(seed: &Seed, stream: u64) -> Self {
        let key = GenericArray::from(seed.to_bytes());
        AesCtrPrg {
            cipher: Aes128::new(&key),
            stream,
            counter: 0,
            buf: [0u8; 16 * BATCH_BLOCKS],
            pos: 16 * BATCH_BLOCKS,
        }
    }

    fn refill(&mut self) {
        let mut blocks = [GenericArray::from([0u8; 16]); BATCH_BLOCKS];
        for b in blocks.iter_mut() {
            b[..8].copy_from_slice(&self.stream.to_be_bytes());
            b[8..].copy_from_slice(&self.counter.to_be_bytes());
            self.counter = self.counter.wrapping_add(1);
        }
        self.cipher.encrypt_blocks(&mut blocks);
        for (i, b) in blocks.iter().enumerate() {
            self.buf[i * 16..(i + 1) * 16].copy_from_slice(b);
        }
        self.pos = 0;
    }
}

impl Prg for AesCtrPrg {
    fn fill_bytes(&mut self, mut out: &mut [u8]) {
        while !out.is_empty() {
            if self.pos == self.buf.len() {
                self.refill();
            }
            let n = out.len().min(self.buf.len() - self.pos);
            out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
            self.pos += n;
            out = &mut out[n..];
        }
    }
}

/// Replays a fixed byte sequence, then fails loudly if exhausted.
pub struct RecordedPrg {
    bytes: Vec<u8>,
    pos: usize,
}

impl RecordedPrg {
    pub fn new(bytes: Vec<u8>) -> Self {
        RecordedPrg { bytes, pos: 0 }
    }
}

impl Prg for RecordedPrg {
    fn fill_bytes(&mut self, out: &mut [u8]) {
        let end = self.pos + out.len();
        assert!(end <= self.bytes.len(), "recorded stream exhausted");
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
    }
}

/// Reads fixed-width unsigned chunks from a byte stream, MSB first.
pub struct BitReader<'a, P: Prg + ?Sized> {
    prg: &'a mut P,
    acc: u128,
    avail: u32,
}

impl<'a, P: Prg + ?Sized> BitReader<'a, P> {
    pub fn new(prg: &'a mut P) -> Self {
        BitReader { prg, acc: 0, avail: 0 }
    }

    /// Next `width` bits as an integer, `1 <= width <= 64`.
    pub fn read(&mut self, width: u32) -> u64 {
        debug_assert!((1..=64).contains(&width));
        while self.avail < width {
            let mut b = [0u8; 8];
            self.prg.fill_bytes(&mut b);
            self.acc = (self.acc << 64) | u64::from_be_bytes(b) as u128;
            self.avail += 64;
        }
        let shift = self.avail - width;
        let v = (self.acc >> shift) as u64 & mask(width);
        self.avail -= width;
        self.acc &= (1u128 << self.avail) - 1;
        v
    }
}

fn mask(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A packed bit sequence, MSB first within each byte.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.bytes[i / 8] >> (7 - i % 8) & 1 == 1
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn hamming_distance(&self, other: &BitString) -> usize {
        assert_eq!(self.len, other.len);
        (0..self.len).filter(|&i| self.get(i) != other.get(i)).count()
    }
}

/// Expands `seed` to `n_bits` pseudorandom bits (stream 0).
pub fn prg_expand(seed: &Seed, n_bits: usize) -> BitString {
    let mut bytes = vec![0u8; n_bits.div_ceil(8)];
    AesCtrPrg::new(seed, 0).fill_bytes(&mut bytes);
    if n_bits % 8 != 0 {
        let last = bytes.len() - 1;
        bytes[last] &= 0xffu8 << (8 - n_bits % 8);
    }
    BitString { bytes, len: n_bits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn aes_known_answer() {
        // FIPS-197 appendix C.1 key with an all-zero counter block.
        let key = u128::from_le_bytes([
            0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0x0c, 0x0d,
            0x0e, 0x0f,
        ]);
        let seed = Seed::from_u128(key).unwrap();
        let mut out = [0u8; 16];
        AesCtrPrg::new(&seed, 0).fill_bytes(&mut out);
        let cipher = Aes128::new(&GenericArray::from(seed.to_bytes()));
        let mut block = GenericArray::from([0u8; 16]);
        cipher.encrypt_block(&mut block);
        assert_eq!(out.as_slice(), block.as_slice());
    }

    #[test]
    fn deterministic_and_prefix_consistent() {
        let seed = Seed::from_u128(42).unwrap();
        assert_eq!(prg_expand(&seed, 300), prg_expand(&seed, 300));
        let short = prg_expand(&seed, 64);
        let long = prg_expand(&seed, 128);
        for i in 0..64 {
            assert_eq!(short.get(i), long.get(i));
        }
        for (n, m) in [(1, 2), (7, 9), (100, 1000), (513, 4096)] {
            let a = prg_expand(&seed, n);
            let b = prg_expand(&seed, m);
            assert!((0..n).all(|i| a.get(i) == b.get(i)));
        }
    }

    #[test]
    fn distinct_seeds_distinct_streams() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (s, t) = (Seed::random(&mut rng), Seed::random(&mut rng));
            if s != t {
                assert_ne!(prg_expand(&s, 256), prg_expand(&t, 256));
            }
        }
    }

    #[test]
    fn streams_are_independent() {
        let seed = Seed::from_u128(7).unwrap();
        let mut a = AesCtrPrg::new(&seed, 0);
        let mut b = AesCtrPrg::new(&seed, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn chunked_reads_match_bulk_read() {
        let seed = Seed::from_u128(99).unwrap();
        let mut bulk = vec![0u8; 1000];
        AesCtrPrg::new(&seed, 3).fill_bytes(&mut bulk);
        let mut p = AesCtrPrg::new(&seed, 3);
        let mut pieces = Vec::new();
        for len in [1usize, 15, 16, 17, 500, 451] {
            let mut v = vec![0u8; len];
            p.fill_bytes(&mut v);
            pieces.extend(v);
        }
        assert_eq!(bulk, pieces);
    }

    #[test]
    fn bit_reader_matches_bitstring() {
        let seed = Seed::from_u128(5).unwrap();
        let bits = prg_expand(&seed, 640);
        let mut prg = AesCtrPrg::new(&seed, 0);
        let mut r = BitReader::new(&mut prg);
        let mut pos = 0;
        for w in [3u32, 13, 32, 64, 1, 52, 8] {
            let v = r.read(w);
            let want = (0..w as usize).fold(0u64, |acc, i| (acc << 1) | bits.get(pos + i) as u64);
            assert_eq!(v, want, "width {w}");
            pos += w as usize;
        }
    }

    #[test]
    fn recorded_stream_substitutes() {
        let mut p = RecordedPrg::new(vec![0, 0, 0, 0, 0, 0, 0, 9, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0, 0, 0, 0, 0, 0, 0, 4]);
        assert_eq!(p.next_below(10), 9);
        // u64::MAX falls in the rejection zone for bound 10
        assert_eq!(p.next_below(10), 4);
    }

    #[test]
    fn seed_bytes_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let s = Seed::random(&mut rng);
        assert_eq!(Seed::from_bytes(s.to_bytes()).unwrap(), s);
        assert!(Seed::from_u128(MODULUS).is_err());
    }
}

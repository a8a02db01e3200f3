//! Arithmetic over the prime field of order `p = 2^127 - 1`.
//!
//! Every server-side computation runs on [`FieldElem`] values. Elements cross
//! channels as 16 little-endian bytes.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;

use crate::error::Error;

/// The field modulus, the Mersenne prime `2^127 - 1`.
pub const MODULUS: u128 = (1u128 << 127) - 1;

/// Serialized width of one element.
pub const ELEM_BYTES: usize = 16;

/// An element of `Z_p`, always kept in canonical form `value < p`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldElem(u128);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    /// Reduces an arbitrary `u128` into the field.
    pub fn new(value: u128) -> Self {
        FieldElem(reduce_u128(value))
    }

    /// Builds an element from a value already known to be canonical.
    pub fn from_canonical(value: u128) -> Result<Self, Error> {
        if value < MODULUS {
            Ok(FieldElem(value))
        } else {
            Err(Error::NonCanonical(value))
        }
    }

    pub fn value(self) -> u128 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Uniform sample by rejection on 127-bit draws.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = rng.random::<u128>() >> 1;
            if v < MODULUS {
                return FieldElem(v);
            }
        }
    }

    /// Embeds a signed integer, mapping negatives to `p - |v|`.
    pub fn from_i64(v: i64) -> Self {
        if v >= 0 {
            FieldElem(v as u128)
        } else {
            -FieldElem(v.unsigned_abs() as u128)
        }
    }

    /// Inverse of [`FieldElem::from_i64`] for elements within `i64` range of zero.
    pub fn to_i64(self) -> Option<i64> {
        if self.0 <= i64::MAX as u128 {
            Some(self.0 as i64)
        } else {
            let neg = MODULUS - self.0;
            if neg <= i64::MAX as u128 + 1 {
                Some((neg as i128).wrapping_neg() as i64)
            } else {
                None
            }
        }
    }

    pub fn to_le_bytes(self) -> [u8; ELEM_BYTES] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; ELEM_BYTES]) -> Result<Self, Error> {
        Self::from_canonical(u128::from_le_bytes(bytes))
    }

    pub fn pow(self, mut exp: u128) -> Self {
        let mut base = self;
        let mut acc = FieldElem::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }
}

impl fmt::Debug for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for FieldElem {
    fn from(v: u64) -> Self {
        FieldElem(v as u128)
    }
}

#[inline]
fn reduce_u128(x: u128) -> u128 {
    // 2^127 == 1 (mod p)
    let folded = (x & MODULUS) + (x >> 127);
    if folded >= MODULUS {
        folded - MODULUS
    } else {
        folded
    }
}

/// Full 128x128 -> 256-bit product as (hi, lo).
#[inline]
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    let (a0, a1) = (a as u64 as u128, a >> 64);
    let (b0, b1) = (b as u64 as u128, b >> 64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 as u64 as u128) + (p10 as u64 as u128);
    let lo = (p00 as u64 as u128) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

impl Add for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn add(self, rhs: FieldElem) -> FieldElem {
        // both < 2^127, so the sum fits
        let s = self.0 + rhs.0;
        FieldElem(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn sub(self, rhs: FieldElem) -> FieldElem {
        if self.0 >= rhs.0 {
            FieldElem(self.0 - rhs.0)
        } else {
            FieldElem(self.0 + MODULUS - rhs.0)
        }
    }
}

impl Neg for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn neg(self) -> FieldElem {
        if self.0 == 0 {
            self
        } else {
            FieldElem(MODULUS - self.0)
        }
    }
}

impl Mul for FieldElem {
    type Output = FieldElem;
    #[inline]
    fn mul(self, rhs: FieldElem) -> FieldElem {
        let (hi, lo) = mul_wide(self.0, rhs.0);
        // 2^128 == 2 (mod p); hi < 2^126 so 2*hi < 2^127
        let lo = (lo & MODULUS) + (lo >> 127);
        FieldElem(reduce_u128(lo + (hi << 1)))
    }
}

impl AddAssign for FieldElem {
    fn add_assign(&mut self, rhs: FieldElem) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElem {
    fn sub_assign(&mut self, rhs: FieldElem) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElem {
    fn mul_assign(&mut self, rhs: FieldElem) {
        *self = *self * rhs;
    }
}

impl Sum for FieldElem {
    fn sum<I: Iterator<Item = FieldElem>>(iter: I) -> Self {
        iter.fold(FieldElem::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a FieldElem> for FieldElem {
    fn sum<I: Iterator<Item = &'a FieldElem>>(iter: I) -> Self {
        iter.fold(FieldElem::ZERO, |a, b| a + *b)
    }
}

/// Inner product of two equal-length slices.
pub fn inner_product(a: &[FieldElem], b: &[FieldElem]) -> FieldElem {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Concatenates the 16-byte encodings of `elems`.
pub fn encode_elems(elems: &[FieldElem]) -> Vec<u8> {
    let mut out = Vec::with_capacity(elems.len() * ELEM_BYTES);
    for e in elems {
        out.extend_from_slice(&e.to_le_bytes());
    }
    out
}

/// Parses a byte string made of 16-byte canonical elements.
pub fn decode_elems(bytes: &[u8]) -> Result<Vec<FieldElem>, Error> {
    if bytes.len() % ELEM_BYTES != 0 {
        return Err(Error::Malformed(format!(
            "{} bytes is not a whole number of field elements",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(ELEM_BYTES)
        .map(|c| FieldElem::from_le_bytes(c.try_into().expect("chunk width")))
        .collect()
}

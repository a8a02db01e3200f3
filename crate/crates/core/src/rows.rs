//! Fixed-width rows of field elements, the shape of every shuffled vector.

use std::ops::{Add, Sub};

use rand::Rng;

use crate::error::Error;
use crate::field::{decode_elems, encode_elems, FieldElem, ELEM_BYTES};
use crate::perm::Permutation;
use crate::prg::Prg;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rows {
    width: usize,
    data: Vec<FieldElem>,
}

impl Rows {
    pub fn zeros(n: usize, width: usize) -> Self {
        Rows { width, data: vec![FieldElem::ZERO; n * width] }
    }

    pub fn from_flat(width: usize, data: Vec<FieldElem>) -> Self {
        assert!(width > 0 && data.len() % width == 0, "flat length must be a multiple of width");
        Rows { width, data }
    }

    pub fn from_rows(width: usize, rows: &[Vec<FieldElem>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            assert_eq!(r.len(), width);
            data.extend_from_slice(r);
        }
        Rows { width, data }
    }

    pub fn from_prg<P: Prg + ?Sized>(prg: &mut P, n: usize, width: usize) -> Self {
        let mut data = vec![FieldElem::ZERO; n * width];
        prg.fill_field(&mut data);
        Rows { width, data }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, width: usize) -> Self {
        Rows {
            width,
            data: (0..n * width).map(|_| FieldElem::random(rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[FieldElem] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [FieldElem] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, FieldElem> {
        self.data.chunks_exact(self.width)
    }

    pub fn flat(&self) -> &[FieldElem] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [FieldElem] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<FieldElem> {
        self.data
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permute(&self, perm: &Permutation) -> Rows {
        assert_eq!(perm.len(), self.len());
        let mut data = Vec::with_capacity(self.data.len());
        for &j in perm.map() {
            data.extend_from_slice(self.row(j));
        }
        Rows { width: self.width, data }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Rows {
        Rows {
            width: self.width,
            data: self.data[..n * self.width].to_vec(),
        }
    }

    /// Splits into two uniformly random additive shares.
    pub fn split<R: Rng + ?Sized>(&self, rng: &mut R) -> (Rows, Rows) {
        let first = Rows::random(rng, self.len(), self.width);
        let second = self - &first;
        (first, second)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_elems(&self.data)
    }

    pub fn from_bytes(bytes: &[u8], width: usize) -> Result<Rows, Error> {
        if width == 0 || bytes.len() % (width * ELEM_BYTES) != 0 {
            return Err(Error::Malformed(format!(
                "{} bytes do not form rows of width {width}",
                bytes.len()
            )));
        }
        Ok(Rows { width, data: decode_elems(bytes)? })
    }
}

impl Add for &Rows {
    type Output = Rows;
    fn add(self, rhs: &Rows) -> Rows {
        assert_eq!((self.width, self.data.len()), (rhs.width, rhs.data.len()));
        Rows {
            width: self.width,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl Sub for &Rows {
    type Output = Rows;
    fn sub(self, rhs: &Rows) -> Rows {
        assert_eq!((self.width, self.data.len()), (rhs.width, rhs.data.len()));
        Rows {
            width: self.width,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        }
    }
}

//! Permutations on `[0, n)` derived from seeds.
//!
//! Applying `π` to a vector gives `π(v)[i] = v[π[i]]`, so composing
//! `π2(π1(v))` reads `v[π1[π2[i]]]`.

use crate::prg::{AesCtrPrg, Prg, Seed};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { map: (0..n).collect() }
    }

    /// Validates that `map` is a bijection on `[0, map.len())`.
    pub fn from_map(map: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return None;
            }
        }
        Some(Permutation { map })
    }

    /// Fisher-Yates shuffle driven by rejection-sampled indices.
    pub fn from_prg<P: Prg + ?Sized>(prg: &mut P, n: usize) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = prg.next_below(i as u64 + 1) as usize;
            map.swap(i, j);
        }
        Permutation { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn get(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { map: inv }
    }

    /// The permutation equal to applying `self` first and then `outer`.
    pub fn then(&self, outer: &Permutation) -> Permutation {
        assert_eq!(self.len(), outer.len());
        Permutation {
            map: outer.map.iter().map(|&j| self.map[j]).collect(),
        }
    }

    pub fn apply<T: Clone>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.len());
        self.map.iter().map(|&j| v[j].clone()).collect()
    }

    /// Output position that input position `src` moves to.
    pub fn destination_of(&self, src: usize) -> usize {
        self.map.iter().position(|&m| m == src).expect("index in range")
    }
}

/// Deterministic permutation of `[0, n)` from stream 0 of `seed`.
pub fn derive_permutation(seed: &Seed, n: usize) -> Permutation {
    derive_permutation_stream(seed, 0, n)
}

pub fn derive_permutation_stream(seed: &Seed, stream: u64, n: usize) -> Permutation {
    Permutation::from_prg(&mut AesCtrPrg::new(seed, stream), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    #[test]
    fn n_one_is_identity() {
        let seed = Seed::from_u128(123).unwrap();
        assert_eq!(derive_permutation(&seed, 1), Permutation::identity(1));
    }

    #[test]
    fn deterministic() {
        let seed = Seed::from_u128(77).unwrap();
        assert_eq!(derive_permutation(&seed, 50), derive_permutation(&seed, 50));
    }

    #[test]
    fn uniform_over_s4() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        let trials = 24_000;
        for _ in 0..trials {
            let p = derive_permutation(&Seed::random(&mut rng), 4);
            *counts.entry(p.map().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = trials as f64 / 24.0;
        let sigma = (trials as f64 * (1.0 / 24.0) * (23.0 / 24.0)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma + 1.0, "count {c}");
        }
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p_value = 1.0 - ChiSquared::new(23.0).unwrap().cdf(chi2);
        assert!(p_value > 1e-4, "chi2 {chi2}");
    }

    #[test]
    fn composition_order() {
        let a = Permutation::from_map(vec![1, 2, 0]).unwrap();
        let b = Permutation::from_map(vec![0, 2, 1]).unwrap();
        let v = ['x', 'y', 'z'];
        assert_eq!(a.then(&b).apply(&v), b.apply(&a.apply(&v)));
        assert_eq!(a.destination_of(1), 0);
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::from_map(vec![0, 0]).is_none());
        assert!(Permutation::from_map(vec![0, 2]).is_none());
    }

    proptest! {
        #[test]
        fn bijection_and_inverse(seed in 0u128..(1u128 << 100), n in 1usize..200) {
            let p = derive_permutation(&Seed::from_u128(seed).unwrap(), n);
            prop_assert!(Permutation::from_map(p.map().to_vec()).is_some());
            prop_assert_eq!(p.then(&p.inverse()), Permutation::identity(n));
            prop_assert_eq!(p.inverse().then(&p), Permutation::identity(n));
        }
    }
}

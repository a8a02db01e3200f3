//! Deterministic RNG derivation, so every party and work item gets an
//! independent stream from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::hash::hash_parts;
use crate::transport::Role;

pub fn derive_rng(master: u64, label: &str, parts: &[u64]) -> ChaCha12Rng {
    let mut bytes = Vec::with_capacity(8 * (parts.len() + 1));
    bytes.extend_from_slice(&master.to_le_bytes());
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    ChaCha12Rng::from_seed(hash_parts(label.as_bytes(), &[&bytes]))
}

/// Private randomness of the three servers.
pub struct ServerRngs {
    rngs: [ChaCha12Rng; 3],
}

impl ServerRngs {
    pub fn derive(master: u64, parts: &[u64]) -> Self {
        ServerRngs {
            rngs: [
                derive_rng(master, "server/S1", parts),
                derive_rng(master, "server/S2", parts),
                derive_rng(master, "server/S3", parts),
            ],
        }
    }

    pub fn get(&mut self, role: Role) -> &mut ChaCha12Rng {
        match role {
            Role::S1 => &mut self.rngs[0],
            Role::S2 => &mut self.rngs[1],
            Role::S3 => &mut self.rngs[2],
            Role::Client => panic!("clients draw from their own RNGs"),
        }
    }

    /// Both parties' RNGs at once.
    pub fn pair(&mut self, a: Role, b: Role) -> (&mut ChaCha12Rng, &mut ChaCha12Rng) {
        let idx = |r: Role| match r {
            Role::S1 => 0,
            Role::S2 => 1,
            Role::S3 => 2,
            Role::Client => panic!("clients draw from their own RNGs"),
        };
        let (i, j) = (idx(a), idx(b));
        assert_ne!(i, j);
        let [r0, r1, r2] = &mut self.rngs;
        let mut slots = [Some(r0), Some(r1), Some(r2)];
        let x = slots[i].take().unwrap();
        let y = slots[j].take().unwrap();
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_separates_inputs() {
        let a: u64 = derive_rng(1, "x", &[2]).random();
        assert_eq!(a, derive_rng(1, "x", &[2]).random::<u64>());
        assert_ne!(a, derive_rng(1, "y", &[2]).random::<u64>());
        assert_ne!(a, derive_rng(1, "x", &[3]).random::<u64>());
        assert_ne!(a, derive_rng(2, "x", &[2]).random::<u64>());
    }

    #[test]
    fn pair_returns_distinct_streams() {
        let mut r = ServerRngs::derive(5, &[]);
        let (a, b) = r.pair(Role::S3, Role::S1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }
}

//! Standalone shuffle runs over random client entries, for benchmarks.

use std::time::{Duration, Instant};

use rand::Rng;

use super::{veri_shuffle, ShuffleOptions};
use crate::deviation::Honest;
use crate::error::Error;
use crate::field::FieldElem;
use crate::mac::{client_package, entry_width};
use crate::rng::{derive_rng, ServerRngs};
use crate::rows::Rows;
use crate::transport::{Meter, Network};

/// `n` random payloads of length `l`, MAC-packaged and split between S1 and S2.
pub fn random_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, l: usize) -> (Rows, Rows) {
    let width = entry_width(l);
    let mut s1 = Vec::with_capacity(n * width);
    let mut s2 = Vec::with_capacity(n * width);
    for _ in 0..n {
        let payload: Vec<FieldElem> = (0..l).map(|_| FieldElem::random(rng)).collect();
        let e = client_package(&payload, rng);
        s1.extend(e.s1.expand_row());
        s2.extend(e.s2.expand_row());
    }
    (Rows::from_flat(width, s1), Rows::from_flat(width, s2))
}

#[derive(Clone, Debug)]
pub struct ShuffleCost {
    pub n: usize,
    pub l: usize,
    pub meter: Meter,
    pub elapsed: Duration,
}

/// One honest shuffle of `n` random entries with payload length `l`.
pub fn measure_shuffle(net: &mut Network, n: usize, l: usize, opts: ShuffleOptions, seed: u64) -> Result<ShuffleCost, Error> {
    let mut rng = derive_rng(seed, "bench/batch", &[n as u64, l as u64]);
    let (x1, x2) = random_batch(&mut rng, n, l);
    let mut rngs = ServerRngs::derive(seed, &[n as u64, l as u64]);
    let start = Instant::now();
    veri_shuffle(net, &x1, &x2, l, &mut rngs, &mut Honest, opts)?;
    let elapsed = start.elapsed();
    let (meter, _) = net.take_records();
    Ok(ShuffleCost { n, l, meter, elapsed })
}

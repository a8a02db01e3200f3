//! Client-side LDP perturbation with seed compression, and server-side
//! decompression.
//!
//! A clipped gradient `x` is first pushed to the sphere of radius `L`
//! (`x̄ = ±L·x/‖x‖`, `+` with probability `1/2 + ‖x‖/(2L)`). The client then
//! draws a seed `s`, expands it to a uniformly random direction `v`, and sends
//! `b = (2U-1)·sign(⟨v, x̄⟩)` with `U ~ Bernoulli(e^ε/(e^ε+1))` together
//! with `s`. The server outputs `b·M·v`, which is an unbiased estimate of `x`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::Error;
use crate::exec::{chunk_ranges, Execution};
use crate::prg::{AesCtrPrg, BitReader, Seed};

pub const DEFAULT_BITS: u32 = 32;

/// Wire size of a [`CompressedGrad`].
pub const COMPRESSED_BYTES: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LdpParams {
    pub epsilon0: f64,
    /// ℓ2 clipping bound.
    pub clip: f64,
    pub d: usize,
    /// Bits consumed per coordinate when expanding a seed.
    pub bits: u32,
}

impl LdpParams {
    pub fn new(epsilon0: f64, clip: f64, d: usize) -> Result<Self, Error> {
        Self::with_bits(epsilon0, clip, d, DEFAULT_BITS)
    }

    pub fn with_bits(epsilon0: f64, clip: f64, d: usize, bits: u32) -> Result<Self, Error> {
        if !(epsilon0 >= 0.0 && epsilon0.is_finite()) {
            return Err(Error::Param(format!("epsilon0 must be finite and >= 0, got {epsilon0}")));
        }
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(Error::Param(format!("clip bound must be positive, got {clip}")));
        }
        if d == 0 {
            return Err(Error::Param("dimension must be at least 1".into()));
        }
        if !(8..=52).contains(&bits) {
            return Err(Error::Param(format!("bits per coordinate must be in [8, 52], got {bits}")));
        }
        Ok(LdpParams { epsilon0, clip, d, bits })
    }

    /// `Pr[U = 1] = e^ε / (e^ε + 1)`.
    pub fn keep_probability(&self) -> f64 {
        keep_probability(self.epsilon0)
    }

    /// `(e^ε + 1)/(e^ε - 1)`, i.e. `coth(ε/2)`.
    pub fn privacy_factor(&self) -> Result<f64, Error> {
        privacy_factor(self.epsilon0)
    }

    /// Norm of every decompressed vector:
    /// `M = L·√π·Γ((d+1)/2)/Γ(d/2)·(e^ε+1)/(e^ε-1)`.
    pub fn magnitude(&self) -> Result<f64, Error> {
        let d = self.d as f64;
        let ratio = (ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)).exp();
        Ok(self.clip * std::f64::consts::PI.sqrt() * ratio * self.privacy_factor()?)
    }

    /// Upper bound on `E‖R(x) - x‖²`:
    /// `L²·d·(3√π/4·(e^ε+1)/(e^ε-1))²`.
    pub fn variance_bound(&self) -> Result<f64, Error> {
        let c = 0.75 * std::f64::consts::PI.sqrt() * self.privacy_factor()?;
        Ok(self.clip * self.clip * self.d as f64 * c * c)
    }
}

pub fn keep_probability(epsilon0: f64) -> f64 {
    1.0 / (1.0 + (-epsilon0).exp())
}

pub fn privacy_factor(epsilon0: f64) -> Result<f64, Error> {
    if !(epsilon0 > 0.0) {
        return Err(Error::Param(format!(
            "decompression needs epsilon0 > 0 (got {epsilon0}); the scale factor divides by e^eps - 1"
        )));
    }
    Ok(1.0 / (epsilon0 / 2.0).tanh())
}

/// A perturbed gradient on the wire: one sign and one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CompressedGrad {
    /// `+1` or `-1`.
    pub sign: i8,
    pub seed: Seed,
}

impl CompressedGrad {
    pub fn to_bytes(&self) -> [u8; COMPRESSED_BYTES] {
        let mut out = [0u8; COMPRESSED_BYTES];
        out[0] = u8::from(self.sign > 0);
        out[1..].copy_from_slice(&self.seed.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() != COMPRESSED_BYTES {
            return Err(Error::Malformed(format!("compressed gradient needs 17 bytes, got {}", bytes.len())));
        }
        let sign = match bytes[0] {
            0 => -1,
            1 => 1,
            b => return Err(Error::Malformed(format!("sign byte {b:#04x}"))),
        };
        let seed = Seed::from_bytes(bytes[1..].try_into().unwrap())?;
        Ok(CompressedGrad { sign, seed })
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rescales `g` onto the ℓ2 ball of radius `bound`.
pub fn clip(g: &[f64], bound: f64) -> Vec<f64> {
    let n = norm(g);
    let scale = 1.0 / (n / bound).max(1.0);
    g.iter().map(|x| x * scale).collect()
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Expands `seed` into a unit vector of dimension `d`.
///
/// Each `bits`-wide chunk `u` becomes `Φ⁻¹((u + 0.5)/2^bits)`; the Gaussian
/// vector is then normalized. A zero vector moves on to the next stream.
pub fn expand_direction(seed: &Seed, d: usize, bits: u32) -> Vec<f64> {
    let normal = standard_normal();
    let denom = (bits as f64).exp2();
    let mut stream = 0u64;
    loop {
        let mut prg = AesCtrPrg::new(seed, stream);
        let mut reader = BitReader::new(&mut prg);
        let mut v: Vec<f64> = (0..d)
            .map(|_| normal.inverse_cdf((reader.read(bits) as f64 + 0.5) / denom))
            .collect();
        let n = norm(&v);
        if n > 0.0 && n.is_finite() {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
        stream += 1;
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let normal = standard_normal();
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| normal.inverse_cdf(rng.random_range(f64::MIN_POSITIVE..1.0)))
            .collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn check_norm(x: &[f64], params: &LdpParams) -> Result<f64, Error> {
    if x.len() != params.d {
        return Err(Error::Usage(format!("gradient has dimension {}, expected {}", x.len(), params.d)));
    }
    let n = norm(x);
    if !(n <= params.clip * (1.0 + 1e-9)) {
        return Err(Error::Param(format!("gradient norm {n} exceeds clip bound {}", params.clip)));
    }
    Ok(n)
}

/// The norm-randomization step: a vector of norm exactly `L` pointing along
/// `x` with probability `1/2 + ‖x‖/(2L)` and against it otherwise. For
/// `x = 0` the direction is a fresh uniform unit vector.
pub fn randomize_norm<R: Rng + ?Sized>(x: &[f64], params: &LdpParams, rng: &mut R) -> Result<Vec<f64>, Error> {
    let n = check_norm(x, params)?;
    let plus = rng.random_bool((0.5 + n / (2.0 * params.clip)).min(1.0));
    let s = if plus { params.clip } else { -params.clip };
    if n == 0.0 {
        Ok(random_unit(rng, params.d).into_iter().map(|u| s * u).collect())
    } else {
        Ok(x.iter().map(|v| s * v / n).collect())
    }
}

/// Perturbs and compresses `x` (which must satisfy `‖x‖ ≤ L`).
pub fn noisy_grad_cmpr<R: Rng + ?Sized>(x: &[f64], params: &LdpParams, rng: &mut R) -> Result<CompressedGrad, Error> {
    let x_bar = randomize_norm(x, params, rng)?;
    let seed = Seed::random(rng);
    let v = expand_direction(&seed, params.d, params.bits);
    let aligned = if dot(&v, &x_bar) >= 0.0 { 1 } else { -1 };
    let keep = rng.random_bool(params.keep_probability());
    let sign = if keep { aligned } else { -aligned };
    Ok(CompressedGrad { sign, seed })
}

/// Rebuilds the perturbed vector `sign·M·v` from its compressed form.
pub fn noisy_grad_dcmp(r: &CompressedGrad, params: &LdpParams) -> Result<Vec<f64>, Error> {
    let m = params.magnitude()? * r.sign as f64;
    Ok(expand_direction(&r.seed, params.d, params.bits)
        .into_iter()
        .map(|v| m * v)
        .collect())
}

#[derive(Clone, Debug)]
pub struct MonteCarlo {
    pub mean: Vec<f64>,
    /// Mean of `‖R(x) - x‖²`.
    pub mse: f64,
    pub trials: u64,
}

const ORACLE_CHUNKS: usize = 64;

/// Monte Carlo mean and squared error of `dcmp(cmpr(x))`.
///
/// Work is split into a fixed number of chunks, each with its own RNG derived
/// from `seed`, so results do not depend on the execution mode.
pub fn unbiasedness_oracle(
    x: &[f64],
    params: &LdpParams,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarlo, Error> {
    check_norm(x, params)?;
    params.magnitude()?;
    let ranges = chunk_ranges(trials as usize, ORACLE_CHUNKS);
    let partials = exec.try_map_indexed(ranges.len(), |c| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut sum = vec![0.0; params.d];
        let mut sq = 0.0;
        for _ in ranges[c].clone() {
            let r = noisy_grad_cmpr(x, params, &mut rng)?;
            let g = noisy_grad_dcmp(&r, params)?;
            for ((s, gi), xi) in sum.iter_mut().zip(&g).zip(x) {
                *s += gi;
                sq += (gi - xi) * (gi - xi);
            }
        }
        Ok::<_, Error>((sum, sq))
    })?;
    let mut mean = vec![0.0; params.d];
    let mut sq = 0.0;
    for (s, q) in partials {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
        sq += q;
    }
    let t = trials as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    Ok(MonteCarlo { mean, mse: sq / t, trials })
}

//! Learning tasks: per-point gradients of a convex loss.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ldp::dot;
use crate::rng::derive_rng;

pub trait Task: Sync {
    fn dim(&self) -> usize;
    fn clients(&self) -> usize;
    fn points(&self, client: usize) -> usize;
    /// `∇ℓ(θ, x)` for point `idx` of `client`.
    fn gradient(&self, theta: &[f64], client: usize, idx: usize) -> Vec<f64>;
    /// Mean loss over all points.
    fn loss(&self, theta: &[f64]) -> f64;
}

/// Binary logistic regression on a two-component Gaussian mixture:
/// `x = y·μ + σ·z` with `y = ±1`, `|μ| = margin` and `z` standard normal.
#[derive(Clone, Debug)]
pub struct SyntheticLogistic {
    d: usize,
    /// `data[client][i] = (x, y)`.
    data: Vec<Vec<(Vec<f64>, f64)>>,
}

impl SyntheticLogistic {
    pub fn generate(d: usize, clients: usize, per_client: usize, margin: f64, noise: f64, seed: u64) -> Self {
        let mut rng = derive_rng(seed, "task/mean", &[]);
        let mut mu: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = dot(&mu, &mu).sqrt();
        mu.iter_mut().for_each(|m| *m *= margin / len);
        let data = (0..clients)
            .map(|c| {
                let mut rng = derive_rng(seed, "task/client", &[c as u64]);
                (0..per_client)
                    .map(|_| {
                        let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        let x = mu.iter().map(|m| y * m + noise * rng.sample::<f64, _>(StandardNormal)).collect();
                        (x, y)
                    })
                    .collect()
            })
            .collect();
        SyntheticLogistic { d, data }
    }

    pub fn point(&self, client: usize, idx: usize) -> (&[f64], f64) {
        let (x, y) = &self.data[client][idx];
        (x, *y)
    }
}

/// `log(1 + e^{-m})` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + e^{m})`.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl Task for SyntheticLogistic {
    fn dim(&self) -> usize {
        self.d
    }

    fn clients(&self) -> usize {
        self.data.len()
    }

    fn points(&self, client: usize) -> usize {
        self.data[client].len()
    }

    fn gradient(&self, theta: &[f64], client: usize, idx: usize) -> Vec<f64> {
        let (x, y) = self.point(client, idx);
        let scale = -y * sigmoid_neg(y * dot(theta, x));
        x.iter().map(|v| scale * v).collect()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for points in &self.data {
            for (x, y) in points {
                total += softplus_neg(y * dot(theta, x));
                count += 1;
            }
        }
        total / count as f64
    }
}

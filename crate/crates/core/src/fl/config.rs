use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ldp::{privacy_factor, LdpParams, DEFAULT_BITS};
use crate::mac::{entry_width, VerifyOptions, COMPRESSED_PAYLOAD_LEN};
use crate::shuffle::{DefenseMode, ShuffleOptions};

/// What clients put through the shuffle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One sign and one seed per gradient.
    #[default]
    Compressed,
    /// The full randomized gradient as `d` fixed-point field elements.
    Vec,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Compressed => "compressed",
            Mode::Vec => "vec",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "compressed" => Some(Mode::Compressed),
            "vec" => Some(Mode::Vec),
            _ => None,
        }
    }
}

fn default_bits() -> u32 {
    DEFAULT_BITS
}

fn default_margin() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.5
}

fn default_commit() -> bool {
    true
}

fn default_defense() -> String {
    DefenseMode::Full.name().to_string()
}

/// Training parameters. Field names match the config file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Clients.
    pub n: usize,
    /// Data points per client.
    pub r: usize,
    /// Points each client samples per iteration.
    pub s: usize,
    /// Server sample multiplier, `B = k·s`.
    pub k: usize,
    /// Iterations.
    #[serde(rename = "T")]
    pub t: usize,
    /// Clip bound.
    #[serde(rename = "L")]
    pub clip: f64,
    pub epsilon0: f64,
    pub d: usize,
    /// Diameter of the feasible set.
    #[serde(rename = "D")]
    pub diameter: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Precision of the direction sampler.
    #[serde(default = "default_bits")]
    pub bits: u32,
    #[serde(default = "default_defense")]
    pub defense: String,
    /// Distance of each class mean from the origin in the synthetic task.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Per-coordinate feature noise in the synthetic task.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Hash-commit `f` shares before revealing them. Turning this off only
    /// serves to demonstrate the forgery it prevents.
    #[serde(default = "default_commit")]
    pub commit: bool,
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Param(m));
        if self.n == 0 || self.r == 0 || self.s == 0 || self.k == 0 || self.d == 0 {
            return bad("n, r, s, k and d must be positive".into());
        }
        if self.s > self.r {
            return bad(format!("s = {} exceeds r = {}", self.s, self.r));
        }
        if self.batch() > self.shuffled() {
            return bad(format!("B = {} exceeds N = {}", self.batch(), self.shuffled()));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad(format!("L must be positive, got {}", self.clip));
        }
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return bad(format!("D must be positive, got {}", self.diameter));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return bad(format!("epsilon0 must be positive, got {}", self.epsilon0));
        }
        if self.defense_mode().is_none() {
            return bad(format!("unknown defense '{}'", self.defense));
        }
        self.ldp()?;
        Ok(())
    }

    /// `N = n·s`, the number of shuffled entries.
    pub fn shuffled(&self) -> usize {
        self.n * self.s
    }

    /// `B = k·s`, the number of entries the servers use.
    pub fn batch(&self) -> usize {
        self.k * self.s
    }

    /// `M = n·r`.
    pub fn total_points(&self) -> usize {
        self.n * self.r
    }

    /// `γ = B/M`.
    pub fn gamma(&self) -> f64 {
        self.batch() as f64 / self.total_points() as f64
    }

    pub fn ldp(&self) -> Result<LdpParams, Error> {
        LdpParams::with_bits(self.epsilon0, self.clip, self.d, self.bits)
    }

    pub fn shuffle_options(&self) -> Option<ShuffleOptions> {
        let defense = self.defense_mode()?;
        Some(ShuffleOptions { defense, verify: VerifyOptions { commit: self.commit } })
    }

    pub fn defense_mode(&self) -> Option<DefenseMode> {
        DefenseMode::parse(&self.defense)
    }

    /// Payload length `l` of one shuffled entry.
    pub fn payload_len(&self) -> usize {
        match self.mode {
            Mode::Compressed => COMPRESSED_PAYLOAD_LEN,
            Mode::Vec => self.d,
        }
    }

    pub fn entry_width(&self) -> usize {
        entry_width(self.payload_len())
    }

    /// `G = L·sqrt(1 + 14d/(γM)·((e^ε0+1)/(e^ε0−1))²)`.
    pub fn gradient_bound(&self) -> f64 {
        gradient_bound(self.clip, self.d, self.gamma() * self.total_points() as f64, self.epsilon0)
    }

    /// `η_t = D/(G·sqrt(t))` for `t ≥ 1`.
    pub fn eta(&self, t: usize) -> f64 {
        self.diameter / (self.gradient_bound() * (t.max(1) as f64).sqrt())
    }
}

/// The second-moment bound on an averaged gradient, with `gamma_m = γM`.
pub fn gradient_bound(clip: f64, d: usize, gamma_m: f64, epsilon0: f64) -> f64 {
    let factor = privacy_factor(epsilon0).unwrap_or(f64::INFINITY);
    clip * (1.0 + 14.0 * d as f64 / gamma_m * factor * factor).sqrt()
}

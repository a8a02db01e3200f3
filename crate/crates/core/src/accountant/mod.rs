//! Privacy accounting for `T` iterations of shuffled, subsampled `ε0`-LDP
//! gradients: amplification, per-iteration RDP, composition, conversion to
//! `(ε, δ)`-DP, the two advanced-composition baselines and the convergence
//! bound.

use crate::error::Error;
use crate::exec::Execution;
use crate::fl::gradient_bound;
use crate::ldp::privacy_factor;

/// A closed-form bound on the central `ε̃` of `n` shuffled `ε0`-LDP messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShuffleBound {
    /// Privacy-blanket bound of Balle, Bell, Gascón and Nissim (2019):
    /// `ε̃ = sqrt(14·ln(2/δ̃)·e^{ε0}/(n−1))`.
    #[default]
    Bbgn19,
    /// Clone bound of Feldman, McMillan and Talwar (2021):
    /// `ε̃ = ln(1 + (e^{ε0}−1)/(e^{ε0}+1)·(8·sqrt(e^{ε0}·ln(4/δ̃)/n) + 8e^{ε0}/n))`.
    Fmt21,
}

impl ShuffleBound {
    pub const ALL: [ShuffleBound; 2] = [ShuffleBound::Bbgn19, ShuffleBound::Fmt21];

    pub fn name(self) -> &'static str {
        match self {
            ShuffleBound::Bbgn19 => "bbgn19",
            ShuffleBound::Fmt21 => "fmt21",
        }
    }

    pub fn parse(s: &str) -> Option<ShuffleBound> {
        ShuffleBound::ALL.into_iter().find(|b| b.name() == s.to_ascii_lowercase())
    }

    /// Largest `ε0` for which the bound holds with `n` messages.
    pub fn max_epsilon0(self, n: f64, delta_tilde: f64) -> f64 {
        match self {
            // The requirement that comes with the per-iteration RDP statement.
            ShuffleBound::Bbgn19 => 0.5 * (n / (1.0 / delta_tilde).ln()).ln(),
            ShuffleBound::Fmt21 => (n / (16.0 * (2.0 / delta_tilde).ln())).ln(),
        }
    }

    fn evaluate(self, epsilon0: f64, n: f64, delta_tilde: f64) -> f64 {
        let e = epsilon0.exp();
        match self {
            ShuffleBound::Bbgn19 => (14.0 * (2.0 / delta_tilde).ln() * e / (n - 1.0)).sqrt(),
            ShuffleBound::Fmt21 => {
                let body = 8.0 * (e * (4.0 / delta_tilde).ln() / n).sqrt() + 8.0 * e / n;
                ((e - 1.0) / (e + 1.0) * body).ln_1p()
            }
        }
    }
}

fn check_unit(name: &str, v: f64, closed_top: bool) -> Result<(), Error> {
    let ok = v > 0.0 && (v < 1.0 || (closed_top && v == 1.0));
    if ok {
        Ok(())
    } else {
        let range = if closed_top { "(0, 1]" } else { "(0, 1)" };
        Err(Error::Param(format!("{name} must lie in {range}, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), Error> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `ε̃` for `n_msgs` shuffled `ε0`-LDP messages, never above `ε0`.
pub fn shuffle_amplify(bound: ShuffleBound, epsilon0: f64, n_msgs: f64, delta_tilde: f64) -> Result<f64, Error> {
    check_positive("epsilon0", epsilon0)?;
    check_unit("delta_tilde", delta_tilde, false)?;
    if n_msgs < 2.0 {
        return Err(Error::Param(format!("need at least 2 messages, got {n_msgs}")));
    }
    let max = bound.max_epsilon0(n_msgs, delta_tilde);
    if epsilon0 > max {
        return Err(Error::Precondition {
            bound: bound.name(),
            detail: format!("epsilon0 = {epsilon0} exceeds {max:.4} for n = {n_msgs}, delta_tilde = {delta_tilde:e}"),
        });
    }
    Ok(bound.evaluate(epsilon0, n_msgs, delta_tilde).min(epsilon0))
}

/// `(ln(1 + γ(e^ε − 1)), γδ)`.
pub fn subsample_amplify(epsilon: f64, delta: f64, gamma: f64) -> (f64, f64) {
    if gamma == 1.0 {
        return (epsilon, delta);
    }
    ((gamma * epsilon.exp_m1()).ln_1p(), gamma * delta)
}

/// `λ·ln²(1 + γ(e^{ε̃} − 1))/2`.
pub fn per_iter_rdp(lambda: f64, epsilon_tilde: f64, gamma: f64) -> f64 {
    let e = subsample_amplify(epsilon_tilde, 0.0, gamma).0;
    lambda * e * e / 2.0
}

/// `T` adaptive compositions of an RDP curve.
pub fn compose_rdp<F: Fn(f64) -> f64>(per_iter: F, t: usize) -> impl Fn(f64) -> f64 {
    move |lambda| t as f64 * per_iter(lambda)
}

/// Candidate Rényi orders.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGrid {
    points: Vec<f64>,
}

impl Default for LambdaGrid {
    /// Integers `2..=512` plus 200 log-spaced reals over the same range.
    fn default() -> Self {
        LambdaGrid::covering(2.0, 512.0, 200)
    }
}

impl LambdaGrid {
    pub fn from_points(mut points: Vec<f64>) -> Self {
        points.retain(|l| *l > 1.0 && l.is_finite());
        // Log-spaced endpoints land a rounding error away from integers.
        for l in points.iter_mut() {
            if (*l - l.round()).abs() <= 1e-9 * *l {
                *l = l.round();
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        LambdaGrid { points }
    }

    /// Every integer in `[lo, hi]` plus `extra` log-spaced points.
    pub fn covering(lo: f64, hi: f64, extra: usize) -> Self {
        let mut points: Vec<f64> = (lo.ceil() as u64..=hi.floor() as u64).map(|l| l as f64).collect();
        points.extend(log_spaced(lo, hi, extra));
        LambdaGrid::from_points(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        *self.points.last().expect("nonempty grid")
    }
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo; count];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Overhead of converting `(λ, ε(λ))`-RDP to `(ε, δ)`-DP.
pub fn conversion_overhead(lambda: f64, delta: f64) -> f64 {
    ((1.0 / delta).ln() + (lambda - 1.0) * (-1.0 / lambda).ln_1p() - lambda.ln()) / (lambda - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conversion {
    pub epsilon: f64,
    /// The minimizing order.
    pub lambda: f64,
    /// Whether the grid had to be widened to find an interior minimum.
    pub widened: bool,
}

const MAX_WIDENINGS: usize = 40;

fn grid_min<F: Fn(f64) -> f64>(f: &F, points: &[f64], delta: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &l) in points.iter().enumerate() {
        let v = f(l) + conversion_overhead(l, delta);
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// `min_λ ε(λ) + (ln(1/δ) + (λ−1)ln(1−1/λ) − ln λ)/(λ−1)` over the grid,
/// widening it while the minimum sits on a boundary. The expression can dip
/// below zero for very large orders; the result is clamped at zero.
pub fn rdp_to_dp<F: Fn(f64) -> f64>(epsilon_of_lambda: F, grid: &LambdaGrid, delta: f64) -> Result<Conversion, Error> {
    check_unit("delta", delta, false)?;
    if grid.points().is_empty() {
        return Err(Error::Usage("empty lambda grid".into()));
    }
    let mut points = grid.points().to_vec();
    let mut widened = false;
    for _ in 0..MAX_WIDENINGS {
        let (i, eps) = grid_min(&epsilon_of_lambda, &points, delta);
        let lo = points[0];
        let hi = *points.last().unwrap();
        if points.len() > 2 && i == 0 && lo > 1.0 + 1e-9 {
            // Orders between 1 and the current minimum.
            let gap = lo - 1.0;
            points.extend(log_spaced(1.0 + gap / 64.0, lo, 64));
        } else if points.len() > 2 && i == points.len() - 1 {
            points.extend(log_spaced(hi, 4.0 * hi, 64));
        } else {
            return Ok(Conversion { epsilon: eps.max(0.0), lambda: points[i], widened });
        }
        points = LambdaGrid::from_points(points).points;
        widened = true;
    }
    let (i, eps) = grid_min(&epsilon_of_lambda, &points, delta);
    Ok(Conversion { epsilon: eps.max(0.0), lambda: points[i], widened })
}

/// Advanced composition of `T` `(ε, δ)` mechanisms:
/// `(ε·sqrt(2T·ln(1/δs)) + Tε(e^ε − 1), Tδ + δs)`.
pub fn advanced_composition(epsilon: f64, delta: f64, t: usize, delta_slack: f64) -> (f64, f64) {
    let t = t as f64;
    (
        epsilon * (2.0 * t * (1.0 / delta_slack).ln()).sqrt() + t * epsilon * epsilon.exp_m1(),
        t * delta + delta_slack,
    )
}

/// Parameters of one accounting question.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyLedger {
    pub epsilon0: f64,
    /// Target total `δ`.
    pub delta: f64,
    /// Per-iteration `δ̃`; defaults to `δ/(2T)`.
    pub delta_tilde: f64,
    pub gamma: f64,
    /// Total data points `M`.
    pub m: f64,
    /// Shuffled messages `N` per iteration.
    pub n: f64,
    pub t: usize,
    pub bound: ShuffleBound,
    pub grid: LambdaGrid,
}

/// Per-iteration amplification and whether its precondition held.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Amplified {
    pub epsilon_tilde: f64,
    /// The precondition failed and `ε̃ = ε0` was used instead.
    pub fallback: bool,
}

impl PrivacyLedger {
    /// The standard split: `δ̃ = δ/(2T)` per iteration and `δ/2` for the
    /// final conversion.
    pub fn new(epsilon0: f64, delta: f64, gamma: f64, m: f64, n: f64, t: usize, bound: ShuffleBound) -> Result<Self, Error> {
        let ledger = PrivacyLedger {
            epsilon0,
            delta,
            delta_tilde: delta / (2.0 * t.max(1) as f64),
            gamma,
            m,
            n,
            t,
            bound,
            grid: LambdaGrid::default(),
        };
        ledger.validate()?;
        Ok(ledger)
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_positive("epsilon0", self.epsilon0)?;
        check_unit("delta", self.delta, false)?;
        check_unit("delta_tilde", self.delta_tilde, false)?;
        check_unit("gamma", self.gamma, true)?;
        check_positive("M", self.m)?;
        check_positive("N", self.n)?;
        if self.t as f64 * self.delta_tilde >= self.delta {
            return Err(Error::Param(format!(
                "T·delta_tilde = {:e} leaves no budget for the conversion",
                self.t as f64 * self.delta_tilde
            )));
        }
        Ok(())
    }

    /// Messages the amplification argument counts: `γM` sampled entries.
    pub fn messages(&self) -> f64 {
        self.gamma * self.m
    }

    /// Whether `ε0 ≤ max` for the chosen bound.
    pub fn precondition_holds(&self) -> bool {
        self.epsilon0 <= self.bound.max_epsilon0(self.messages(), self.delta_tilde)
    }

    pub fn amplify(&self) -> Result<f64, Error> {
        shuffle_amplify(self.bound, self.epsilon0, self.messages(), self.delta_tilde)
    }

    /// `ε̃`, falling back to `ε0` when the precondition fails.
    pub fn amplify_or_fallback(&self) -> Result<Amplified, Error> {
        match self.amplify() {
            Ok(e) => Ok(Amplified { epsilon_tilde: e, fallback: false }),
            Err(Error::Precondition { .. }) => Ok(Amplified { epsilon_tilde: self.epsilon0, fallback: true }),
            Err(e) => Err(e),
        }
    }

    /// `δ` left for the final conversion.
    pub fn conversion_delta(&self) -> f64 {
        self.delta - self.t as f64 * self.delta_tilde
    }

    /// `(ε, δ)` after `T` iterations through RDP.
    pub fn rdp_epsilon(&self) -> Result<(Conversion, Amplified), Error> {
        let amp = self.amplify_or_fallback()?;
        let total = compose_rdp(|l| per_iter_rdp(l, amp.epsilon_tilde, self.gamma), self.t);
        Ok((rdp_to_dp(total, &self.grid, self.conversion_delta())?, amp))
    }

    /// Shuffling, subsampling and advanced composition.
    pub fn shuffle_subsample_ac(&self) -> Result<(f64, f64), Error> {
        let amp = self.amplify_or_fallback()?;
        let (e, d) = subsample_amplify(amp.epsilon_tilde, self.delta_tilde, self.gamma);
        Ok(advanced_composition(e, d, self.t, self.conversion_delta()))
    }

    /// Shuffling and advanced composition, ignoring subsampling.
    pub fn shuffle_ac(&self) -> Result<(f64, f64), Error> {
        let amp = self.amplify_or_fallback()?;
        Ok(advanced_composition(amp.epsilon_tilde, self.delta_tilde, self.t, self.conversion_delta()))
    }
}

/// The RDP route evaluated directly from its closed form, without the
/// composition and conversion helpers.
pub fn rdp_closed_form(epsilon_tilde: f64, gamma: f64, t: usize, delta: f64, grid: &LambdaGrid) -> f64 {
    let log_term = (1.0 + gamma * (epsilon_tilde.exp() - 1.0)).ln();
    grid.points()
        .iter()
        .map(|&l| {
            t as f64 * l * log_term * log_term / 2.0
                + ((1.0 / delta).ln() + (l - 1.0) * (1.0 - 1.0 / l).ln() - l.ln()) / (l - 1.0)
        })
        .fold(f64::INFINITY, f64::min)
}

/// One row of the bound comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundRow {
    pub epsilon0: f64,
    pub n: f64,
    pub gamma: f64,
    pub t: usize,
    pub epsilon_tilde: f64,
    pub fallback: bool,
    /// RDP route.
    pub rdp: f64,
    pub lambda: f64,
    /// Shuffling, subsampling and advanced composition.
    pub shuffle_subsample_ac: f64,
    /// Shuffling and advanced composition.
    pub shuffle_ac: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareGrid {
    pub epsilon0: Vec<f64>,
    pub n: Vec<f64>,
    pub gamma: Vec<f64>,
    pub t: Vec<usize>,
    pub delta: f64,
    pub bound: ShuffleBound,
}

impl Default for CompareGrid {
    /// `ε0 ∈ [0.5, 4]` in steps of 0.25, `N ∈ {10³, 10⁴, 10⁵}`,
    /// `γ ∈ {0.05, 0.2, 1}`, `T ∈ {1, 10², 10³}`, `δ = 10⁻⁵`.
    fn default() -> Self {
        CompareGrid {
            epsilon0: (0..=14).map(|i| 0.5 + 0.25 * i as f64).collect(),
            n: vec![1e3, 1e4, 1e5],
            gamma: vec![0.05, 0.2, 1.0],
            t: vec![1, 100, 1000],
            delta: 1e-5,
            bound: ShuffleBound::Bbgn19,
        }
    }
}

/// All three bounds at one point. `n` counts the shuffled-and-sampled
/// messages, so `M = n/γ`.
pub fn compare_point(epsilon0: f64, n: f64, gamma: f64, t: usize, delta: f64, bound: ShuffleBound) -> Result<BoundRow, Error> {
    let ledger = PrivacyLedger::new(epsilon0, delta, gamma, n / gamma, n, t, bound)?;
    let (conv, amp) = ledger.rdp_epsilon()?;
    Ok(BoundRow {
        epsilon0,
        n,
        gamma,
        t,
        epsilon_tilde: amp.epsilon_tilde,
        fallback: amp.fallback,
        rdp: conv.epsilon,
        lambda: conv.lambda,
        shuffle_subsample_ac: ledger.shuffle_subsample_ac()?.0,
        shuffle_ac: ledger.shuffle_ac()?.0,
    })
}

pub fn compare_bounds(grid: &CompareGrid, exec: Execution) -> Result<Vec<BoundRow>, Error> {
    let mut points = Vec::new();
    for &e in &grid.epsilon0 {
        for &n in &grid.n {
            for &g in &grid.gamma {
                for &t in &grid.t {
                    points.push((e, n, g, t));
                }
            }
        }
    }
    exec.try_map_indexed(points.len(), |i| {
        let (e, n, g, t) = points[i];
        compare_point(e, n, g, t, grid.delta, grid.bound)
    })
}

/// CSV with a leading comment line naming the bound.
pub fn bounds_to_csv(rows: &[BoundRow], bound: ShuffleBound, delta: f64) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record([
        "epsilon0",
        "n",
        "gamma",
        "T",
        "epsilon_tilde",
        "fallback",
        "rdp",
        "lambda",
        "shuffle_subsample_ac",
        "shuffle_ac",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.epsilon0.to_string(),
            r.n.to_string(),
            r.gamma.to_string(),
            r.t.to_string(),
            format!("{:.6}", r.epsilon_tilde),
            r.fallback.to_string(),
            format!("{:.6}", r.rdp),
            format!("{:.4}", r.lambda),
            format!("{:.6}", r.shuffle_subsample_ac),
            format!("{:.6}", r.shuffle_ac),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let body = String::from_utf8(bytes).expect("csv is utf-8");
    Ok(format!("# bound={} delta={delta:e}\n{body}", bound.name()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceBound {
    /// Second-moment bound on an averaged gradient.
    pub g: f64,
    /// `L·D·ln(T)/√T·sqrt(14d/(γM))·(e^{ε0}+1)/(e^{ε0}−1)`, unit constant.
    pub value: f64,
}

pub fn convergence_bound(clip: f64, diameter: f64, d: usize, gamma_m: f64, epsilon0: f64, t: usize) -> Result<ConvergenceBound, Error> {
    check_positive("gamma*M", gamma_m)?;
    let factor = privacy_factor(epsilon0)?;
    let t = t.max(1) as f64;
    Ok(ConvergenceBound {
        g: gradient_bound(clip, d, gamma_m, epsilon0),
        value: clip * diameter * t.ln() / t.sqrt() * (14.0 * d as f64 / gamma_m).sqrt() * factor,
    })
}

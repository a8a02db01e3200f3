//! Fault injection for one corrupted server.
//!
//! Every attack is a [`Deviation`] over the honest protocol, so honest and
//! malicious runs share one implementation. A trial runs one training
//! iteration with the attack active and records which check, if any, fired.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Deserialize;

use crate::deviation::Deviation;
use crate::error::{Abort, CheckId, Error};
use crate::exec::Execution;
use crate::field::FieldElem;
use crate::fl::{run_training, Mode, SyntheticLogistic, Task, TrainConfig};
use crate::ldp::DEFAULT_BITS;
use crate::rng::derive_rng;
use crate::rows::Rows;
use crate::shuffle::{Correlation, DefenseMode};
use crate::transport::{Network, Role};

/// Which message the selective-failure error goes into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Z2,
    Z1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    /// Error in one row of `z2` or `z1`, cancelled at a guessed output row.
    SelectiveFailure(Target),
    /// Tamper with data, then rush and negate the peer's `f` share.
    ForgeFShare,
    /// Flip one bit of the sampled share block.
    TamperReconstruction,
    /// Perturb the locally updated model.
    TamperAggregation,
    /// Send a Δ inconsistent with the seeds.
    MalformedDelta,
    /// Deal one wrong triple.
    MalformedTriples,
}

impl Behavior {
    pub const ALL: [Behavior; 8] = [
        Behavior::Honest,
        Behavior::SelectiveFailure(Target::Z2),
        Behavior::SelectiveFailure(Target::Z1),
        Behavior::ForgeFShare,
        Behavior::TamperReconstruction,
        Behavior::TamperAggregation,
        Behavior::MalformedDelta,
        Behavior::MalformedTriples,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Honest => "honest",
            Behavior::SelectiveFailure(Target::Z2) => "selective_failure_z2",
            Behavior::SelectiveFailure(Target::Z1) => "selective_failure_z1",
            Behavior::ForgeFShare => "forge_f_share",
            Behavior::TamperReconstruction => "tamper_reconstruction",
            Behavior::TamperAggregation => "tamper_aggregation",
            Behavior::MalformedDelta => "malformed_delta",
            Behavior::MalformedTriples => "malformed_triples",
        }
    }

    pub fn parse(s: &str) -> Option<Behavior> {
        let s = s.replace('-', "_");
        Behavior::ALL.into_iter().find(|b| b.name() == s)
    }

    /// Roles able to mount this attack.
    pub fn roles(self) -> &'static [Role] {
        match self {
            Behavior::Honest => &[Role::S1, Role::S2, Role::S3],
            Behavior::SelectiveFailure(Target::Z2) => &[Role::S2],
            Behavior::SelectiveFailure(Target::Z1) => &[Role::S1],
            Behavior::ForgeFShare => &[Role::S1, Role::S2, Role::S3],
            Behavior::TamperReconstruction | Behavior::TamperAggregation => &[Role::S1, Role::S2],
            Behavior::MalformedDelta => &[Role::S3],
            Behavior::MalformedTriples => &[Role::S1, Role::S2, Role::S3],
        }
    }
}

/// How the selective-failure adversary picks the cancellation row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Guess {
    Random,
    Fixed(usize),
    /// The true destination, read from the test-only permutation view.
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub role: Role,
    pub behavior: Behavior,
    pub defense: DefenseMode,
    /// Shuffled entries `N`.
    pub rows: usize,
    /// Row receiving the error; random per trial if unset.
    pub q: Option<usize>,
    pub guess: Guess,
    /// Error added to a tampered element; random nonzero per trial if unset.
    pub delta: Option<u128>,
    /// Hash-commit the `f` shares before revealing them.
    pub commit: bool,
    /// Tamper the share block after its commitment rather than before.
    pub after_commit: bool,
    /// Amount added to one model coordinate.
    pub perturb: f64,
}

impl AttackSpec {
    pub fn new(role: Role, behavior: Behavior, defense: DefenseMode, rows: usize) -> Self {
        AttackSpec {
            role,
            behavior,
            defense,
            rows,
            q: None,
            guess: Guess::Random,
            delta: None,
            commit: true,
            after_commit: false,
            perturb: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Param(m));
        if !self.behavior.roles().contains(&self.role) {
            return bad(format!("{} cannot be mounted by {}", self.behavior.name(), self.role));
        }
        if self.rows < 2 {
            return bad(format!("need at least 2 shuffled rows, got {}", self.rows));
        }
        for (name, v) in [("q", self.q), ("p", self.fixed_guess())] {
            if let Some(v) = v {
                if v >= self.rows {
                    return bad(format!("{name} = {v} out of range for N = {}", self.rows));
                }
            }
        }
        if self.delta.is_some_and(|d| FieldElem::new(d).is_zero()) {
            return bad("delta must be nonzero in the field".into());
        }
        if self.behavior == Behavior::ForgeFShare && self.role == Role::S3 && self.defense != DefenseMode::Full {
            return bad("S3 only takes part in the in-shuffle checks".into());
        }
        if self.guess == Guess::Oracle && !cfg!(any(test, feature = "oracle")) {
            return Err(Error::Usage("oracle guesses need the `oracle` feature".into()));
        }
        Ok(())
    }

    fn fixed_guess(&self) -> Option<usize> {
        match self.guess {
            Guess::Fixed(p) => Some(p),
            _ => None,
        }
    }

    /// The check whose `f` share the forger negates.
    fn forged_check(&self) -> CheckId {
        match self.role {
            Role::S3 => CheckId::Z2,
            _ => CheckId::PostShuffle,
        }
    }

    /// Training parameters of one trial: one iteration with `N` clients
    /// holding one sample each.
    pub fn trial_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            n: self.rows,
            r: 4,
            s: 1,
            k: (self.rows / 4).max(1),
            t: 1,
            clip: 1.0,
            epsilon0: 2.0,
            d: TRIAL_DIM,
            diameter: 4.0,
            mode: Mode::Compressed,
            seed,
            bits: DEFAULT_BITS,
            defense: self.defense.name().to_string(),
            margin: 1.0,
            noise: 0.5,
            commit: self.commit,
        }
    }
}

const TRIAL_DIM: usize = 4;

/// One trial's attack state.
pub struct Attack<'a> {
    spec: &'a AttackSpec,
    q: usize,
    p: usize,
    u: FieldElem,
    /// Random index, reduced modulo whatever length the hook sees.
    pick: u64,
    bit: u32,
    target: Option<usize>,
}

impl<'a> Attack<'a> {
    pub fn draw<R: Rng + ?Sized>(spec: &'a AttackSpec, rng: &mut R) -> Self {
        let q = spec.q.unwrap_or_else(|| rng.random_range(0..spec.rows));
        let p = spec.fixed_guess().unwrap_or_else(|| rng.random_range(0..spec.rows));
        let u = match spec.delta {
            Some(d) => FieldElem::new(d),
            None => loop {
                let u = FieldElem::random(rng);
                if !u.is_zero() {
                    break u;
                }
            },
        };
        Attack { spec, q, p, u, pick: rng.random(), bit: rng.random_range(0..127), target: None }
    }

    fn is(&self, behavior: Behavior, role: Role) -> bool {
        self.spec.behavior == behavior && self.spec.role == role
    }

    fn selective(&self, target: Target, role: Role) -> bool {
        self.is(Behavior::SelectiveFailure(target), role)
    }

    /// Adds `u` to the first payload element of `row`. An error in the
    /// payload moves the batched MAC sum by a key-dependent amount, so only
    /// an exact cancellation in the same row restores it.
    fn bump(&self, rows: &mut Rows, row: usize) {
        rows.row_mut(row)[1] += self.u;
    }

    fn pick(&self, len: usize) -> usize {
        (self.pick % len as u64) as usize
    }
}

impl Deviation for Attack<'_> {
    fn tamper_delta(&mut self, delta: &mut Rows) {
        if self.is(Behavior::MalformedDelta, Role::S3) {
            let i = self.pick(delta.flat().len());
            delta.flat_mut()[i] += self.u;
        }
    }

    fn tamper_triples(&mut self, dealer: Role, _check: CheckId, c: &mut [FieldElem]) {
        if self.is(Behavior::MalformedTriples, dealer) {
            let i = self.pick(c.len());
            c[i] += self.u;
        }
    }

    fn tamper_z2(&mut self, z2: &mut Rows) {
        if self.selective(Target::Z2, Role::S2) {
            self.bump(z2, self.q);
        }
    }

    fn tamper_z1(&mut self, z1: &mut Rows) {
        if self.selective(Target::Z1, Role::S1) {
            self.bump(z1, self.q);
        }
    }

    fn tamper_reshare(&mut self, from: Role, check: CheckId, share: &mut Rows) {
        if self.is(Behavior::ForgeFShare, from) && from == Role::S3 && check == CheckId::Z2 {
            self.bump(share, 0);
        }
    }

    fn tamper_output(&mut self, role: Role, share: &mut Rows) {
        let cancel = match role {
            Role::S2 => self.selective(Target::Z2, role),
            Role::S1 => self.selective(Target::Z1, role),
            _ => false,
        };
        if cancel {
            let p = if self.spec.guess == Guess::Oracle { self.target.unwrap_or(self.p) } else { self.p };
            self.p = p;
            share.row_mut(p)[1] -= self.u;
        }
        if self.is(Behavior::ForgeFShare, role) {
            // The last row lies outside the sampled block, so nothing
            // downstream sees it if the forgery succeeds.
            let last = share.len() - 1;
            self.bump(share, last);
        }
    }

    fn rushes(&self, role: Role, check: CheckId) -> bool {
        self.is(Behavior::ForgeFShare, role) && check == self.spec.forged_check()
    }

    fn forge_f_share(&mut self, role: Role, check: CheckId, own: FieldElem, other: Option<FieldElem>) -> FieldElem {
        match other {
            Some(other) if self.rushes(role, check) => -other,
            _ => own,
        }
    }

    fn tamper_block_before_commit(&mut self, role: Role, block: &mut Rows) {
        if self.is(Behavior::TamperReconstruction, role) && !self.spec.after_commit {
            self.flip(block);
        }
    }

    fn tamper_block_after_commit(&mut self, role: Role, block: &mut Rows) {
        if self.is(Behavior::TamperReconstruction, role) && self.spec.after_commit {
            self.flip(block);
        }
    }

    fn tamper_model(&mut self, role: Role, theta: &mut [f64]) {
        if self.is(Behavior::TamperAggregation, role) {
            theta[0] += self.spec.perturb;
        }
    }

    fn observe_permutation(&mut self, corr: &Correlation) {
        self.target = match self.spec.behavior {
            Behavior::SelectiveFailure(Target::Z2) => Some(corr.s1.pi1.then(&corr.s2.pi2).destination_of(self.q)),
            Behavior::SelectiveFailure(Target::Z1) => Some(corr.s2.pi2.destination_of(self.q)),
            _ => None,
        };
    }
}

impl Attack<'_> {
    fn flip(&self, block: &mut Rows) {
        let i = self.pick(block.flat().len());
        let x = &mut block.flat_mut()[i];
        *x = FieldElem::new(x.value() ^ (1u128 << self.bit));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialOutcome {
    pub abort: Option<Abort>,
    pub q: usize,
    /// The cancellation row actually used.
    pub p: usize,
    /// True destination of the error, known only with the permutation view.
    pub target: Option<usize>,
}

impl TrialOutcome {
    pub fn detected(&self) -> bool {
        self.abort.is_some()
    }
}

/// Names accepted by [`named_specs`].
pub const SCENARIO_NAMES: [&str; 8] = [
    "honest",
    "selective-failure",
    "forge",
    "reconstruction",
    "aggregation",
    "malformed-delta",
    "malformed-triples",
    "matrix",
];

/// Built-in groups of attack cells.
pub fn named_specs(name: &str, defense: DefenseMode, rows: usize) -> Option<Vec<AttackSpec>> {
    let cell = |role, behavior| AttackSpec::new(role, behavior, defense, rows);
    let specs = match name.replace('_', "-").as_str() {
        "honest" => vec![cell(Role::S1, Behavior::Honest)],
        "selective-failure" => vec![
            cell(Role::S2, Behavior::SelectiveFailure(Target::Z2)),
            cell(Role::S1, Behavior::SelectiveFailure(Target::Z1)),
        ],
        "forge" => {
            let mut v = vec![cell(Role::S1, Behavior::ForgeFShare), cell(Role::S2, Behavior::ForgeFShare)];
            if defense == DefenseMode::Full {
                v.push(cell(Role::S3, Behavior::ForgeFShare));
            }
            v
        }
        "reconstruction" => [false, true]
            .into_iter()
            .flat_map(|after| {
                [Role::S1, Role::S2].map(|r| AttackSpec { after_commit: after, ..cell(r, Behavior::TamperReconstruction) })
            })
            .collect(),
        "aggregation" => vec![cell(Role::S1, Behavior::TamperAggregation), cell(Role::S2, Behavior::TamperAggregation)],
        "malformed-delta" => vec![cell(Role::S3, Behavior::MalformedDelta)],
        "malformed-triples" => Role::SERVERS.map(|r| cell(r, Behavior::MalformedTriples)).to_vec(),
        "matrix" => SCENARIO_NAMES[1..7]
            .iter()
            .flat_map(|n| named_specs(n, defense, rows).expect("known name"))
            .collect(),
        _ => return None,
    };
    Some(specs)
}

/// Every malicious cell.
pub fn attack_matrix(defense: DefenseMode, rows: usize) -> Vec<AttackSpec> {
    named_specs("matrix", defense, rows).expect("known name")
}

/// The task every trial trains on.
pub fn trial_task(spec: &AttackSpec, seed: u64) -> SyntheticLogistic {
    SyntheticLogistic::generate(TRIAL_DIM, spec.rows, 4, 1.0, 0.5, seed)
}

/// Runs trial number `trial` under master seed `seed`.
pub fn run_trial(spec: &AttackSpec, task: &dyn Task, seed: u64, trial: u64) -> Result<TrialOutcome, Error> {
    spec.validate()?;
    let mut rng = derive_rng(seed, "attack/trial", &[trial]);
    let cfg = spec.trial_config(rng.random());
    let mut attack = Attack::draw(spec, &mut rng);
    let mut net = Network::in_process();
    let result = run_training(&cfg, task, &mut net, &mut attack, Execution::Sequential)?;
    Ok(TrialOutcome { abort: result.abort, q: attack.q, p: attack.p, target: attack.target })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub spec: AttackSpec,
    pub trials: usize,
    pub detected: usize,
    /// Detections per check.
    pub by_check: BTreeMap<&'static str, usize>,
}

impl AttackReport {
    pub fn escapes(&self) -> usize {
        self.trials - self.detected
    }

    pub fn escape_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.escapes() as f64 / self.trials as f64
        }
    }
}

/// Runs independent trials, in parallel when `exec` allows.
pub fn run_trials(spec: &AttackSpec, trials: usize, seed: u64, exec: Execution) -> Result<(AttackReport, Vec<TrialOutcome>), Error> {
    spec.validate()?;
    let task = trial_task(spec, seed);
    let outcomes = exec.try_map_indexed(trials, |i| run_trial(spec, &task, seed, i as u64))?;
    let mut by_check = BTreeMap::new();
    for a in outcomes.iter().filter_map(|o| o.abort) {
        *by_check.entry(a.check.name()).or_insert(0) += 1;
    }
    let detected = outcomes.iter().filter(|o| o.detected()).count();
    Ok((AttackReport { spec: spec.clone(), trials, detected, by_check }, outcomes))
}

/// CSV with one row per report.
pub fn reports_to_csv(reports: &[AttackReport]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["behavior", "trials", "detected", "escape_rate", "role", "defense", "checks"]).map_err(io)?;
    for r in reports {
        let checks: Vec<String> = r.by_check.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        w.write_record([
            r.spec.behavior.name().to_string(),
            r.trials.to_string(),
            r.detected.to_string(),
            format!("{:.6}", r.escape_rate()),
            r.spec.role.to_string(),
            r.spec.defense.name().to_string(),
            checks.join(";"),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn default_rows() -> usize {
    16
}

fn default_trials() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

fn default_perturb() -> f64 {
    1e-9
}

fn default_defense() -> String {
    DefenseMode::Full.name().to_string()
}

/// One `[[attack]]` table of a scenario file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub role: String,
    pub behavior: String,
    #[serde(default = "default_defense")]
    pub defense: String,
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub q: Option<usize>,
    /// A row index, or the strings "random" / "oracle".
    pub p: Option<toml::Value>,
    pub delta: Option<u64>,
    #[serde(default = "default_true")]
    pub commit: bool,
    #[serde(default)]
    pub after_commit: bool,
    #[serde(default = "default_perturb")]
    pub perturb: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    attack: Vec<ScenarioEntry>,
}

/// A spec with its trial count and master seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub spec: AttackSpec,
    pub trials: usize,
    pub seed: u64,
}

impl ScenarioEntry {
    pub fn to_scenario(&self) -> Result<Scenario, Error> {
        let usage = |m: String| Error::Usage(m);
        let role = Role::parse(&self.role).ok_or_else(|| usage(format!("unknown role '{}'", self.role)))?;
        let behavior = Behavior::parse(&self.behavior).ok_or_else(|| usage(format!("unknown behavior '{}'", self.behavior)))?;
        let defense = DefenseMode::parse(&self.defense).ok_or_else(|| usage(format!("unknown defense '{}'", self.defense)))?;
        let guess = match &self.p {
            None => Guess::Random,
            Some(toml::Value::String(s)) if s == "random" => Guess::Random,
            Some(toml::Value::String(s)) if s == "oracle" => Guess::Oracle,
            Some(toml::Value::Integer(i)) if *i >= 0 => Guess::Fixed(*i as usize),
            Some(v) => return Err(usage(format!("p must be an index, \"random\" or \"oracle\", got {v}"))),
        };
        let spec = AttackSpec {
            role,
            behavior,
            defense,
            rows: self.rows,
            q: self.q,
            guess,
            delta: self.delta.map(u128::from),
            commit: self.commit,
            after_commit: self.after_commit,
            perturb: self.perturb,
        };
        spec.validate()?;
        Ok(Scenario { spec, trials: self.trials, seed: self.seed })
    }
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, Error> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Usage(format!("scenario: {e}")))?;
    file.attack.iter().map(ScenarioEntry::to_scenario).collect()
}

#[cfg(test)]
mod tests;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use camel_core::accountant::{
    bounds_to_csv, compare_bounds, compose_rdp, conversion_overhead, per_iter_rdp, rdp_to_dp,
    subsample_amplify, CompareGrid, PrivacyLedger, ShuffleBound,
};
use camel_core::adversary::{
    named_specs, parse_scenarios, reports_to_csv, run_trials, Attack, AttackSpec, Behavior, Scenario, SCENARIO_NAMES,
};
use camel_core::deviation::{Deviation, Honest};
use camel_core::error::Error;
use camel_core::exec::Execution;
use camel_core::fl::{run_training, Mode, SyntheticLogistic, TrainConfig};
use camel_core::ldp::{unbiasedness_oracle, LdpParams, DEFAULT_BITS};
use camel_core::mac::entry_width;
use camel_core::rng::derive_rng;
use camel_core::shuffle::{measure_shuffle, DefenseMode, ShuffleOptions};
use camel_core::transport::{Network, Phase, Role};
use rand_distr::{Distribution, StandardNormal};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "camel", version, about = "Shuffle-model federated learning experiments")]
struct Cli {
    /// Worker threads for parallel sections; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// The three privacy bounds for one training setup.
    Bounds(BoundsArgs),
    /// Per-iteration amplification by shuffling and subsampling.
    Amplify(AmplifyArgs),
    /// The composed RDP curve and its conversion, one row per order.
    Compose(AmplifyArgs),
    /// The three bounds over a parameter grid.
    Compare(CompareArgs),
    /// Metered cost of the verifiable shuffle on random entries.
    ShuffleBench(ShuffleBenchArgs),
    /// Runs attack trials and reports detection rates.
    Attack(AttackArgs),
    /// Monte Carlo statistics of gradient compression.
    LdpStats(LdpStatsArgs),
    /// Trains on the synthetic task.
    Train(TrainArgs),
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    epsilon0: f64,
    /// Total data points M; each iteration samples γM of them.
    #[arg(long)]
    n: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long = "T")]
    t: usize,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value = "bbgn19")]
    bound: String,
}

#[derive(Args, Debug)]
struct AmplifyArgs {
    #[arg(long)]
    epsilon0: f64,
    /// Shuffled messages per iteration.
    #[arg(long)]
    n: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long = "T", default_value_t = 1)]
    t: usize,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value = "bbgn19")]
    bound: String,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',')]
    epsilon0: Option<Vec<f64>>,
    /// Shuffled messages per iteration.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long = "T", value_delimiter = ',')]
    t: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value = "bbgn19")]
    bound: String,
}

#[derive(Args, Debug)]
struct ShuffleBenchArgs {
    /// Shuffled entries.
    #[arg(long, value_delimiter = ',', default_value = "400")]
    n: Vec<usize>,
    #[arg(long, default_value = "compressed")]
    mode: String,
    /// Gradient dimensions; only the vec mode depends on them.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    d: Vec<usize>,
    #[arg(long, default_value = "full")]
    defense: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Send every frame through loopback TCP instead of in-process queues.
    #[arg(long)]
    socket: bool,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// A built-in scenario name or a scenario TOML file.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    defense: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Shuffled entries N.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the hash commitments on f shares.
    #[arg(long)]
    no_commit: bool,
}

#[derive(Args, Debug)]
struct LdpStatsArgs {
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon0: f64,
    #[arg(long, default_value_t = 0.5)]
    clip: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BITS)]
    bits: u32,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the per-channel meter report as CSV.
    #[arg(long)]
    meter_out: Option<PathBuf>,
    /// Writes the final model, one coordinate per line.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Runs one corrupted server with this behavior.
    #[arg(long)]
    attack: Option<String>,
    #[arg(long, default_value = "S2")]
    attack_role: String,
}

fn header(command: &str, seed: Option<u64>, bound: Option<&str>, extra: &[(&str, String)]) -> String {
    let mut h = format!(
        "# camel {VERSION} command={command} seed={} bound={}",
        seed.map_or("none".to_string(), |s| s.to_string()),
        bound.unwrap_or("none")
    );
    for (k, v) in extra {
        let _ = write!(h, " {k}={v}");
    }
    h.push('\n');
    h
}

fn parse_bound(name: &str) -> Result<ShuffleBound, Error> {
    ShuffleBound::parse(name).ok_or_else(|| Error::Usage(format!("unknown bound '{name}'")))
}

fn parse_defense(name: &str) -> Result<DefenseMode, Error> {
    DefenseMode::parse(name).ok_or_else(|| Error::Usage(format!("unknown defense '{name}'")))
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn bounds(a: &BoundsArgs) -> Result<String, Error> {
    let bound = parse_bound(&a.bound)?;
    let ledger = PrivacyLedger::new(a.epsilon0, a.delta, a.gamma, a.n, a.gamma * a.n, a.t, bound)?;
    let (conv, amp) = ledger.rdp_epsilon()?;
    let mut out = header(
        "bounds",
        None,
        Some(bound.name()),
        &[
            ("epsilon0", a.epsilon0.to_string()),
            ("n", a.n.to_string()),
            ("gamma", a.gamma.to_string()),
            ("T", a.t.to_string()),
            ("delta", a.delta.to_string()),
        ],
    );
    out.push_str("rdp,shuffle_subsample_ac,shuffle_ac,epsilon_tilde,lambda,fallback\n");
    let _ = writeln!(
        out,
        "{:.6},{:.6},{:.6},{:.6},{:.4},{}",
        conv.epsilon,
        ledger.shuffle_subsample_ac()?.0,
        ledger.shuffle_ac()?.0,
        amp.epsilon_tilde,
        conv.lambda,
        amp.fallback
    );
    Ok(out)
}

fn amplify_header(command: &str, a: &AmplifyArgs, bound: ShuffleBound) -> String {
    header(
        command,
        None,
        Some(bound.name()),
        &[
            ("epsilon0", a.epsilon0.to_string()),
            ("n", a.n.to_string()),
            ("gamma", a.gamma.to_string()),
            ("T", a.t.to_string()),
            ("delta", a.delta.to_string()),
        ],
    )
}

fn ledger_for(a: &AmplifyArgs, bound: ShuffleBound) -> Result<PrivacyLedger, Error> {
    PrivacyLedger::new(a.epsilon0, a.delta, a.gamma, a.n / a.gamma, a.n, a.t, bound)
}

fn amplify(a: &AmplifyArgs) -> Result<String, Error> {
    let bound = parse_bound(&a.bound)?;
    let ledger = ledger_for(a, bound)?;
    let amp = ledger.amplify_or_fallback()?;
    let (e, d) = subsample_amplify(amp.epsilon_tilde, ledger.delta_tilde, a.gamma);
    let mut out = amplify_header("amplify", a, bound);
    out.push_str("epsilon_tilde,delta_tilde,epsilon_subsampled,delta_subsampled,fallback\n");
    let _ = writeln!(out, "{:.6},{:e},{:.6},{:e},{}", amp.epsilon_tilde, ledger.delta_tilde, e, d, amp.fallback);
    Ok(out)
}

fn compose(a: &AmplifyArgs) -> Result<String, Error> {
    let bound = parse_bound(&a.bound)?;
    let ledger = ledger_for(a, bound)?;
    let amp = ledger.amplify_or_fallback()?;
    let per = |l: f64| per_iter_rdp(l, amp.epsilon_tilde, a.gamma);
    let total = compose_rdp(per, a.t);
    let delta = ledger.conversion_delta();
    let conv = rdp_to_dp(&total, &ledger.grid, delta)?;
    let mut out = amplify_header("compose", a, bound);
    out.push_str("lambda,rdp_per_iter,rdp_total,epsilon\n");
    for &l in ledger.grid.points() {
        let _ = writeln!(out, "{l},{:e},{:e},{:.6}", per(l), total(l), total(l) + conversion_overhead(l, delta));
    }
    let _ = writeln!(out, "# epsilon={:.6} lambda={:.4} widened={} fallback={}", conv.epsilon, conv.lambda, conv.widened, amp.fallback);
    Ok(out)
}

fn compare(a: &CompareArgs, exec: Execution) -> Result<String, Error> {
    let mut grid = CompareGrid { delta: a.delta, bound: parse_bound(&a.bound)?, ..Default::default() };
    if let Some(v) = &a.epsilon0 {
        grid.epsilon0 = v.clone();
    }
    if let Some(v) = &a.n {
        grid.n = v.clone();
    }
    if let Some(v) = &a.gamma {
        grid.gamma = v.clone();
    }
    if let Some(v) = &a.t {
        grid.t = v.clone();
    }
    let rows = compare_bounds(&grid, exec)?;
    let mut out = header(
        "compare",
        None,
        Some(grid.bound.name()),
        &[
            ("epsilon0", list(&grid.epsilon0)),
            ("n", list(&grid.n)),
            ("gamma", list(&grid.gamma)),
            ("T", list(&grid.t)),
        ],
    );
    out.push_str(&bounds_to_csv(&rows, grid.bound, grid.delta)?);
    Ok(out)
}

fn shuffle_bench(a: &ShuffleBenchArgs) -> Result<String, Error> {
    let mode = Mode::parse(&a.mode).ok_or_else(|| Error::Usage(format!("unknown mode '{}'", a.mode)))?;
    let defense = parse_defense(&a.defense)?;
    let opts = ShuffleOptions { defense, ..Default::default() };
    let mut out = header(
        "shuffle-bench",
        Some(a.seed),
        None,
        &[
            ("n", list(&a.n)),
            ("mode", mode.name().into()),
            ("d", list(&a.d)),
            ("defense", defense.name().into()),
            ("socket", a.socket.to_string()),
        ],
    );
    out.push_str("n,mode,d,l,entry_width,bytes_offline,bytes_online,rounds,millis\n");
    let dims: Vec<usize> = match mode {
        Mode::Compressed => a.d.iter().take(1).copied().collect(),
        Mode::Vec => a.d.clone(),
    };
    for &n in &a.n {
        for &d in &dims {
            let l = match mode {
                Mode::Compressed => 2,
                Mode::Vec => d,
            };
            let mut net = if a.socket { Network::socket() } else { Network::in_process() };
            let c = measure_shuffle(&mut net, n, l, opts, a.seed)?;
            let _ = writeln!(
                out,
                "{n},{},{d},{l},{},{},{},{},{:.3}",
                mode.name(),
                entry_width(l),
                c.meter.bytes(Phase::Offline),
                c.meter.bytes(Phase::Online),
                c.meter.total_rounds(),
                c.elapsed.as_secs_f64() * 1e3
            );
        }
    }
    Ok(out)
}

fn attack(a: &AttackArgs, exec: Execution) -> Result<String, Error> {
    let defense = a.defense.as_deref().map(parse_defense).transpose()?;
    let seed = a.seed.unwrap_or(0);
    let mut scenarios: Vec<Scenario> = match named_specs(&a.scenario, defense.unwrap_or_default(), a.rows.unwrap_or(16)) {
        Some(specs) => specs.into_iter().map(|spec| Scenario { spec, trials: a.trials.unwrap_or(1000), seed }).collect(),
        None => {
            let path = Path::new(&a.scenario);
            if !path.is_file() {
                return Err(Error::Usage(format!(
                    "scenario '{}' is neither a file nor one of {}",
                    a.scenario,
                    SCENARIO_NAMES.join(", ")
                )));
            }
            let mut sc = parse_scenarios(&std::fs::read_to_string(path)?)?;
            for s in sc.iter_mut() {
                if let Some(d) = defense {
                    s.spec.defense = d;
                }
                if let Some(t) = a.trials {
                    s.trials = t;
                }
                if let Some(r) = a.rows {
                    s.spec.rows = r;
                }
                if let Some(seed) = a.seed {
                    s.seed = seed;
                }
            }
            sc
        }
    };
    for s in scenarios.iter_mut() {
        if a.no_commit {
            s.spec.commit = false;
        }
    }
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        reports.push(run_trials(&s.spec, s.trials, s.seed, exec)?.0);
    }
    let mut out = header(
        "attack",
        Some(seed),
        None,
        &[
            ("scenario", a.scenario.clone()),
            ("defense", defense.map_or("file".into(), |d| d.name().to_string())),
            ("trials", a.trials.map_or("file".into(), |t| t.to_string())),
            ("rows", a.rows.map_or("default".into(), |r| r.to_string())),
            ("commit", (!a.no_commit).to_string()),
        ],
    );
    out.push_str(&reports_to_csv(&reports)?);
    Ok(out)
}

fn ldp_stats(a: &LdpStatsArgs, exec: Execution) -> Result<String, Error> {
    let params = LdpParams::with_bits(a.epsilon0, a.clip, a.d, a.bits)?;
    let mut rng = derive_rng(a.seed, "ldp-stats/input", &[]);
    let mut x: Vec<f64> = (0..a.d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v *= a.clip / len);
    let mc = unbiasedness_oracle(&x, &params, a.trials, a.seed, exec)?;
    let m = params.magnitude()?;
    let err = mc.mean.iter().zip(&x).map(|(g, v)| (g - v) * (g - v)).sum::<f64>().sqrt();
    let mut out = header(
        "ldp-stats",
        Some(a.seed),
        None,
        &[
            ("d", a.d.to_string()),
            ("epsilon0", a.epsilon0.to_string()),
            ("clip", a.clip.to_string()),
            ("trials", a.trials.to_string()),
            ("bits", a.bits.to_string()),
        ],
    );
    out.push_str("magnitude,mean_error,mean_error_bound,mse,mse_bound\n");
    let _ = writeln!(out, "{m:.6},{err:.6},{:.6},{:.6},{:.6}", 3.0 * m / (a.trials as f64).sqrt(), mc.mse, params.variance_bound()?);
    Ok(out)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn train(a: &TrainArgs, exec: Execution) -> Result<(String, Option<Error>), Error> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", a.config.display())))?;
    let mut cfg = TrainConfig::from_toml(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let task = SyntheticLogistic::generate(cfg.d, cfg.n, cfg.r, cfg.margin, cfg.noise, cfg.seed);
    let spec = match &a.attack {
        Some(name) => {
            let behavior = Behavior::parse(name).ok_or_else(|| Error::Usage(format!("unknown behavior '{name}'")))?;
            let role = Role::parse(&a.attack_role).ok_or_else(|| Error::Usage(format!("unknown role '{}'", a.attack_role)))?;
            let defense = cfg.defense_mode().expect("validated");
            let spec = AttackSpec::new(role, behavior, defense, cfg.shuffled());
            spec.validate()?;
            Some(spec)
        }
        None => None,
    };
    let mut rng = derive_rng(cfg.seed, "train/attack", &[]);
    let mut attack = spec.as_ref().map(|s| Attack::draw(s, &mut rng));
    let dev: &mut dyn Deviation = match attack.as_mut() {
        Some(a) => a,
        None => &mut Honest,
    };
    let mut net = Network::in_process();
    let result = run_training(&cfg, &task, &mut net, dev, exec)?;

    let mut out = header(
        "train",
        Some(cfg.seed),
        None,
        &[
            ("config", a.config.display().to_string()),
            ("attack", a.attack.clone().unwrap_or_else(|| "none".into())),
            ("attack_role", a.attack_role.clone()),
        ],
    );
    for line in cfg.to_toml().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(&result.to_csv()?);
    let _ = writeln!(out, "# model_digest={}", hex(&result.model_digest()));
    let _ = writeln!(
        out,
        "# bytes_offline={} bytes_online={} bytes_broadcast={}",
        result.meter.bytes(Phase::Offline),
        result.meter.bytes(Phase::Online),
        result.meter.bytes(Phase::Broadcast)
    );
    if let Some(path) = &a.meter_out {
        std::fs::write(path, result.meter.to_csv()?)?;
    }
    if let Some(path) = &a.model_out {
        let body: String = result.state.theta.iter().map(|v| format!("{v:?}\n")).collect();
        std::fs::write(path, body)?;
    }
    Ok((out, result.abort.map(Error::Abort)))
}

fn run(cli: &Cli) -> Result<(String, Option<Error>), Error> {
    let exec = match cli.jobs {
        Some(0) => return Err(Error::Usage("--jobs must be at least 1".into())),
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    let plain = |r: Result<String, Error>| r.map(|s| (s, None));
    match &cli.command {
        Command::Bounds(a) => plain(bounds(a)),
        Command::Amplify(a) => plain(amplify(a)),
        Command::Compose(a) => plain(compose(a)),
        Command::Compare(a) => plain(compare(a, exec)),
        Command::ShuffleBench(a) => plain(shuffle_bench(a)),
        Command::Attack(a) => plain(attack(a, exec)),
        Command::LdpStats(a) => plain(ldp_stats(a, exec)),
        Command::Train(a) => train(a, exec),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Abort(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok((out, late)) => {
            print!("{out}");
            match late {
                Some(e) => {
                    eprintln!("camel: {e}");
                    ExitCode::from(exit_code(&e))
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("camel: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

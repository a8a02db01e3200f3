//! Federated training: client rounds, the verifiable shuffle, sampled
//! reconstruction, and the cross-checked model update.

mod config;
mod task;

pub use config::{gradient_bound, Mode, TrainConfig};
pub use task::{SyntheticLogistic, Task};

use rand::seq::index::sample;
use rand::Rng;

use crate::deviation::Deviation;
use crate::error::{Abort, AbortReason, CheckId, Error};
use crate::exec::Execution;
use crate::field::FieldElem;
use crate::hash::{hash_digest, Digest};
use crate::ldp::{clip, noisy_grad_cmpr, noisy_grad_dcmp, norm, LdpParams};
use crate::mac::{client_package, decode_compressed, encode_compressed, MacEntry, PartyUpload, SharedMacEntry};
use crate::rng::{derive_rng, ServerRngs};
use crate::rows::Rows;
use crate::shuffle::{shuffle_offline, shuffle_online, DefenseMode, ShuffleOutput};
use crate::transport::{pad_to_block, Meter, MsgKind, Network, Phase, Role};

/// Fixed-point scale for vector-mode payloads.
pub const FIXED_POINT_SCALE: f64 = (1u64 << 24) as f64;

const BLOCK_TAG: &[u8] = b"camel/share-block";
const MODEL_TAG: &[u8] = b"camel/model";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub theta: Vec<f64>,
    pub iteration: usize,
}

/// What happened in one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTranscript {
    pub iteration: usize,
    /// Training loss after the update; the previous loss if the round aborted.
    pub loss: f64,
    pub meter: Meter,
    /// Checks that passed, in protocol order.
    pub passed: Vec<CheckId>,
    pub abort: Option<Abort>,
}

#[derive(Clone, Debug)]
pub struct TrainingResult {
    pub state: ModelState,
    pub rounds: Vec<RoundTranscript>,
    /// Loss at `θ0`, then after every completed iteration.
    pub losses: Vec<f64>,
    pub meter: Meter,
    pub abort: Option<Abort>,
}

impl TrainingResult {
    pub fn model_digest(&self) -> Digest {
        model_digest(&self.state.theta)
    }

    /// CSV with columns `iteration, loss, bytes_offline, bytes_online, abort`.
    pub fn to_csv(&self) -> Result<String, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
        w.write_record(["iteration", "loss", "bytes_offline", "bytes_online", "abort"]).map_err(csv_err)?;
        w.write_record(["0", &self.losses[0].to_string(), "0", "0", ""]).map_err(csv_err)?;
        for r in &self.rounds {
            w.write_record([
                r.iteration.to_string(),
                r.loss.to_string(),
                r.meter.bytes(Phase::Offline).to_string(),
                r.meter.bytes(Phase::Online).to_string(),
                r.abort.map(|a| a.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

pub fn encode_fixed(v: &[f64]) -> Vec<FieldElem> {
    v.iter().map(|x| FieldElem::from_i64((x * FIXED_POINT_SCALE).round() as i64)).collect()
}

pub fn decode_fixed(elems: &[FieldElem]) -> Result<Vec<f64>, Error> {
    elems
        .iter()
        .map(|e| {
            e.to_i64()
                .map(|v| v as f64 / FIXED_POINT_SCALE)
                .ok_or_else(|| Error::Malformed(format!("fixed-point element {} out of range", e.value())))
        })
        .collect()
}

/// One client's work for an iteration: sample `s` of its points, clip and
/// perturb each gradient, then MAC and share the result.
pub fn client_round<R: Rng + ?Sized>(
    task: &dyn Task,
    client: usize,
    theta: &[f64],
    cfg: &TrainConfig,
    ldp: &LdpParams,
    rng: &mut R,
) -> Result<Vec<SharedMacEntry>, Error> {
    let r = task.points(client);
    if cfg.s > r {
        return Err(Error::Param(format!("s = {} exceeds the {r} points of client {client}", cfg.s)));
    }
    let picked = sample(rng, r, cfg.s);
    picked
        .iter()
        .map(|idx| {
            let g = clip(&task.gradient(theta, client, idx), cfg.clip);
            let compressed = noisy_grad_cmpr(&g, ldp, rng)?;
            let payload = match cfg.mode {
                Mode::Compressed => encode_compressed(&compressed),
                Mode::Vec => encode_fixed(&noisy_grad_dcmp(&compressed, ldp)?),
            };
            Ok(client_package(&payload, rng))
        })
        .collect()
}

/// Sends every client's bundles to S1 and S2 (one frame per client and
/// server) and assembles the servers' input shares.
pub fn upload(net: &mut Network, bundles: &[Vec<SharedMacEntry>], l: usize) -> Result<(Rows, Rows), Error> {
    for bundle in bundles {
        let to_s1: Vec<u8> = bundle.iter().flat_map(|e| e.s1.to_bytes()).collect();
        let to_s2: Vec<u8> = bundle.iter().flat_map(|e| e.s2.to_bytes()).collect();
        net.send(Role::Client, Role::S1, MsgKind::ClientShare, "client_share", to_s1)?;
        net.send(Role::Client, Role::S2, MsgKind::ClientShare, "client_share", to_s2)?;
    }
    let width = crate::mac::entry_width(l);
    let mut shares = [Vec::new(), Vec::new()];
    for (slot, server) in [Role::S1, Role::S2].into_iter().enumerate() {
        for _ in bundles {
            let bytes = net.recv(Role::Client, server, MsgKind::ClientShare)?;
            let each = PartyUpload::wire_bytes(l);
            if bytes.is_empty() || bytes.len() % each != 0 {
                return Err(Error::Protocol {
                    channel: format!("Client->{server}"),
                    detail: format!("client upload of {} bytes", bytes.len()),
                });
            }
            for chunk in bytes.chunks(each) {
                shares[slot].extend(PartyUpload::from_bytes(chunk, l)?.expand_row());
            }
        }
    }
    let [a, b] = shares;
    Ok((Rows::from_flat(width, a), Rows::from_flat(width, b)))
}

fn block_digest(block: &Rows) -> Digest {
    hash_digest(BLOCK_TAG, &block.to_bytes())
}

fn recv_digest(net: &mut Network, from: Role, to: Role, kind: MsgKind) -> Result<Digest, Error> {
    let bytes = net.recv(from, to, kind)?;
    bytes.try_into().map_err(|_| Error::Protocol {
        channel: format!("{from}->{to}"),
        detail: "digest is not 32 bytes".into(),
    })
}

fn abort(net: &mut Network, from: Role, check: CheckId, reason: AbortReason) -> Error {
    let a = Abort::new(check, reason);
    match net.send_abort(from, a) {
        Ok(()) => Error::Abort(a),
        Err(e) => e,
    }
}

/// Both servers commit to their shares of the first `b` shuffled entries,
/// reveal them, cross-check the commitments and verify every entry's MAC.
pub fn sample_and_reconstruct(
    net: &mut Network,
    out: &ShuffleOutput,
    b: usize,
    dev: &mut dyn Deviation,
) -> Result<Vec<MacEntry>, Error> {
    if b > out.s1.len() {
        return Err(Error::Usage(format!("cannot sample {b} of {} entries", out.s1.len())));
    }
    let width = out.s1.width();
    let mut blocks = [out.s1.head(b), out.s2.head(b)];
    let roles = [Role::S1, Role::S2];
    for p in 0..2 {
        dev.tamper_block_before_commit(roles[p], &mut blocks[p]);
        net.send(roles[p], roles[1 - p], MsgKind::BlockHashCommit, "block_commit", block_digest(&blocks[p]).to_vec())?;
    }
    let mut commits = [[0u8; 32]; 2];
    for p in 0..2 {
        commits[p] = recv_digest(net, roles[p], roles[1 - p], MsgKind::BlockHashCommit)?;
    }
    for p in 0..2 {
        dev.tamper_block_after_commit(roles[p], &mut blocks[p]);
        net.send_rows(roles[p], roles[1 - p], MsgKind::BlockReveal, "block_share", &blocks[p])?;
    }
    let mut revealed = Vec::with_capacity(2);
    for p in 0..2 {
        let peer = net.recv_rows(roles[p], roles[1 - p], MsgKind::BlockReveal, width)?;
        // Checked by the receiver, roles[1 - p].
        if peer.len() != b || block_digest(&peer) != commits[p] {
            return Err(abort(net, roles[1 - p], CheckId::ShareReveal, AbortReason::DigestMismatch));
        }
        revealed.push(peer);
    }
    let mut entries = Vec::new();
    for p in 0..2 {
        let view = &blocks[1 - p] + &revealed[p];
        let parsed: Vec<MacEntry> = view.iter().map(MacEntry::from_row).collect();
        if !parsed.iter().all(MacEntry::is_valid) {
            return Err(abort(net, roles[1 - p], CheckId::EntryMac, AbortReason::MacMismatch));
        }
        entries = parsed;
    }
    Ok(entries)
}

/// `θ` rescaled onto the ball of radius `D/2` if it lies outside.
pub fn project(theta: &[f64], diameter: f64) -> Vec<f64> {
    let radius = diameter / 2.0;
    let n = norm(theta);
    if n > radius {
        theta.iter().map(|v| v * radius / n).collect()
    } else {
        theta.to_vec()
    }
}

pub fn model_digest(theta: &[f64]) -> Digest {
    let bytes: Vec<u8> = theta.iter().flat_map(|v| v.to_le_bytes()).collect();
    hash_digest(MODEL_TAG, &bytes)
}

/// Decompresses one verified entry.
pub fn decode_entry(entry: &MacEntry, mode: Mode, ldp: &LdpParams) -> Result<Vec<f64>, Error> {
    match mode {
        Mode::Compressed => noisy_grad_dcmp(&decode_compressed(&entry.payload)?, ldp),
        Mode::Vec => decode_fixed(&entry.payload),
    }
}

/// One server's update: decompress, average, step and project.
pub fn server_update(
    entries: &[MacEntry],
    theta: &[f64],
    eta: f64,
    cfg: &TrainConfig,
    ldp: &LdpParams,
    exec: Execution,
) -> Result<Vec<f64>, Error> {
    if entries.is_empty() {
        return Err(Error::Usage("no entries to aggregate".into()));
    }
    let grads = exec.try_map_indexed(entries.len(), |i| decode_entry(&entries[i], cfg.mode, ldp))?;
    let mut mean = vec![0.0; theta.len()];
    for g in &grads {
        if g.len() != theta.len() {
            return Err(Error::Malformed(format!("gradient of dimension {} for model of {}", g.len(), theta.len())));
        }
        mean.iter_mut().zip(g).for_each(|(m, v)| *m += v);
    }
    let b = grads.len() as f64;
    let stepped: Vec<f64> = theta.iter().zip(&mean).map(|(t, m)| t - eta * m / b).collect();
    Ok(project(&stepped, cfg.diameter))
}

/// Both servers update independently and exchange model hashes. Returns the
/// two models as they stand before the broadcast.
#[allow(clippy::too_many_arguments)]
pub fn decompress_aggregate_update(
    net: &mut Network,
    entries: &[MacEntry],
    theta: &[f64],
    eta: f64,
    cfg: &TrainConfig,
    ldp: &LdpParams,
    dev: &mut dyn Deviation,
    exec: Execution,
) -> Result<[Vec<f64>; 2], Error> {
    let roles = [Role::S1, Role::S2];
    let mut models = [Vec::new(), Vec::new()];
    for p in 0..2 {
        models[p] = server_update(entries, theta, eta, cfg, ldp, exec)?;
        dev.tamper_model(roles[p], &mut models[p]);
        net.send(roles[p], roles[1 - p], MsgKind::ModelHashCommit, "model_hash", model_digest(&models[p]).to_vec())?;
    }
    for p in 0..2 {
        let got = recv_digest(net, roles[p], roles[1 - p], MsgKind::ModelHashCommit)?;
        if got != model_digest(&models[1 - p]) {
            return Err(abort(net, roles[1 - p], CheckId::ModelHash, AbortReason::DigestMismatch));
        }
    }
    Ok(models)
}

fn encode_model(theta: &[f64]) -> Vec<u8> {
    pad_to_block(theta.iter().flat_map(|v| v.to_le_bytes()).collect())
}

/// S1 and S2 each send their model to every client, who compares the two.
pub fn broadcast(net: &mut Network, models: [Vec<f64>; 2], clients: usize, dev: &mut dyn Deviation) -> Result<(), Error> {
    let prev = net.phase();
    net.set_phase(Phase::Broadcast);
    let roles = [Role::S1, Role::S2];
    let mut payloads = [Vec::new(), Vec::new()];
    for p in 0..2 {
        let mut theta = models[p].clone();
        dev.tamper_broadcast(roles[p], &mut theta);
        payloads[p] = encode_model(&theta);
    }
    for _ in 0..clients {
        for p in 0..2 {
            net.send(roles[p], Role::Client, MsgKind::ModelBroadcast, "model", payloads[p].clone())?;
        }
        let a = net.recv(Role::S1, Role::Client, MsgKind::ModelBroadcast)?;
        let b = net.recv(Role::S2, Role::Client, MsgKind::ModelBroadcast)?;
        if a != b {
            return Err(abort(net, Role::Client, CheckId::Broadcast, AbortReason::DigestMismatch));
        }
    }
    net.set_phase(prev);
    Ok(())
}

/// One iteration `t ≥ 1` from model `theta`. Pushes each passed check to
/// `passed` as it completes.
#[allow(clippy::too_many_arguments)]
pub fn train_round(
    net: &mut Network,
    cfg: &TrainConfig,
    task: &dyn Task,
    theta: &[f64],
    t: usize,
    dev: &mut dyn Deviation,
    exec: Execution,
    passed: &mut Vec<CheckId>,
) -> Result<Vec<f64>, Error> {
    let ldp = cfg.ldp()?;
    let opts = cfg.shuffle_options().ok_or_else(|| Error::Param(format!("unknown defense '{}'", cfg.defense)))?;
    let defense = opts.defense;
    let l = cfg.payload_len();
    let mut rngs = ServerRngs::derive(cfg.seed, &[t as u64]);

    let mut prep = shuffle_offline(net, cfg.shuffled(), l, &mut rngs, dev, opts)?;
    #[cfg(any(test, feature = "oracle"))]
    dev.observe_permutation(&prep.corr);

    net.set_phase(Phase::Online);
    let bundles = exec.try_map_indexed(cfg.n, |i| {
        let mut rng = derive_rng(cfg.seed, "client", &[t as u64, i as u64]);
        client_round(task, i, theta, cfg, &ldp, &mut rng)
    })?;
    let (x1, x2) = upload(net, &bundles, l)?;
    drop(bundles);

    let out = shuffle_online(net, &mut prep, &x1, &x2, &mut rngs, dev, opts)?;
    if defense == DefenseMode::Full {
        passed.extend([CheckId::Z2, CheckId::Z1]);
    }
    passed.push(CheckId::PostShuffle);
    drop(prep);

    let entries = sample_and_reconstruct(net, &out, cfg.batch(), dev)?;
    passed.extend([CheckId::ShareReveal, CheckId::EntryMac]);
    drop(out);

    let models = decompress_aggregate_update(net, &entries, theta, cfg.eta(t), cfg, &ldp, dev, exec)?;
    passed.push(CheckId::ModelHash);
    let theta_next = models[0].clone();
    broadcast(net, models, cfg.n, dev)?;
    passed.push(CheckId::Broadcast);
    Ok(theta_next)
}

fn check_task(cfg: &TrainConfig, task: &dyn Task) -> Result<(), Error> {
    cfg.validate()?;
    if task.dim() != cfg.d || task.clients() != cfg.n {
        return Err(Error::Param(format!(
            "task has {} clients of dimension {}, config has n = {}, d = {}",
            task.clients(),
            task.dim(),
            cfg.n,
            cfg.d
        )));
    }
    Ok(())
}

/// Runs `T` iterations. An abort ends training early and is reported in the
/// result; other errors are returned.
pub fn run_training(
    cfg: &TrainConfig,
    task: &dyn Task,
    net: &mut Network,
    dev: &mut dyn Deviation,
    exec: Execution,
) -> Result<TrainingResult, Error> {
    check_task(cfg, task)?;
    let mut theta = vec![0.0; cfg.d];
    let mut losses = vec![task.loss(&theta)];
    let mut rounds = Vec::with_capacity(cfg.t);
    let mut total = Meter::default();
    let mut abort = None;

    // θ0 goes out to the clients before the first iteration.
    broadcast(net, [theta.clone(), theta.clone()], cfg.n, dev)?;
    let (m, _) = net.take_records();
    total.merge(&m);

    for t in 1..=cfg.t {
        let mut passed = Vec::new();
        let result = train_round(net, cfg, task, &theta, t, dev, exec, &mut passed);
        let (meter, _) = net.take_records();
        total.merge(&meter);
        match result {
            Ok(next) => {
                theta = next;
                let loss = task.loss(&theta);
                losses.push(loss);
                rounds.push(RoundTranscript { iteration: t, loss, meter, passed, abort: None });
            }
            Err(Error::Abort(a)) => {
                abort = Some(a);
                let loss = *losses.last().expect("initial loss");
                rounds.push(RoundTranscript { iteration: t, loss, meter, passed, abort: Some(a) });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let iteration = rounds.iter().filter(|r| r.abort.is_none()).count();
    Ok(TrainingResult { state: ModelState { theta, iteration }, rounds, losses, meter: total, abort })
}

/// Projected SGD on the same task with exact clipped gradients, the same
/// sampling shape and `η_t = D/(L·sqrt(t))`.
pub fn run_noiseless(cfg: &TrainConfig, task: &dyn Task) -> Result<Vec<f64>, Error> {
    check_task(cfg, task)?;
    let mut theta = vec![0.0; cfg.d];
    let mut losses = vec![task.loss(&theta)];
    for t in 1..=cfg.t {
        let mut rng = derive_rng(cfg.seed, "noiseless", &[t as u64]);
        let mut pool = Vec::with_capacity(cfg.shuffled());
        for c in 0..cfg.n {
            for idx in sample(&mut rng, task.points(c), cfg.s) {
                pool.push((c, idx));
            }
        }
        let picked = sample(&mut rng, pool.len(), cfg.batch());
        let mut mean = vec![0.0; cfg.d];
        for i in picked.iter() {
            let (c, idx) = pool[i];
            let g = clip(&task.gradient(&theta, c, idx), cfg.clip);
            mean.iter_mut().zip(&g).for_each(|(m, v)| *m += v / cfg.batch() as f64);
        }
        let eta = cfg.diameter / (cfg.clip * (t as f64).sqrt());
        let stepped: Vec<f64> = theta.iter().zip(&mean).map(|(a, m)| a - eta * m).collect();
        theta = project(&stepped, cfg.diameter);
        losses.push(task.loss(&theta));
    }
    Ok(losses)
}

/// Means of consecutive windows of `window` values (the last may be shorter).
pub fn block_means(values: &[f64], window: usize) -> Vec<f64> {
    values.chunks(window.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

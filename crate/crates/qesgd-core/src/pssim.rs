//! Deterministic synchronous parameter-server simulation.
//!
//! One server, `p` workers, in-memory queues, zero loss, a barrier per
//! round. Per epoch the server broadcasts the anchor `w_t`; each round every
//! worker pushes the un-averaged gradient sum over its slice of the global
//! batch, the server aggregates in ascending worker id, updates and
//! quantizes the displacement `z`, and broadcasts the encoded `z`.
//!
//! Sample draws come from a single global stream partitioned to workers
//! round-robin by draw index, so the worker count is a pure parallelization
//! knob: the global batch composition is identical for every `p`, and the
//! trajectory matches the single-process QESGD run (bitwise for `p = 1`,
//! where even the floating-point summation order coincides).
//!
//! # Byte model
//!
//! Every message is metered at its modeled wire size:
//!
//! - `PushGradient` / `BroadcastEpochAnchor`: 16-byte header + `4 d` bytes
//!   (dense little-endian IEEE-754 binary32 payload)
//! - `BroadcastZ`: exactly the quantized-vector codec bytes
//!   (`19 + ceil(d b / 8)`); the codec frame is self-describing, so the model
//!   charges no extra header for it
//!
//! Broadcasts are charged once per recipient. The simulation itself passes
//! full-precision values (the z broadcast is decoded from its actual codec
//! bytes, which is lossless; dense payloads model an f32 transport without
//! perturbing the arithmetic), so metering never changes results.
//!
//! Message logs can be exported as a binary trace: a sequence of
//! length-prefixed encoded messages, each a 16-byte header
//! `(tag u8, sender u8, reserved u16, dim u32, round u64)` followed by the
//! body as above.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::math;
use crate::optim::{RecordMode, RunError, TrajectoryRecord, TrajectoryRow};
use crate::problems::ProblemSpec;
use crate::quant::{self, QuantGrid};
use crate::rng::{RandomSource, STREAM_QUANT, STREAM_SAMPLING};
use crate::schedule::{AveragingMode, EpochParams, ScheduleParams};
use crate::wire::{self, CodecError};

/// Modeled message-header size for dense (non-codec) messages.
pub const MESSAGE_HEADER_LEN: usize = 16;

const TAG_PUSH: u8 = 0x01;
const TAG_BROADCAST_Z: u8 = 0x02;
const TAG_ANCHOR: u8 = 0x03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("expected {expected} worker pushes, got {got}")]
    WrongPushCount { expected: u32, got: u32 },
    #[error("missing push from worker {0}")]
    MissingWorker(u32),
    #[error("duplicate push from worker {0}")]
    DuplicateWorker(u32),
    #[error("message for round {got}, expected round {expected}")]
    RoundMismatch { expected: u64, got: u64 },
    #[error("unexpected message variant")]
    UnexpectedVariant,
    #[error("gradient has dimension {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("broadcast payload failed to decode: {0}")]
    Decode(#[from] CodecError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace truncated")]
    Truncated,
    #[error("unknown message tag {0:#04x}")]
    BadTag(u8),
    #[error("frame length {0} inconsistent with message body")]
    BadFrame(usize),
}

/// A typed protocol message.
///
/// Dense vectors are held in full precision in memory; their wire encoding
/// models a binary32 transport. `BroadcastZ` carries the exact codec bytes.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Worker -> server: un-averaged gradient sum over the worker's batch.
    PushGradient {
        worker: u32,
        round: u64,
        grad: Vec<f64>,
    },
    /// Server -> workers: the quantized displacement, encoded.
    BroadcastZ { round: u64, payload: Vec<u8> },
    /// Server -> workers: the next epoch anchor.
    BroadcastEpochAnchor { epoch: u64, anchor: Vec<f64> },
}

impl Message {
    /// The modeled wire size used for byte accounting.
    pub fn wire_size(&self) -> usize {
        match self {
            Message::PushGradient { grad, .. } => MESSAGE_HEADER_LEN + 4 * grad.len(),
            Message::BroadcastZ { payload, .. } => payload.len(),
            Message::BroadcastEpochAnchor { anchor, .. } => MESSAGE_HEADER_LEN + 4 * anchor.len(),
        }
    }

    fn header(tag: u8, sender: u8, dim: u32, round: u64) -> [u8; MESSAGE_HEADER_LEN] {
        let mut h = [0u8; MESSAGE_HEADER_LEN];
        h[0] = tag;
        h[1] = sender;
        // h[2..4] reserved
        h[4..8].copy_from_slice(&dim.to_le_bytes());
        h[8..16].copy_from_slice(&round.to_le_bytes());
        h
    }

    /// Trace encoding: 16-byte header plus body.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Message::PushGradient { worker, round, grad } => {
                let mut out =
                    Self::header(TAG_PUSH, *worker as u8, grad.len() as u32, *round).to_vec();
                for &v in grad {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                out
            }
            Message::BroadcastZ { round, payload } => {
                let dim = wire::decode(payload).map(|qv| qv.dim()).unwrap_or(0) as u32;
                let mut out = Self::header(TAG_BROADCAST_Z, 0, dim, *round).to_vec();
                out.extend_from_slice(payload);
                out
            }
            Message::BroadcastEpochAnchor { epoch, anchor } => {
                let mut out = Self::header(TAG_ANCHOR, 0, anchor.len() as u32, *epoch).to_vec();
                for &v in anchor {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                out
            }
        }
    }

    /// Decode one trace-encoded message. Dense payloads come back at
    /// binary32 precision, as transported.
    pub fn decode(bytes: &[u8]) -> Result<Self, TraceError> {
        if bytes.len() < MESSAGE_HEADER_LEN {
            return Err(TraceError::Truncated);
        }
        let tag = bytes[0];
        let sender = bytes[1];
        let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let round = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let body = &bytes[MESSAGE_HEADER_LEN..];
        let dense = |body: &[u8]| -> Result<Vec<f64>, TraceError> {
            if body.len() != 4 * dim {
                return Err(TraceError::BadFrame(body.len()));
            }
            Ok(body
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect())
        };
        match tag {
            TAG_PUSH => Ok(Message::PushGradient {
                worker: sender as u32,
                round,
                grad: dense(body)?,
            }),
            TAG_BROADCAST_Z => Ok(Message::BroadcastZ {
                round,
                payload: body.to_vec(),
            }),
            TAG_ANCHOR => Ok(Message::BroadcastEpochAnchor {
                epoch: round,
                anchor: dense(body)?,
            }),
            other => Err(TraceError::BadTag(other)),
        }
    }
}

/// Serialize a message log as length-prefixed frames.
pub fn encode_trace(messages: &[Message]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in messages {
        let bytes = m.encode();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn decode_trace(bytes: &[u8]) -> Result<Vec<Message>, TraceError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if pos + 4 > bytes.len() {
            return Err(TraceError::Truncated);
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        pos += 4;
        if pos + len > bytes.len() {
            return Err(TraceError::Truncated);
        }
        out.push(Message::decode(&bytes[pos..pos + len])?);
        pos += len;
    }
    Ok(out)
}

/// Per-round byte usage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundBytes {
    pub epoch: u64,
    pub round: u64,
    pub uplink: u64,
    pub downlink: u64,
}

/// Cumulative communication counters, never reset mid-run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ByteMeter {
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub push_messages: u64,
    pub broadcast_z_messages: u64,
    pub broadcast_z_bytes: u64,
    pub anchor_messages: u64,
    pub anchor_bytes: u64,
    pub dim: usize,
    pub workers: u32,
    pub rounds: Vec<RoundBytes>,
}

impl ByteMeter {
    pub fn new(dim: usize, workers: u32) -> Self {
        Self {
            dim,
            workers,
            ..Self::default()
        }
    }

    /// Meter one message, counted once per recipient.
    pub fn record(&mut self, message: &Message, recipients: u64) {
        let size = message.wire_size() as u64 * recipients;
        match message {
            Message::PushGradient { .. } => {
                self.uplink_bytes += size;
                self.push_messages += recipients;
            }
            Message::BroadcastZ { .. } => {
                self.downlink_bytes += size;
                self.broadcast_z_messages += recipients;
                self.broadcast_z_bytes += size;
            }
            Message::BroadcastEpochAnchor { .. } => {
                self.downlink_bytes += size;
                self.anchor_messages += recipients;
                self.anchor_bytes += size;
            }
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.uplink_bytes + self.downlink_bytes
    }
}

/// The ideal epoch-time speedup of a `bits`-wide downlink against a 32-bit
/// one, when one epoch costs one uplink plus one downlink: `2 / (1 + b/32)`.
pub fn ideal_speedup(bits: u8) -> f64 {
    2.0 / (1.0 + bits as f64 / 32.0)
}

/// Byte ratios of a metered run against the full-precision model that sends
/// dense 32-bit vectors wherever the run sent quantized ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommunicationReport {
    /// Measured `BroadcastZ` bytes over their full-precision equivalents.
    pub broadcast_z_ratio: f64,
    /// All downlink bytes over the full-precision downlink.
    pub downlink_ratio: f64,
    /// Total traffic over full-precision total traffic.
    pub total_ratio: f64,
    /// `2 / (1 + bits/32)` for the configured downlink width.
    pub ideal_speedup: f64,
}

/// Compare metered traffic to the full-precision byte model.
pub fn communication_report(meter: &ByteMeter, bits: u8) -> CommunicationReport {
    let dense = (MESSAGE_HEADER_LEN + 4 * meter.dim) as f64;
    let z_full = meter.broadcast_z_messages as f64 * dense;
    let downlink_full = z_full + meter.anchor_bytes as f64;
    let total_full = meter.uplink_bytes as f64 + downlink_full;
    CommunicationReport {
        broadcast_z_ratio: meter.broadcast_z_bytes as f64 / z_full,
        downlink_ratio: meter.downlink_bytes as f64 / downlink_full,
        total_ratio: meter.total_bytes() as f64 / total_full,
        ideal_speedup: ideal_speedup(bits),
    }
}

/// Server side of one epoch: the anchor, the quantized displacement, and the
/// running displacement sum that forms the next anchor.
#[derive(Debug, Clone)]
pub struct ServerState {
    w: Vec<f64>,
    z: Vec<f64>,
    sum_z: Vec<f64>,
    epoch: u64,
    round_in_epoch: u64,
    global_round: u64,
    epoch_params: EpochParams,
    grid: QuantGrid,
    averaging: AveragingMode,
    workers: u32,
    global_batch: usize,
}

impl ServerState {
    fn begin_epoch(
        w: Vec<f64>,
        epoch: u64,
        global_round: u64,
        epoch_params: EpochParams,
        averaging: AveragingMode,
        workers: u32,
        global_batch: usize,
    ) -> Result<Self, ProtocolError> {
        let d = w.len();
        let grid = QuantGrid::new(epoch_params.delta, epoch_params.bits).map_err(RunError::from)?;
        Ok(Self {
            w,
            z: vec![0.0; d],
            sum_z: vec![0.0; d],
            epoch,
            round_in_epoch: 0,
            global_round,
            epoch_params,
            grid,
            averaging,
            workers,
            global_batch,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn current_round(&self) -> u64 {
        self.global_round
    }

    /// The iterate the server currently implies, `w_t + z`.
    pub fn current_iterate(&self) -> Vec<f64> {
        self.w.iter().zip(self.z.iter()).map(|(a, b)| a + b).collect()
    }
}

/// Aggregate one round of pushes, update and quantize `z`, and emit the
/// broadcast. Pushes may arrive in any order but must contain exactly one
/// message per worker for the current round; aggregation itself runs in
/// ascending worker id so the reduction order is fixed.
pub fn server_round(
    state: &mut ServerState,
    pushes: &[Message],
    quant_rng: &mut RandomSource,
) -> Result<Message, ProtocolError> {
    let p = state.workers;
    if pushes.len() != p as usize {
        return Err(ProtocolError::WrongPushCount {
            expected: p,
            got: pushes.len() as u32,
        });
    }
    let d = state.w.len();
    let mut by_worker: Vec<Option<&Vec<f64>>> = vec![None; p as usize];
    for m in pushes {
        match m {
            Message::PushGradient { worker, round, grad } => {
                if *round != state.global_round {
                    return Err(ProtocolError::RoundMismatch {
                        expected: state.global_round,
                        got: *round,
                    });
                }
                if grad.len() != d {
                    return Err(ProtocolError::DimMismatch {
                        expected: d,
                        got: grad.len(),
                    });
                }
                let slot = by_worker
                    .get_mut(*worker as usize)
                    .ok_or(ProtocolError::MissingWorker(*worker))?;
                if slot.is_some() {
                    return Err(ProtocolError::DuplicateWorker(*worker));
                }
                *slot = Some(grad);
            }
            _ => return Err(ProtocolError::UnexpectedVariant),
        }
    }

    // Fixed reduction order, then the same divide-then-scale arithmetic as
    // the single-process batch oracle.
    let mut sum = vec![0.0; d];
    for (id, slot) in by_worker.iter().enumerate() {
        let grad = slot.ok_or(ProtocolError::MissingWorker(id as u32))?;
        for (acc, g) in sum.iter_mut().zip(grad.iter()) {
            *acc += g;
        }
    }
    let inv_b = 1.0 / state.global_batch as f64;
    for (zj, sj) in state.z.iter_mut().zip(sum.iter()) {
        let avg = sj * inv_b;
        *zj -= state.epoch_params.eta * avg;
    }
    let qv = quant::quantize_vector(&state.z, &state.grid, quant_rng).map_err(RunError::from)?;
    state.z = qv.decode();

    let is_last = state.round_in_epoch + 1 == state.epoch_params.inner_steps;
    match state.averaging {
        AveragingMode::IncludeAnchor if !is_last => math::axpy(1.0, &state.z, &mut state.sum_z),
        AveragingMode::ExcludeAnchor => math::axpy(1.0, &state.z, &mut state.sum_z),
        _ => {}
    }

    let message = Message::BroadcastZ {
        round: state.global_round,
        payload: wire::encode(&qv),
    };
    state.round_in_epoch += 1;
    state.global_round += 1;
    Ok(message)
}

/// One worker: holds the anchor and the last applied displacement.
#[derive(Debug, Clone)]
pub struct WorkerState {
    id: u32,
    w: Vec<f64>,
    z: Vec<f64>,
    round: u64,
}

impl WorkerState {
    pub fn new(id: u32, dim: usize) -> Self {
        Self {
            id,
            w: vec![0.0; dim],
            z: vec![0.0; dim],
            round: 0,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// Receive the epoch anchor: reset the displacement.
    pub fn apply_anchor(&mut self, message: &Message) -> Result<(), ProtocolError> {
        match message {
            Message::BroadcastEpochAnchor { anchor, .. } => {
                if anchor.len() != self.w.len() {
                    return Err(ProtocolError::DimMismatch {
                        expected: self.w.len(),
                        got: anchor.len(),
                    });
                }
                self.w.copy_from_slice(anchor);
                for z in self.z.iter_mut() {
                    *z = 0.0;
                }
                Ok(())
            }
            _ => Err(ProtocolError::UnexpectedVariant),
        }
    }
}

/// Apply the previous round's broadcast (if any; the first round of an epoch
/// starts from `z = 0`), then push the un-averaged gradient sum over the
/// local batch. An empty batch pushes a zero vector: the worker idles but
/// still participates in the barrier.
pub fn worker_round(
    state: &mut WorkerState,
    spec: &ProblemSpec,
    z_broadcast: Option<&Message>,
    batch: &[usize],
    round: u64,
) -> Result<Message, ProtocolError> {
    if let Some(message) = z_broadcast {
        match message {
            Message::BroadcastZ { round: msg_round, payload } => {
                if *msg_round + 1 != round {
                    return Err(ProtocolError::RoundMismatch {
                        expected: round.saturating_sub(1),
                        got: *msg_round,
                    });
                }
                let qv = wire::decode(payload)?;
                if qv.dim() != state.w.len() {
                    return Err(ProtocolError::DimMismatch {
                        expected: state.w.len(),
                        got: qv.dim(),
                    });
                }
                state.z = qv.decode();
            }
            _ => return Err(ProtocolError::UnexpectedVariant),
        }
    }
    state.round = round;
    let grad = if batch.is_empty() {
        vec![0.0; state.w.len()]
    } else {
        let u: Vec<f64> = state.w.iter().zip(state.z.iter()).map(|(a, b)| a + b).collect();
        spec.gradient_sum(&u, batch).map_err(RunError::from)?
    };
    Ok(Message::PushGradient {
        worker: state.id,
        round,
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributedOptions {
    pub record: RecordMode,
    /// Keep the full message log (enables trace export and meter audits).
    pub collect_log: bool,
}

impl Default for DistributedOptions {
    fn default() -> Self {
        Self {
            record: RecordMode::PerEpoch,
            collect_log: false,
        }
    }
}

/// Everything a distributed run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedRun {
    pub trajectory: TrajectoryRecord,
    pub meter: ByteMeter,
    /// Message log in send order; empty unless requested.
    pub log: Vec<Message>,
}

/// Run `epochs` of synchronous distributed QESGD with `workers` workers and
/// a global per-round batch of `global_batch` samples.
pub fn run_distributed(
    spec: &ProblemSpec,
    schedule: &ScheduleParams,
    epochs: u64,
    workers: u32,
    global_batch: usize,
    seed: u64,
    opts: &DistributedOptions,
) -> Result<DistributedRun, ProtocolError> {
    if workers == 0 || global_batch == 0 {
        return Err(ProtocolError::Run(RunError::InvalidBatchSize));
    }
    schedule.validate().map_err(RunError::from)?;
    let d = spec.dim();
    let n = spec.num_samples();
    let p = workers as usize;

    let mut idx_rng = RandomSource::new(seed, STREAM_SAMPLING);
    let mut quant_rng = RandomSource::new(seed, STREAM_QUANT);
    let mut meter = ByteMeter::new(d, workers);
    let mut log: Vec<Message> = Vec::new();
    let mut record = TrajectoryRecord::default();

    let mut w = vec![0.0; d];
    let mut worker_states: Vec<WorkerState> = (0..workers).map(|id| WorkerState::new(id, d)).collect();

    let mut grad_norm = math::norm2(&spec.full_gradient(&w).map_err(RunError::from)?);
    {
        let ep0 = schedule.epoch_params(0, Some(grad_norm)).map_err(RunError::from)?;
        push_anchor_row(&mut record, spec, &w, 0, &ep0, &meter)?;
    }

    let mut global_round = 0u64;
    for t in 0..epochs {
        let ep = schedule.epoch_params(t, Some(grad_norm)).map_err(RunError::from)?;

        let anchor_msg = Message::BroadcastEpochAnchor {
            epoch: t,
            anchor: w.clone(),
        };
        meter.record(&anchor_msg, workers as u64);
        for ws in worker_states.iter_mut() {
            ws.apply_anchor(&anchor_msg)?;
        }
        if opts.collect_log {
            log.push(anchor_msg);
        }

        let mut server = ServerState::begin_epoch(
            w.clone(),
            t,
            global_round,
            ep,
            schedule.averaging,
            workers,
            global_batch,
        )?;
        let mut prev_broadcast: Option<Message> = None;

        for k in 0..ep.inner_steps {
            // Global draws, partitioned round-robin by draw index.
            let mut batches: Vec<Vec<usize>> = vec![Vec::new(); p];
            for j in 0..global_batch {
                batches[j % p].push(idx_rng.next_index(n));
            }

            let round_uplink_before = meter.uplink_bytes;
            let round_downlink_before = meter.downlink_bytes;

            let mut pushes = Vec::with_capacity(p);
            for ws in worker_states.iter_mut() {
                let push = worker_round(ws, spec, prev_broadcast.as_ref(), &batches[ws.id as usize], global_round)?;
                meter.record(&push, 1);
                pushes.push(push);
            }
            if opts.collect_log {
                log.extend(pushes.iter().cloned());
            }

            let broadcast = server_round(&mut server, &pushes, &mut quant_rng)?;
            meter.record(&broadcast, workers as u64);
            if opts.collect_log {
                log.push(broadcast.clone());
            }

            meter.rounds.push(RoundBytes {
                epoch: t,
                round: k,
                uplink: meter.uplink_bytes - round_uplink_before,
                downlink: meter.downlink_bytes - round_downlink_before,
            });

            if opts.record == RecordMode::PerStep {
                let u = server.current_iterate();
                record.push(TrajectoryRow {
                    epoch: t,
                    inner: k + 1,
                    eta: ep.eta,
                    inner_steps: ep.inner_steps,
                    bits: ep.bits,
                    delta: ep.delta,
                    suboptimality: spec.suboptimality(&u).map_err(RunError::from)?,
                    grad_norm: math::norm2(&spec.full_gradient(&u).map_err(RunError::from)?),
                    uplink_bytes: meter.uplink_bytes,
                    downlink_bytes: meter.downlink_bytes,
                });
            }
            prev_broadcast = Some(broadcast);
            global_round += 1;
        }

        // Anchor update: w_{t+1} = w_t + mean of the epoch's displacements.
        let inv_k = 1.0 / ep.inner_steps as f64;
        for (wj, zj) in w.iter_mut().zip(server.sum_z.iter()) {
            *wj += zj * inv_k;
        }
        grad_norm = math::norm2(&spec.full_gradient(&w).map_err(RunError::from)?);
        push_anchor_row_known_grad(&mut record, spec, &w, t + 1, &ep, &meter, grad_norm)?;
    }

    record.set_final_w(w);
    Ok(DistributedRun {
        trajectory: record,
        meter,
        log,
    })
}

fn push_anchor_row(
    record: &mut TrajectoryRecord,
    spec: &ProblemSpec,
    w: &[f64],
    epoch: u64,
    ep: &EpochParams,
    meter: &ByteMeter,
) -> Result<(), ProtocolError> {
    let grad_norm = math::norm2(&spec.full_gradient(w).map_err(RunError::from)?);
    push_anchor_row_known_grad(record, spec, w, epoch, ep, meter, grad_norm)
}

fn push_anchor_row_known_grad(
    record: &mut TrajectoryRecord,
    spec: &ProblemSpec,
    w: &[f64],
    epoch: u64,
    ep: &EpochParams,
    meter: &ByteMeter,
    grad_norm: f64,
) -> Result<(), ProtocolError> {
    record.push(TrajectoryRow {
        epoch,
        inner: 0,
        eta: ep.eta,
        inner_steps: ep.inner_steps,
        bits: ep.bits,
        delta: ep.delta,
        suboptimality: spec.suboptimality(w).map_err(RunError::from)?,
        grad_norm,
        uplink_bytes: meter.uplink_bytes,
        downlink_bytes: meter.downlink_bytes,
    });
    record.push_anchor(w);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_synthetic, ProblemKind};

    fn small_spec() -> ProblemSpec {
        gen_synthetic(ProblemKind::Ridge, 30, 3, 4, 5.0, 0.1, 0.05).unwrap()
    }

    fn schedule_for(spec: &ProblemSpec) -> ScheduleParams {
        ScheduleParams::from_problem(spec, 0.5).unwrap()
    }

    #[test]
    fn ideal_speedup_values() {
        assert_eq!(ideal_speedup(8), 1.6);
        assert_eq!(ideal_speedup(32), 1.0);
        assert!((ideal_speedup(4) - 16.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn message_wire_sizes() {
        let push = Message::PushGradient {
            worker: 0,
            round: 0,
            grad: vec![0.0; 100],
        };
        assert_eq!(push.wire_size(), 16 + 400);
        let anchor = Message::BroadcastEpochAnchor {
            epoch: 0,
            anchor: vec![0.0; 100],
        };
        assert_eq!(anchor.wire_size(), 16 + 400);
    }

    #[test]
    fn trace_round_trips() {
        let spec = small_spec();
        let s = schedule_for(&spec);
        let run = run_distributed(
            &spec,
            &s,
            1,
            2,
            2,
            7,
            &DistributedOptions {
                collect_log: true,
                ..DistributedOptions::default()
            },
        )
        .unwrap();
        assert!(!run.log.is_empty());
        let trace = encode_trace(&run.log);
        let decoded = decode_trace(&trace).unwrap();
        assert_eq!(decoded.len(), run.log.len());
        // BroadcastZ frames are lossless; dense frames round-trip at f32.
        for (a, b) in run.log.iter().zip(decoded.iter()) {
            match (a, b) {
                (
                    Message::BroadcastZ { round: ra, payload: pa },
                    Message::BroadcastZ { round: rb, payload: pb },
                ) => {
                    assert_eq!(ra, rb);
                    assert_eq!(pa, pb);
                }
                (
                    Message::PushGradient { worker: wa, round: ra, grad: ga },
                    Message::PushGradient { worker: wb, round: rb, grad: gb },
                ) => {
                    assert_eq!((wa, ra), (wb, rb));
                    for (x, y) in ga.iter().zip(gb.iter()) {
                        assert_eq!(*x as f32, *y as f32);
                    }
                }
                (
                    Message::BroadcastEpochAnchor { epoch: ea, .. },
                    Message::BroadcastEpochAnchor { epoch: eb, .. },
                ) => assert_eq!(ea, eb),
                _ => panic!("variant mismatch"),
            }
        }
    }

    #[test]
    fn meter_matches_log_recomputation() {
        let spec = small_spec();
        let s = schedule_for(&spec);
        let workers = 3u64;
        let run = run_distributed(
            &spec,
            &s,
            2,
            3,
            3,
            9,
            &DistributedOptions {
                collect_log: true,
                ..DistributedOptions::default()
            },
        )
        .unwrap();
        let mut uplink = 0u64;
        let mut downlink = 0u64;
        for m in &run.log {
            match m {
                Message::PushGradient { .. } => uplink += m.wire_size() as u64,
                // Broadcasts are logged once but sent to every worker.
                _ => downlink += m.wire_size() as u64 * workers,
            }
        }
        assert_eq!(uplink, run.meter.uplink_bytes);
        assert_eq!(downlink, run.meter.downlink_bytes);
    }

    #[test]
    fn server_round_rejects_protocol_violations() {
        let spec = small_spec();
        let s = schedule_for(&spec);
        let ep = s.epoch_params(0, Some(1.0)).unwrap();
        let mut server =
            ServerState::begin_epoch(vec![0.0; 3], 0, 0, ep, s.averaging, 2, 2).unwrap();
        let mut q = RandomSource::new(0, STREAM_QUANT);

        let push = |worker, round| Message::PushGradient {
            worker,
            round,
            grad: vec![0.0; 3],
        };

        // Wrong count.
        let err = server_round(&mut server, &[push(0, 0)], &mut q).unwrap_err();
        assert!(matches!(err, ProtocolError::WrongPushCount { .. }));
        // Duplicate worker.
        let err = server_round(&mut server, &[push(0, 0), push(0, 0)], &mut q).unwrap_err();
        assert!(matches!(err, ProtocolError::DuplicateWorker(0)));
        // Round mismatch.
        let err = server_round(&mut server, &[push(0, 5), push(1, 5)], &mut q).unwrap_err();
        assert!(matches!(err, ProtocolError::RoundMismatch { .. }));
        // Out-of-range worker id.
        let err = server_round(&mut server, &[push(0, 0), push(7, 0)], &mut q).unwrap_err();
        assert!(matches!(err, ProtocolError::MissingWorker(7)));
        // Valid round goes through.
        assert!(server_round(&mut server, &[push(1, 0), push(0, 0)], &mut q).is_ok());
    }

    #[test]
    fn all_zero_gradients_leave_z_unchanged() {
        let spec = small_spec();
        let s = schedule_for(&spec);
        let ep = s.epoch_params(0, Some(1.0)).unwrap();
        let mut server =
            ServerState::begin_epoch(vec![0.0; 3], 0, 0, ep, s.averaging, 1, 1).unwrap();
        let mut q = RandomSource::new(0, STREAM_QUANT);
        let before = server.z.clone();
        let zero_push = Message::PushGradient {
            worker: 0,
            round: 0,
            grad: vec![0.0; 3],
        };
        // z = 0 is on-grid: re-quantization is exact and consumes no draws.
        let first_draw = q.clone().next_uniform();
        server_round(&mut server, &[zero_push], &mut q).unwrap();
        assert_eq!(server.z, before);
        assert_eq!(q.next_uniform(), first_draw);
    }

    #[test]
    fn empty_batch_worker_pushes_zeros() {
        let spec = small_spec();
        let mut ws = WorkerState::new(0, 3);
        let msg = worker_round(&mut ws, &spec, None, &[], 0).unwrap();
        match msg {
            Message::PushGradient { grad, .. } => assert_eq!(grad, vec![0.0; 3]),
            _ => panic!("expected push"),
        }
    }

    #[test]
    fn single_worker_single_sample_matches_batch_oracle() {
        let spec = small_spec();
        let mut ws = WorkerState::new(0, 3);
        let msg = worker_round(&mut ws, &spec, None, &[5], 0).unwrap();
        let expected = spec.gradient_sum(&[0.0; 3], &[5]).unwrap();
        match msg {
            Message::PushGradient { grad, .. } => assert_eq!(grad, expected),
            _ => panic!("expected push"),
        }
    }

    #[test]
    fn disjoint_batches_sum_to_union() {
        let spec = small_spec();
        let w = vec![0.1, -0.2, 0.3];
        let union: Vec<usize> = vec![1, 2, 3, 4];
        let g_union = spec.gradient_sum(&w, &union).unwrap();
        let g_a = spec.gradient_sum(&w, &[1, 3]).unwrap();
        let g_b = spec.gradient_sum(&w, &[2, 4]).unwrap();
        for j in 0..3 {
            assert!((g_union[j] - (g_a[j] + g_b[j])).abs() <= 1e-12);
        }
    }
}

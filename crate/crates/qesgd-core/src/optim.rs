//! Optimizer runs: SGD, Epoch-SGD, QESGD, and the QSGD baseline.
//!
//! Every run is a pure function of `(problem, schedules, seed)` and starts
//! from the zero vector. Sample indices are drawn uniformly with replacement
//! from the seed's sampling stream; stochastic-rounding draws come from a
//! separate quantization stream, so methods that share a seed see identical
//! sample sequences whether or not they quantize.
//!
//! The epoch methods share their update algebra:
//!
//! - Epoch-SGD runs `K_t` plain SGD steps at fixed `eta_t` from the anchor
//!   `w_t` and averages the inner iterates into the next anchor.
//! - QESGD performs the same steps on the displacement `z = u - w_t`,
//!   stochastically rounding `z` onto the `(delta_t, b_t)` grid after every
//!   step and rebuilding `u = w_t + z`, so only low-precision state would
//!   ever need to leave a server. The next anchor is `w_t` plus the averaged
//!   displacement, which is algebraically the same averaging rule.
//!
//! QSGD instead quantizes each stochastic gradient (grid step `delta = ||g||`
//! by default, or `||g|| / 2^(b-1)` as a finer variant) before a plain SGD
//! step; it is the gradient-compression baseline the parameter-compression
//! method is measured against.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::math;
use crate::problems::{ProblemError, ProblemSpec};
use crate::quant::{self, BucketDeltaRule, QuantError, QuantGrid};
use crate::rng::{RandomSource, STREAM_QUANT, STREAM_SAMPLING};
use crate::schedule::{AveragingMode, EtaRule, ScheduleError, ScheduleParams};

/// Marker bit width recorded for unquantized updates.
pub const FULL_PRECISION_BITS: u8 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error("batch size must be >= 1")]
    InvalidBatchSize,
}

/// One recorded point of a run.
///
/// Anchor rows have `inner == 0` and describe `w_t` (so `epoch = t`, with a
/// final row at `t = T`); per-step rows describe the inner iterate
/// `u_{t, inner}`. Byte counters are zero except in distributed runs, where
/// they are cumulative.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub epoch: u64,
    pub inner: u64,
    pub eta: f64,
    pub inner_steps: u64,
    pub bits: u8,
    pub delta: f64,
    pub suboptimality: f64,
    pub grad_norm: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

/// Append-only record of a run, ordered by `(epoch, inner)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    rows: Vec<TrajectoryRow>,
    anchors: Vec<Vec<f64>>,
    final_w: Vec<f64>,
}

impl TrajectoryRecord {
    /// Assemble a record from raw parts (for tooling that post-processes
    /// rows, e.g. overlaying a byte model).
    pub fn from_parts(rows: Vec<TrajectoryRow>, anchors: Vec<Vec<f64>>, final_w: Vec<f64>) -> Self {
        Self {
            rows,
            anchors,
            final_w,
        }
    }

    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    /// The final anchor vector.
    pub fn final_w(&self) -> &[f64] {
        &self.final_w
    }

    /// The anchor vectors, one per anchor row, for coordinate-level
    /// trajectory comparisons.
    pub fn anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    /// Anchor rows only (`inner == 0`), one per epoch boundary.
    pub fn anchor_rows(&self) -> impl Iterator<Item = &TrajectoryRow> {
        self.rows.iter().filter(|r| r.inner == 0)
    }

    /// `(t, suboptimality)` per anchor, the series the rate fits consume.
    pub fn epoch_series(&self) -> Vec<(u64, f64)> {
        self.anchor_rows().map(|r| (r.epoch, r.suboptimality)).collect()
    }

    pub fn final_suboptimality(&self) -> f64 {
        self.rows.last().map(|r| r.suboptimality).unwrap_or(f64::NAN)
    }

    pub(crate) fn push(&mut self, row: TrajectoryRow) {
        self.rows.push(row);
    }

    pub(crate) fn push_anchor(&mut self, w: &[f64]) {
        self.anchors.push(w.to_vec());
    }

    pub(crate) fn set_final_w(&mut self, w: Vec<f64>) {
        self.final_w = w;
    }
}

/// Row granularity. Per-step rows cost one full objective and gradient
/// evaluation per inner step; anchor rows one per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordMode {
    #[default]
    PerEpoch,
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub batch_size: usize,
    pub record: RecordMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            batch_size: 1,
            record: RecordMode::PerEpoch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QesgdOptions {
    pub batch_size: usize,
    pub record: RecordMode,
    /// Bucketed quantization of the displacement (the whole vector if unset).
    /// Bucket grids use the max-abs rule capped at the scheduled `delta_t`.
    pub bucket_size: Option<usize>,
    /// Disable to run the identity codec: the update becomes Epoch-SGD
    /// written in displacement form.
    pub quantize: bool,
}

impl Default for QesgdOptions {
    fn default() -> Self {
        Self {
            batch_size: 1,
            record: RecordMode::PerEpoch,
            bucket_size: None,
            quantize: true,
        }
    }
}

/// Grid-step choice for the QSGD baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QsgdDeltaVariant {
    /// `delta = ||g||`: the literal setting. Coarse on purpose; every
    /// coordinate lies within the first grid step.
    #[default]
    Literal,
    /// `delta = ||g|| / 2^(b-1)`: scales the span to the gradient norm.
    Scaled,
}

fn draw_batch(rng: &mut RandomSource, n: usize, batch_size: usize, buf: &mut Vec<usize>) {
    buf.clear();
    for _ in 0..batch_size {
        buf.push(rng.next_index(n));
    }
}

fn anchor_row(
    spec: &ProblemSpec,
    w: &[f64],
    epoch: u64,
    eta: f64,
    inner_steps: u64,
    bits: u8,
    delta: f64,
) -> Result<(TrajectoryRow, f64), RunError> {
    let suboptimality = spec.suboptimality(w)?;
    let grad_norm = math::norm2(&spec.full_gradient(w)?);
    Ok((
        TrajectoryRow {
            epoch,
            inner: 0,
            eta,
            inner_steps,
            bits,
            delta,
            suboptimality,
            grad_norm,
            uplink_bytes: 0,
            downlink_bytes: 0,
        },
        grad_norm,
    ))
}

#[allow(clippy::too_many_arguments)]
fn step_row(
    spec: &ProblemSpec,
    u: &[f64],
    epoch: u64,
    inner: u64,
    eta: f64,
    inner_steps: u64,
    bits: u8,
    delta: f64,
) -> Result<TrajectoryRow, RunError> {
    Ok(TrajectoryRow {
        epoch,
        inner,
        eta,
        inner_steps,
        bits,
        delta,
        suboptimality: spec.suboptimality(u)?,
        grad_norm: math::norm2(&spec.full_gradient(u)?),
        uplink_bytes: 0,
        downlink_bytes: 0,
    })
}

/// Plain mini-batch SGD: `w <- w - eta_step * mean_batch_gradient`.
///
/// Flat step indexing: row `epoch = s` describes `w` after `s` steps.
pub fn run_sgd(
    spec: &ProblemSpec,
    eta0: f64,
    eta_rule: EtaRule,
    batch_size: usize,
    total_steps: u64,
    seed: u64,
) -> Result<TrajectoryRecord, RunError> {
    if batch_size == 0 {
        return Err(RunError::InvalidBatchSize);
    }
    let d = spec.dim();
    let n = spec.num_samples();
    let mut idx_rng = RandomSource::new(seed, STREAM_SAMPLING);
    let mut w = vec![0.0; d];
    let mut batch = Vec::with_capacity(batch_size);
    let mut record = TrajectoryRecord::default();

    let step_eta = |s: u64| match eta_rule {
        EtaRule::OneOverT => eta0 / (s + 1) as f64,
        EtaRule::Constant => eta0,
    };

    record.push(step_row(spec, &w, 0, 0, step_eta(0), 1, FULL_PRECISION_BITS, 0.0)?);
    record.push_anchor(&w);
    for s in 0..total_steps {
        let eta = step_eta(s);
        draw_batch(&mut idx_rng, n, batch_size, &mut batch);
        let g = spec.stochastic_gradient(&w, &batch)?;
        math::axpy(-eta, &g, &mut w);
        record.push(step_row(spec, &w, s + 1, 0, eta, 1, FULL_PRECISION_BITS, 0.0)?);
        record.push_anchor(&w);
    }
    record.set_final_w(w);
    Ok(record)
}

/// Epoch-SGD: `K_t` fixed-rate SGD steps from the anchor, then the next
/// anchor is the average of the epoch's inner iterates.
pub fn run_epoch_sgd(
    spec: &ProblemSpec,
    schedule: &ScheduleParams,
    epochs: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<TrajectoryRecord, RunError> {
    if opts.batch_size == 0 {
        return Err(RunError::InvalidBatchSize);
    }
    schedule.validate()?;
    let d = spec.dim();
    let n = spec.num_samples();
    let mut idx_rng = RandomSource::new(seed, STREAM_SAMPLING);
    let mut w = vec![0.0; d];
    let mut batch = Vec::with_capacity(opts.batch_size);
    let mut record = TrajectoryRecord::default();

    let (row, _) = anchor_row(
        spec,
        &w,
        0,
        schedule.eta(0),
        schedule.inner_steps(0),
        FULL_PRECISION_BITS,
        0.0,
    )?;
    record.push(row);
    record.push_anchor(&w);

    for t in 0..epochs {
        let eta = schedule.eta(t);
        let k_t = schedule.inner_steps(t);
        let mut u = w.clone();
        // Sum of the iterates forming the next anchor; the anchor itself is
        // u_{t,0}, counted up front in the include-anchor mode.
        let mut sum_u = match schedule.averaging {
            AveragingMode::IncludeAnchor => u.clone(),
            AveragingMode::ExcludeAnchor => vec![0.0; d],
        };
        for k in 0..k_t {
            draw_batch(&mut idx_rng, n, opts.batch_size, &mut batch);
            let g = spec.stochastic_gradient(&u, &batch)?;
            math::axpy(-eta, &g, &mut u);
            let is_last = k + 1 == k_t;
            match schedule.averaging {
                AveragingMode::IncludeAnchor if !is_last => math::axpy(1.0, &u, &mut sum_u),
                AveragingMode::ExcludeAnchor => math::axpy(1.0, &u, &mut sum_u),
                _ => {}
            }
            if opts.record == RecordMode::PerStep {
                record.push(step_row(spec, &u, t, k + 1, eta, k_t, FULL_PRECISION_BITS, 0.0)?);
            }
        }
        let inv_k = 1.0 / k_t as f64;
        for j in 0..d {
            w[j] = sum_u[j] * inv_k;
        }
        let (row, _) = anchor_row(
            spec,
            &w,
            t + 1,
            eta,
            k_t,
            FULL_PRECISION_BITS,
            0.0,
        )?;
        record.push(row);
        record.push_anchor(&w);
    }
    record.set_final_w(w);
    Ok(record)
}

/// QESGD: Epoch-SGD on the displacement `z = u - w_t`, with `z`
/// stochastically rounded onto the `(delta_t, b_t)` grid after every step.
pub fn run_qesgd(
    spec: &ProblemSpec,
    schedule: &ScheduleParams,
    epochs: u64,
    seed: u64,
    opts: &QesgdOptions,
) -> Result<TrajectoryRecord, RunError> {
    if opts.batch_size == 0 {
        return Err(RunError::InvalidBatchSize);
    }
    schedule.validate()?;
    let d = spec.dim();
    let n = spec.num_samples();
    let mut idx_rng = RandomSource::new(seed, STREAM_SAMPLING);
    let mut quant_rng = RandomSource::new(seed, STREAM_QUANT);
    let mut w = vec![0.0; d];
    let mut batch = Vec::with_capacity(opts.batch_size);
    let mut record = TrajectoryRecord::default();

    let mut grad_norm = {
        let ep0 = schedule.epoch_params(0, Some(math::norm2(&spec.full_gradient(&w)?)))?;
        let (row, gn) = anchor_row(spec, &w, 0, ep0.eta, ep0.inner_steps, ep0.bits, ep0.delta)?;
        record.push(row);
        record.push_anchor(&w);
        gn
    };

    for t in 0..epochs {
        let ep = schedule.epoch_params(t, Some(grad_norm))?;
        let grid = QuantGrid::new(ep.delta, ep.bits)?;
        let mut z = vec![0.0; d];
        let mut zhat = vec![0.0; d];
        let mut u = w.clone();
        // z_{t,0} = 0 is part of the include-anchor average, so the running
        // sum starts at zero either way.
        let mut sum_z = vec![0.0; d];
        for k in 0..ep.inner_steps {
            draw_batch(&mut idx_rng, n, opts.batch_size, &mut batch);
            let g = spec.stochastic_gradient(&u, &batch)?;
            for j in 0..d {
                zhat[j] = z[j] - ep.eta * g[j];
            }
            if !opts.quantize {
                core::mem::swap(&mut z, &mut zhat);
            } else if let Some(bucket_size) = opts.bucket_size {
                let buckets = quant::quantize_bucketed(
                    &zhat,
                    bucket_size,
                    ep.bits,
                    &BucketDeltaRule::MaxAbsCapped(ep.delta),
                    &mut quant_rng,
                )?;
                z = quant::decode_buckets(&buckets);
            } else {
                z = quant::quantize_vector(&zhat, &grid, &mut quant_rng)?.decode();
            }
            for j in 0..d {
                u[j] = w[j] + z[j];
            }
            let is_last = k + 1 == ep.inner_steps;
            match schedule.averaging {
                AveragingMode::IncludeAnchor if !is_last => math::axpy(1.0, &z, &mut sum_z),
                AveragingMode::ExcludeAnchor => math::axpy(1.0, &z, &mut sum_z),
                _ => {}
            }
            if opts.record == RecordMode::PerStep {
                record.push(step_row(spec, &u, t, k + 1, ep.eta, ep.inner_steps, ep.bits, ep.delta)?);
            }
        }
        let inv_k = 1.0 / ep.inner_steps as f64;
        for j in 0..d {
            w[j] += sum_z[j] * inv_k;
        }
        let (row, gn) = anchor_row(spec, &w, t + 1, ep.eta, ep.inner_steps, ep.bits, ep.delta)?;
        record.push(row);
        record.push_anchor(&w);
        grad_norm = gn;
    }
    record.set_final_w(w);
    Ok(record)
}

fn qsgd_step(
    spec: &ProblemSpec,
    w: &mut [f64],
    eta: f64,
    bits: u8,
    variant: QsgdDeltaVariant,
    batch: &[usize],
    quant_rng: &mut RandomSource,
) -> Result<f64, RunError> {
    let g = spec.stochastic_gradient(w, batch)?;
    let g_norm = math::norm2(&g);
    if g_norm == 0.0 {
        // A zero gradient quantizes to zero: no movement, no draws.
        return Ok(0.0);
    }
    let delta = match variant {
        QsgdDeltaVariant::Literal => g_norm,
        QsgdDeltaVariant::Scaled => g_norm / (1u64 << (bits - 1)) as f64,
    };
    let grid = QuantGrid::new(delta, bits)?;
    let gq = quant::quantize_vector(&g, &grid, quant_rng)?.decode();
    math::axpy(-eta, &gq, w);
    Ok(delta)
}

/// QSGD baseline: plain SGD with each stochastic gradient quantized before
/// the step. Flat step indexing like [`run_sgd`].
#[allow(clippy::too_many_arguments)]
pub fn run_qsgd(
    spec: &ProblemSpec,
    eta0: f64,
    eta_rule: EtaRule,
    bits: u8,
    batch_size: usize,
    total_steps: u64,
    seed: u64,
    variant: QsgdDeltaVariant,
) -> Result<TrajectoryRecord, RunError> {
    if batch_size == 0 {
        return Err(RunError::InvalidBatchSize);
    }
    let n = spec.num_samples();
    let mut idx_rng = RandomSource::new(seed, STREAM_SAMPLING);
    let mut quant_rng = RandomSource::new(seed, STREAM_QUANT);
    let mut w = vec![0.0; spec.dim()];
    let mut batch = Vec::with_capacity(batch_size);
    let mut record = TrajectoryRecord::default();

    let step_eta = |s: u64| match eta_rule {
        EtaRule::OneOverT => eta0 / (s + 1) as f64,
        EtaRule::Constant => eta0,
    };

    record.push(step_row(spec, &w, 0, 0, step_eta(0), 1, bits, 0.0)?);
    record.push_anchor(&w);
    for s in 0..total_steps {
        let eta = step_eta(s);
        draw_batch(&mut idx_rng, n, batch_size, &mut batch);
        let delta = qsgd_step(spec, &mut w, eta, bits, variant, &batch, &mut quant_rng)?;
        record.push(step_row(spec, &w, s + 1, 0, eta, 1, bits, delta)?);
        record.push_anchor(&w);
    }
    record.set_final_w(w);
    Ok(record)
}

/// QSGD driven by the same epoch structure as the epoch methods: epoch `t`
/// runs `K_t` quantized-gradient steps at `eta_t`. This is the step-matched
/// baseline for comparisons against QESGD (same learning rates, same step
/// counts, same sample draws).
pub fn run_qsgd_matched(
    spec: &ProblemSpec,
    schedule: &ScheduleParams,
    bits: u8,
    epochs: u64,
    seed: u64,
    variant: QsgdDeltaVariant,
    opts: &RunOptions,
) -> Result<TrajectoryRecord, RunError> {
    if opts.batch_size == 0 {
        return Err(RunError::InvalidBatchSize);
    }
    schedule.validate()?;
    let n = spec.num_samples();
    let mut idx_rng = RandomSource::new(seed, STREAM_SAMPLING);
    let mut quant_rng = RandomSource::new(seed, STREAM_QUANT);
    let mut w = vec![0.0; spec.dim()];
    let mut batch = Vec::with_capacity(opts.batch_size);
    let mut record = TrajectoryRecord::default();

    let (row, _) = anchor_row(spec, &w, 0, schedule.eta(0), schedule.inner_steps(0), bits, 0.0)?;
    record.push(row);
    record.push_anchor(&w);
    for t in 0..epochs {
        let eta = schedule.eta(t);
        let k_t = schedule.inner_steps(t);
        let mut last_delta = 0.0;
        for k in 0..k_t {
            draw_batch(&mut idx_rng, n, opts.batch_size, &mut batch);
            last_delta = qsgd_step(spec, &mut w, eta, bits, variant, &batch, &mut quant_rng)?;
            if opts.record == RecordMode::PerStep {
                record.push(step_row(spec, &w, t, k + 1, eta, k_t, bits, last_delta)?);
            }
        }
        let (row, _) = anchor_row(spec, &w, t + 1, eta, k_t, bits, last_delta)?;
        record.push(row);
        record.push_anchor(&w);
    }
    record.set_final_w(w);
    Ok(record)
}

//! Config-driven experiment execution.
//!
//! One experiment = one problem, one method, a list of seeds. Each seed
//! produces a trajectory CSV; the summary CSV aggregates medians across
//! seeds plus a log-log rate fit of the median trajectory.
//!
//! # Byte accounting
//!
//! QESGD runs go through the parameter-server simulation (even for one
//! worker, which is bitwise-identical to the single-process form), so their
//! byte columns are metered. The unquantized methods and QSGD never leave
//! one process; their byte columns are filled from the same wire model the
//! simulator meters, applied per inner step:
//!
//! - sgd / epoch-sgd: dense gradient up (16 + 4d), dense broadcast down
//! - qsgd: quantized gradient up (codec size at the step's bit width),
//!   dense broadcast down
//! - qesgd with buckets (single-process only): dense gradient up, bucketed
//!   codec bytes down, plus one dense anchor broadcast per epoch
//!
//! so `compare` can put every method's communication on one axis.

use std::fs;
use std::path::{Path, PathBuf};

use qesgd_core::optim::{
    run_epoch_sgd, run_qesgd, run_qsgd, run_qsgd_matched, run_sgd, QesgdOptions, RecordMode,
    RunError, RunOptions, TrajectoryRecord, TrajectoryRow,
};
use qesgd_core::problems::{gen_synthetic, ProblemError, ProblemSpec};
use qesgd_core::pssim::{run_distributed, DistributedOptions, ProtocolError, MESSAGE_HEADER_LEN};
use qesgd_core::schedule::{ScheduleError, ScheduleParams};
use qesgd_core::wire::encoded_len;
use thiserror::Error;

use crate::config::{ExperimentConfig, MethodName};
use crate::csvio::{self, CsvError, MethodSummary};
use crate::fit::{fit_convergence_slope, FitError};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("failed to create output directory {path}: {source}")]
    OutDir {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trajectory_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: MethodSummary,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN medians"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-step wire sizes for the modeled (non-simulated) methods.
struct ByteModel {
    up_per_step: Box<dyn Fn(&TrajectoryRow) -> u64>,
    down_per_step: Box<dyn Fn(&TrajectoryRow) -> u64>,
    anchor_down_per_epoch: u64,
}

impl ByteModel {
    fn dense(d: usize) -> u64 {
        (MESSAGE_HEADER_LEN + 4 * d) as u64
    }

    fn for_method(config: &ExperimentConfig) -> Option<ByteModel> {
        let d = config.problem.d;
        let dense = Self::dense(d);
        match config.method.name {
            MethodName::Sgd | MethodName::EpochSgd => Some(ByteModel {
                up_per_step: Box::new(move |_| dense),
                down_per_step: Box::new(move |_| dense),
                anchor_down_per_epoch: 0,
            }),
            MethodName::Qsgd => Some(ByteModel {
                up_per_step: Box::new(move |row| encoded_len(d, row.bits) as u64),
                down_per_step: Box::new(move |_| dense),
                anchor_down_per_epoch: 0,
            }),
            // Bucketed QESGD runs single-process; model its downlink as the
            // concatenated bucket encodings.
            MethodName::Qesgd => config.method.bucket_size.map(|bucket| ByteModel {
                up_per_step: Box::new(move |_| dense),
                down_per_step: Box::new(move |row| {
                    let mut total = 0u64;
                    let mut remaining = d;
                    while remaining > 0 {
                        let this = remaining.min(bucket);
                        total += encoded_len(this, row.bits) as u64;
                        remaining -= this;
                    }
                    total
                }),
                anchor_down_per_epoch: dense,
            }),
        }
    }

    /// Fill cumulative byte columns. Rows are ordered `(epoch, inner)` with
    /// anchor rows closing each epoch; the anchor row carries the epoch's
    /// step count in `inner_steps`.
    fn apply(&self, rows: &mut [TrajectoryRow]) {
        let mut base_up = 0u64;
        let mut base_down = 0u64;
        for row in rows.iter_mut() {
            if row.epoch == 0 && row.inner == 0 {
                row.uplink_bytes = 0;
                row.downlink_bytes = 0;
                continue;
            }
            let up = (self.up_per_step)(row);
            let down = (self.down_per_step)(row);
            if row.inner == 0 {
                base_up += row.inner_steps * up;
                base_down += row.inner_steps * down + self.anchor_down_per_epoch;
                row.uplink_bytes = base_up;
                row.downlink_bytes = base_down;
            } else {
                row.uplink_bytes = base_up + row.inner * up;
                row.downlink_bytes = base_down + row.inner * down;
            }
        }
    }
}

fn build_schedule(config: &ExperimentConfig, spec: &ProblemSpec) -> Result<ScheduleParams, RunnerError> {
    let m = &config.method;
    let mut s = ScheduleParams::from_problem(spec, m.eta0)?;
    s.eta_rule = m.eta_rule;
    s.k_rule = m.k_rule;
    s.bits_rule = m.bits_rule;
    s.delta_rule = m.delta_rule;
    s.bits_min = m.bits_min;
    s.bits_max = m.bits_max;
    s.averaging = m.averaging;
    s.validate()?;
    Ok(s)
}

fn run_one_seed(
    config: &ExperimentConfig,
    spec: &ProblemSpec,
    schedule: &ScheduleParams,
    seed: u64,
    record: RecordMode,
) -> Result<TrajectoryRecord, RunnerError> {
    let m = &config.method;
    let r = &config.run;
    let mut trajectory = match m.name {
        MethodName::Sgd => run_sgd(spec, m.eta0, m.eta_rule, m.batch_size, r.total_steps, seed)?,
        MethodName::EpochSgd => run_epoch_sgd(
            spec,
            schedule,
            r.epochs,
            seed,
            &RunOptions {
                batch_size: m.batch_size,
                record,
            },
        )?,
        MethodName::Qesgd => {
            if m.bucket_size.is_some() {
                run_qesgd(
                    spec,
                    schedule,
                    r.epochs,
                    seed,
                    &QesgdOptions {
                        batch_size: m.batch_size,
                        record,
                        bucket_size: m.bucket_size,
                        quantize: true,
                    },
                )?
            } else {
                let dist = run_distributed(
                    spec,
                    schedule,
                    r.epochs,
                    r.workers,
                    r.global_batch,
                    seed,
                    &DistributedOptions {
                        record,
                        collect_log: false,
                    },
                )?;
                return Ok(dist.trajectory);
            }
        }
        MethodName::Qsgd => {
            if r.total_steps > 0 {
                run_qsgd(
                    spec,
                    m.eta0,
                    m.eta_rule,
                    m.bits,
                    m.batch_size,
                    r.total_steps,
                    seed,
                    m.qsgd_delta,
                )?
            } else {
                run_qsgd_matched(
                    spec,
                    schedule,
                    m.bits,
                    r.epochs,
                    seed,
                    m.qsgd_delta,
                    &RunOptions {
                        batch_size: m.batch_size,
                        record,
                    },
                )?
            }
        }
    };
    if let Some(model) = ByteModel::for_method(config) {
        // In-process runs record zero bytes; overlay the wire model.
        let mut rows = trajectory.rows().to_vec();
        model.apply(&mut rows);
        trajectory = rebuild_with_rows(&trajectory, rows);
    }
    Ok(trajectory)
}

/// TrajectoryRecord exposes read-only rows; rebuild one with modeled bytes
/// but the original anchors and final iterate.
fn rebuild_with_rows(original: &TrajectoryRecord, rows: Vec<TrajectoryRow>) -> TrajectoryRecord {
    TrajectoryRecord::from_parts(rows, original.anchors().to_vec(), original.final_w().to_vec())
}

/// Execute every seed of an experiment and write its CSVs.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<RunArtifacts, RunnerError> {
    let p = &config.problem;
    let spec = gen_synthetic(
        p.kind,
        p.n,
        p.d,
        p.seed,
        p.condition_target,
        p.noise,
        p.lambda,
    )?;
    let schedule = build_schedule(config, &spec)?;
    let record = if config.output.per_step {
        RecordMode::PerStep
    } else {
        RecordMode::PerEpoch
    };

    let seeds: Vec<u64> = match seed_override {
        Some(s) => vec![s],
        None => config.run.seeds.clone(),
    };
    let out_dir: PathBuf = match out_dir_override {
        Some(dir) => dir.to_path_buf(),
        None => PathBuf::from(&config.output.out_dir),
    };
    fs::create_dir_all(&out_dir).map_err(|e| RunnerError::OutDir {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    let method = config.method.name.as_str();
    let mut trajectory_paths = Vec::new();
    let mut records = Vec::new();
    for &seed in &seeds {
        let trajectory = run_one_seed(config, &spec, &schedule, seed, record)?;
        let path = out_dir.join(format!("{method}-seed{seed}.csv"));
        csvio::write_trajectory(&path, trajectory.rows())?;
        trajectory_paths.push(path);
        records.push(trajectory);
    }

    let summary = summarize(config, &records, &seeds);
    let summary_path = out_dir.join(format!("{method}-summary.csv"));
    csvio::write_summary(&summary_path, std::slice::from_ref(&summary))?;

    Ok(RunArtifacts {
        trajectory_paths,
        summary_path,
        summary,
    })
}

/// Median-across-seeds summary plus a rate fit of the median epoch series.
fn summarize(config: &ExperimentConfig, records: &[TrajectoryRecord], seeds: &[u64]) -> MethodSummary {
    let p = &config.problem;
    let mut finals: Vec<f64> = records.iter().map(|r| r.final_suboptimality()).collect();
    let final_median = median(&mut finals);
    let initial = records[0]
        .rows()
        .first()
        .map(|r| r.suboptimality)
        .unwrap_or(f64::NAN);

    // Median series across seeds, per epoch index.
    let series0 = records[0].epoch_series();
    let mut median_series: Vec<(u64, f64)> = Vec::with_capacity(series0.len());
    for (i, &(t, _)) in series0.iter().enumerate() {
        let mut vals: Vec<f64> = records
            .iter()
            .filter_map(|r| r.epoch_series().get(i).map(|&(_, y)| y))
            .collect();
        median_series.push((t, median(&mut vals)));
    }
    let t_hi = median_series.last().map(|&(t, _)| t).unwrap_or(0);
    let t_lo = (t_hi / 5).max(1);
    let (slope, r2) = match fit_convergence_slope(&median_series, t_lo, t_hi) {
        Ok(fit) => (fit.slope, fit.r2),
        Err(FitError::WindowTooSmall { .. }) => (f64::NAN, f64::NAN),
    };

    let last = records[0].rows().last();
    MethodSummary {
        method: config.method.name.as_str().to_string(),
        kind: p.kind.name().to_string(),
        n: p.n,
        d: p.d,
        lambda: p.lambda,
        condition_target: p.condition_target,
        noise: p.noise,
        problem_seed: p.seed,
        seeds: seeds.len(),
        epochs: config.run.epochs,
        initial_suboptimality: initial,
        final_suboptimality_median: final_median,
        slope,
        r2,
        uplink_bytes: last.map(|r| r.uplink_bytes).unwrap_or(0),
        downlink_bytes: last.map(|r| r.downlink_bytes).unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tiny_config(extra: &str) -> ExperimentConfig {
        let text = format!(
            "[problem]\nkind = ridge\nn = 40\nd = 4\nlambda = 0.02\ncondition_target = 5\nnoise = 0.1\nseed = 3\n\n\
             [method]\nname = qesgd\neta0 = 0.5\n\n[run]\nT = 4\nseeds = 1,2\n{extra}"
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn experiment_writes_csvs() {
        let config = tiny_config("");
        let dir = std::env::temp_dir().join("qesgd_runner_test");
        let artifacts = run_experiment(&config, Some(&dir), None).unwrap();
        assert_eq!(artifacts.trajectory_paths.len(), 2);
        for p in &artifacts.trajectory_paths {
            assert!(p.exists());
        }
        assert!(artifacts.summary_path.exists());
        let summaries = csvio::read_summary(&artifacts.summary_path).unwrap();
        assert_eq!(summaries.len(), 1);
        assert_eq!(summaries[0].method, "qesgd");
        assert_eq!(summaries[0].seeds, 2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn identical_configs_give_identical_bytes() {
        let config = tiny_config("");
        let dir_a = std::env::temp_dir().join("qesgd_runner_det_a");
        let dir_b = std::env::temp_dir().join("qesgd_runner_det_b");
        let a = run_experiment(&config, Some(&dir_a), None).unwrap();
        let b = run_experiment(&config, Some(&dir_b), None).unwrap();
        for (pa, pb) in a.trajectory_paths.iter().zip(b.trajectory_paths.iter()) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
        assert_eq!(
            std::fs::read(&a.summary_path).unwrap(),
            std::fs::read(&b.summary_path).unwrap()
        );
        std::fs::remove_dir_all(&dir_a).ok();
        std::fs::remove_dir_all(&dir_b).ok();
    }

    #[test]
    fn seed_override_runs_single_seed() {
        let config = tiny_config("");
        let dir = std::env::temp_dir().join("qesgd_runner_override");
        let artifacts = run_experiment(&config, Some(&dir), Some(99)).unwrap();
        assert_eq!(artifacts.trajectory_paths.len(), 1);
        assert!(artifacts.trajectory_paths[0]
            .to_string_lossy()
            .contains("seed99"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn modeled_bytes_fill_for_unquantized_methods() {
        let text = "[problem]\nkind = ridge\nn = 40\nd = 4\nlambda = 0.02\nseed = 3\n\n\
                    [method]\nname = epoch-sgd\n\n[run]\nT = 3\nseeds = 1\n";
        let config = parse_config(text).unwrap();
        let dir = std::env::temp_dir().join("qesgd_runner_model");
        let artifacts = run_experiment(&config, Some(&dir), None).unwrap();
        let rows = csvio::read_trajectory(&artifacts.trajectory_paths[0]).unwrap();
        assert_eq!(rows[0].uplink_bytes, 0);
        let last = rows.last().unwrap();
        let total_steps: u64 = rows.iter().skip(1).map(|r| r.inner_steps).sum();
        let dense = (16 + 4 * 4) as u64;
        assert_eq!(last.uplink_bytes, total_steps * dense);
        assert_eq!(last.downlink_bytes, total_steps * dense);
        std::fs::remove_dir_all(&dir).ok();
    }
}

//! CSV reading and writing.
//!
//! All output uses a header row, `.` as the decimal separator, LF line
//! endings, and Rust's shortest round-trip float formatting, so identical
//! runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use qesgd_core::problems::{Dataset, ProblemError};
use qesgd_core::TrajectoryRow;
use thiserror::Error;

/// The fixed trajectory schema.
pub const TRAJECTORY_HEADER: &str =
    "epoch,inner,eta,K,bits,delta,suboptimality,grad_norm,uplink_bytes,downlink_bytes";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn io_err(path: &Path, source: std::io::Error) -> CsvError {
    CsvError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CsvError {
    CsvError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<(), CsvError> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.inner,
            r.eta,
            r.inner_steps,
            r.bits,
            r.delta,
            r.suboptimality,
            r.grad_norm,
            r.uplink_bytes,
            r.downlink_bytes
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, CsvError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TRAJECTORY_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(path, 1, format!("unexpected header `{header}`")));
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(parse_err(path, line_no, format!("expected 10 fields, got {}", fields.len())));
        }
        let field = |i: usize| -> &str { fields[i] };
        macro_rules! num {
            ($i:expr, $ty:ty) => {
                field($i).parse::<$ty>().map_err(|_| {
                    parse_err(path, line_no, format!("field {} is not a number: `{}`", $i + 1, field($i)))
                })?
            };
        }
        rows.push(TrajectoryRow {
            epoch: num!(0, u64),
            inner: num!(1, u64),
            eta: num!(2, f64),
            inner_steps: num!(3, u64),
            bits: num!(4, u8),
            delta: num!(5, f64),
            suboptimality: num!(6, f64),
            grad_norm: num!(7, f64),
            uplink_bytes: num!(8, u64),
            downlink_bytes: num!(9, u64),
        });
    }
    Ok(rows)
}

/// One line per method in a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub kind: String,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub condition_target: f64,
    pub noise: f64,
    pub problem_seed: u64,
    pub seeds: usize,
    pub epochs: u64,
    pub initial_suboptimality: f64,
    pub final_suboptimality_median: f64,
    pub slope: f64,
    pub r2: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

pub const SUMMARY_HEADER: &str = "method,kind,n,d,lambda,condition_target,noise,problem_seed,\
seeds,epochs,initial_suboptimality,final_suboptimality_median,slope,r2,uplink_bytes,downlink_bytes";

impl MethodSummary {
    /// Problems must match for summaries to be comparable.
    pub fn same_problem(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.n == other.n
            && self.d == other.d
            && self.lambda == other.lambda
            && self.condition_target == other.condition_target
            && self.noise == other.noise
            && self.problem_seed == other.problem_seed
    }
}

pub fn write_summary(path: &Path, summaries: &[MethodSummary]) -> Result<(), CsvError> {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.method,
            s.kind,
            s.n,
            s.d,
            s.lambda,
            s.condition_target,
            s.noise,
            s.problem_seed,
            s.seeds,
            s.epochs,
            s.initial_suboptimality,
            s.final_suboptimality_median,
            s.slope,
            s.r2,
            s.uplink_bytes,
            s.downlink_bytes
        ));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<MethodSummary>, CsvError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SUMMARY_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(path, 1, format!("unexpected header `{header}`")));
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(parse_err(path, line_no, format!("expected 16 fields, got {}", fields.len())));
        }
        macro_rules! num {
            ($i:expr, $ty:ty) => {
                fields[$i].parse::<$ty>().map_err(|_| {
                    parse_err(path, line_no, format!("field {} is not a number: `{}`", $i + 1, fields[$i]))
                })?
            };
        }
        out.push(MethodSummary {
            method: fields[0].to_string(),
            kind: fields[1].to_string(),
            n: num!(2, usize),
            d: num!(3, usize),
            lambda: num!(4, f64),
            condition_target: num!(5, f64),
            noise: num!(6, f64),
            problem_seed: num!(7, u64),
            seeds: num!(8, usize),
            epochs: num!(9, u64),
            initial_suboptimality: num!(10, f64),
            final_suboptimality_median: num!(11, f64),
            slope: num!(12, f64),
            r2: num!(13, f64),
            uplink_bytes: num!(14, u64),
            downlink_bytes: num!(15, u64),
        });
    }
    Ok(out)
}

/// Export a dataset as CSV: one row per sample, features first, target in
/// the last column, no header.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), CsvError> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = String::new();
    for i in 0..dataset.num_samples() {
        for v in dataset.row(i) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", dataset.target(i)));
    }
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Import a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset, CsvError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut dim: Option<usize> = None;
    let mut n = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(parse_err(path, line_no, "need at least one feature and a target"));
        }
        let d = fields.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(existing) if existing != d => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("row has {d} features, previous rows had {existing}"),
                ));
            }
            _ => {}
        }
        for f in &fields[..d] {
            features.push(f.parse::<f64>().map_err(|_| {
                parse_err(path, line_no, format!("feature is not a number: `{f}`"))
            })?);
        }
        targets.push(fields[d].parse::<f64>().map_err(|_| {
            parse_err(path, line_no, format!("target is not a number: `{}`", fields[d]))
        })?);
        n += 1;
    }
    let d = dim.ok_or_else(|| parse_err(path, 1, "empty dataset"))?;
    Ok(Dataset::new(features, targets, n, d)?)
}

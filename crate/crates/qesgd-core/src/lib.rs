//! Quantized Epoch-SGD (QESGD) building blocks.
//!
//! This crate implements the full algorithmic stack for communication-efficient
//! SGD with parameter quantization, verified on strongly convex problems:
//!
//! - [`quant`] — the uniform quantization grid `D_{delta,b}`, the stochastic
//!   rounding operator, exact small-case expectation oracles, and bucketed
//!   quantization.
//! - [`wire`] — a bit-exact byte encoding for quantized vectors.
//! - [`problems`] — finite-sum strongly convex objectives (ridge regression,
//!   L2-regularized logistic regression) with gradient oracles, exact optimum
//!   solvers, and constant estimation (mu, L, kappa, G).
//! - [`schedule`] — the learning-rate / inner-step / bit-width / grid-step
//!   policies that drive the epoch methods.
//! - [`optim`] — SGD, Epoch-SGD, QESGD, and the QSGD gradient-quantization
//!   baseline, all deterministic in their seeds.
//! - [`pssim`] — a deterministic synchronous parameter-server simulation with
//!   typed messages and byte-level communication metering.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all float math goes
//! through `libm` so results are identical with and without `std`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod linalg;
pub(crate) mod math;
pub mod optim;
pub mod problems;
pub mod pssim;
pub mod quant;
pub mod rng;
pub mod schedule;
pub mod wire;

pub use optim::{run_epoch_sgd, run_qesgd, run_qsgd, run_qsgd_matched, run_sgd};
pub use optim::{QesgdOptions, QsgdDeltaVariant, RecordMode, RunOptions, TrajectoryRecord, TrajectoryRow};
pub use problems::{gen_synthetic, Dataset, ProblemKind, ProblemSpec};
pub use pssim::{communication_report, run_distributed, ByteMeter, DistributedOptions, Message};
pub use quant::{QuantGrid, QuantizedVector};
pub use rng::RandomSource;
pub use schedule::{AveragingMode, BitsRule, DeltaRule, EtaRule, KRule, ScheduleParams};

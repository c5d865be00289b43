//! Per-epoch parameter policies for the epoch methods.
//!
//! For epoch `t` (0-based) the derived quantities are:
//!
//! - learning rate `eta_t`: `eta0 / (t + 1)` or constant `eta0`
//! - inner steps `K_t = max(1, ceil(1 / (3 mu eta_t)))` or a fixed count
//! - bit width `b_t = clamp(ceil(log2(sqrt(kappa d K_t))), bits_min, bits_max)`
//!   or a fixed width (also clamped)
//! - grid step `delta_t`: either the exact rule
//!   `||grad F(w_t)|| / (mu 2^(b_t - 1))`, which needs the current full
//!   gradient norm, or the practical rule
//!   `||grad F(w_0)|| / (c sqrt(t + 1) 2^(b_t - 1))`, which only needs the
//!   gradient norm at the start (`sqrt(t + 1)` rather than `sqrt(t)` so the
//!   rule covers `t = 0`).
//!
//! `K_t` and `b_t` round up; rounding up only tightens the per-epoch
//! contraction. A zero numerator in either delta rule (the iterate is already
//! optimal) falls back to the smallest positive normal so grids stay valid.

use thiserror::Error;

use crate::math;
use crate::problems::ProblemSpec;
use crate::quant::MAX_BITS;

pub const DEFAULT_BITS_MIN: u8 = 2;
pub const DEFAULT_BITS_MAX: u8 = MAX_BITS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("eta0 must be positive and finite, got {0}")]
    InvalidEta(f64),
    #[error("practical delta rule scaling c must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("mu must be positive and finite, got {0}")]
    InvalidMu(f64),
    #[error("kappa must be >= 1 and finite, got {0}")]
    InvalidKappa(f64),
    #[error("cached gradient norm must be finite and >= 0, got {0}")]
    InvalidG0(f64),
    #[error("bit bounds must satisfy 1 <= min <= max <= {MAX_BITS}, got [{min}, {max}]")]
    InvalidBitBounds { min: u8, max: u8 },
    #[error("fixed inner-step count must be >= 1")]
    InvalidFixedK,
    #[error("fixed grid step must be positive and finite, got {0}")]
    InvalidFixedDelta(f64),
    #[error("the exact delta rule needs the current full-gradient norm")]
    MissingGradNorm,
    #[error("gradient norm must be finite and >= 0, got {0}")]
    InvalidGradNorm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaRule {
    /// `eta_t = eta0 / (t + 1)`.
    OneOverT,
    /// `eta_t = eta0`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KRule {
    /// `K_t = max(1, ceil(1 / (3 mu eta_t)))`.
    Corollary,
    /// A fixed inner-step count.
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitsRule {
    /// `b_t = ceil(log2(sqrt(kappa d K_t)))`, clamped to the bit bounds.
    Corollary,
    /// A fixed width, clamped to the bit bounds.
    Fixed(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaRule {
    /// `delta_t = ||grad F(w_t)|| / (mu 2^(b_t - 1))`.
    Lemma2Exact,
    /// `delta_t = g0_norm / (c sqrt(t + 1) 2^(b_t - 1))`.
    Practical { c: f64 },
    /// A pinned grid step for every epoch (identity-limit studies).
    Fixed(f64),
}

/// Which inner iterates form the next anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingMode {
    /// Average `u_{t,0} .. u_{t,K-1}`: includes the anchor itself, excludes
    /// the final inner iterate. With `K_t = 1` the anchor never moves; that
    /// degenerate case is deliberate, not a bug.
    IncludeAnchor,
    /// Average `u_{t,1} .. u_{t,K}` instead.
    ExcludeAnchor,
}

/// All per-epoch policies plus the problem constants they need.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub eta0: f64,
    pub eta_rule: EtaRule,
    pub k_rule: KRule,
    pub bits_rule: BitsRule,
    pub delta_rule: DeltaRule,
    /// `||grad F(w_0)||`, cached once at run start for the practical rule.
    pub g0_norm: f64,
    pub mu: f64,
    pub kappa: f64,
    pub dim: usize,
    pub bits_min: u8,
    pub bits_max: u8,
    pub averaging: AveragingMode,
}

/// The resolved parameters for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochParams {
    pub eta: f64,
    pub inner_steps: u64,
    pub bits: u8,
    pub delta: f64,
}

impl ScheduleParams {
    /// Defaults: one-over-t eta, both Corollary rules, practical delta with
    /// c = 3, bit bounds [2, 16], anchor included in the average.
    pub fn new(eta0: f64, mu: f64, kappa: f64, dim: usize) -> Result<Self, ScheduleError> {
        let params = Self {
            eta0,
            eta_rule: EtaRule::OneOverT,
            k_rule: KRule::Corollary,
            bits_rule: BitsRule::Corollary,
            delta_rule: DeltaRule::Practical { c: 3.0 },
            g0_norm: 0.0,
            mu,
            kappa,
            dim,
            bits_min: DEFAULT_BITS_MIN,
            bits_max: DEFAULT_BITS_MAX,
            averaging: AveragingMode::IncludeAnchor,
        };
        params.validate()?;
        Ok(params)
    }

    /// Build from a problem's constants and cache `||grad F(0)||` (runs in
    /// this crate start from the zero vector).
    pub fn from_problem(spec: &ProblemSpec, eta0: f64) -> Result<Self, ScheduleError> {
        let mut params = Self::new(eta0, spec.mu(), spec.kappa(), spec.dim())?;
        let zeros = alloc::vec![0.0; spec.dim()];
        params.g0_norm = math::norm2(&spec.full_gradient(&zeros).expect("dimensions match"));
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.eta0 <= 0.0 || !self.eta0.is_finite() {
            return Err(ScheduleError::InvalidEta(self.eta0));
        }
        if self.mu <= 0.0 || !self.mu.is_finite() {
            return Err(ScheduleError::InvalidMu(self.mu));
        }
        if self.kappa < 1.0 || !self.kappa.is_finite() {
            return Err(ScheduleError::InvalidKappa(self.kappa));
        }
        if !self.g0_norm.is_finite() || self.g0_norm < 0.0 {
            return Err(ScheduleError::InvalidG0(self.g0_norm));
        }
        if self.bits_min == 0 || self.bits_min > self.bits_max || self.bits_max > MAX_BITS {
            return Err(ScheduleError::InvalidBitBounds {
                min: self.bits_min,
                max: self.bits_max,
            });
        }
        if let KRule::Fixed(0) = self.k_rule {
            return Err(ScheduleError::InvalidFixedK);
        }
        match self.delta_rule {
            DeltaRule::Practical { c } if c <= 0.0 || !c.is_finite() => {
                return Err(ScheduleError::InvalidC(c));
            }
            DeltaRule::Fixed(delta) if delta <= 0.0 || !delta.is_finite() => {
                return Err(ScheduleError::InvalidFixedDelta(delta));
            }
            _ => {}
        }
        Ok(())
    }

    /// `eta_t`.
    pub fn eta(&self, t: u64) -> f64 {
        match self.eta_rule {
            EtaRule::OneOverT => self.eta0 / (t + 1) as f64,
            EtaRule::Constant => self.eta0,
        }
    }

    /// `K_t`.
    pub fn inner_steps(&self, t: u64) -> u64 {
        match self.k_rule {
            KRule::Corollary => {
                let raw = math::ceil(1.0 / (3.0 * self.mu * self.eta(t)));
                if raw >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    (raw as u64).max(1)
                }
            }
            KRule::Fixed(k) => k,
        }
    }

    /// `b_t`, always within `[bits_min, bits_max]`.
    pub fn bits(&self, t: u64) -> u8 {
        let raw = match self.bits_rule {
            BitsRule::Corollary => {
                let k_t = self.inner_steps(t) as f64;
                let arg = self.kappa * self.dim as f64 * k_t;
                let b = math::ceil(math::log2(math::sqrt(arg)));
                if b.is_nan() || b < 0.0 {
                    0
                } else if b > MAX_BITS as f64 {
                    MAX_BITS as i32
                } else {
                    b as i32
                }
            }
            BitsRule::Fixed(b) => b as i32,
        };
        (raw.clamp(self.bits_min as i32, self.bits_max as i32)) as u8
    }

    /// `delta_t`. The exact rule requires `grad_norm = ||grad F(w_t)||`.
    pub fn delta(&self, t: u64, grad_norm: Option<f64>) -> Result<f64, ScheduleError> {
        let half_levels = (1u64 << (self.bits(t) - 1)) as f64;
        let delta = match self.delta_rule {
            DeltaRule::Lemma2Exact => {
                let gn = grad_norm.ok_or(ScheduleError::MissingGradNorm)?;
                if !gn.is_finite() || gn < 0.0 {
                    return Err(ScheduleError::InvalidGradNorm(gn));
                }
                gn / (self.mu * half_levels)
            }
            DeltaRule::Practical { c } => {
                self.g0_norm / (c * math::sqrt((t + 1) as f64) * half_levels)
            }
            DeltaRule::Fixed(delta) => return Ok(delta),
        };
        // At the optimum the numerator vanishes; any valid grid will do.
        Ok(if delta > 0.0 { delta } else { f64::MIN_POSITIVE })
    }

    /// Resolve all four policies for epoch `t`.
    pub fn epoch_params(&self, t: u64, grad_norm: Option<f64>) -> Result<EpochParams, ScheduleError> {
        Ok(EpochParams {
            eta: self.eta(t),
            inner_steps: self.inner_steps(t),
            bits: self.bits(t),
            delta: self.delta(t, grad_norm)?,
        })
    }
}

//! Uniform stochastic quantization.
//!
//! The grid with step `delta` and width `b` bits is the signed level set
//!
//! ```text
//! D = { delta * k : k integer, -2^(b-1) <= k <= 2^(b-1) - 1 }      (2^b levels)
//! ```
//!
//! Scalars are quantized by clipping outside the span and stochastically
//! rounding to one of the two adjacent levels inside it, with probabilities
//! proportional to proximity. Inside the span the operator is unbiased; at
//! the clip boundaries it is the deterministic projection (and therefore
//! biased). The variance of one rounding never exceeds `delta^2 / 4`.
//!
//! Values that already sit on a grid level quantize deterministically and
//! consume no randomness, which keeps replay stable: requantizing an
//! already-quantized vector is the identity and leaves the draw stream
//! untouched.
//!
//! [`exact_mean`] and [`exact_second_moment`] integrate the one-step rounding
//! law in closed form; they are the oracles the sampling path is tested
//! against.

use alloc::vec::Vec;
use thiserror::Error;

use crate::math;
use crate::rng::RandomSource;

/// Largest supported bit width. Beyond 16 bits the payload would stop being
/// meaningfully smaller than raw 32-bit floats.
pub const MAX_BITS: u8 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("grid step must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("bit width must be in 1..={MAX_BITS}, got {0}")]
    InvalidBits(u8),
    #[error("cannot quantize a non-finite value")]
    NonFinite,
    #[error("cannot quantize an empty vector")]
    EmptyVector,
    #[error("code {code} at index {index} is outside the signed {bits}-bit range")]
    CodeOutOfRange { index: usize, code: i32, bits: u8 },
    #[error("bucket size must be at least 1")]
    InvalidBucketSize,
    #[error("the max-abs bucket rule needs at least 2 bits")]
    BucketRuleNeedsBits,
}

/// The `(delta, b)` quantization lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantGrid {
    delta: f64,
    bits: u8,
}

impl QuantGrid {
    pub fn new(delta: f64, bits: u8) -> Result<Self, QuantError> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(QuantError::InvalidDelta(delta));
        }
        if bits == 0 || bits > MAX_BITS {
            return Err(QuantError::InvalidBits(bits));
        }
        Ok(Self { delta, bits })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Lowest code, `-2^(b-1)`.
    pub fn min_code(&self) -> i32 {
        -(1i32 << (self.bits - 1))
    }

    /// Highest code, `2^(b-1) - 1`.
    pub fn max_code(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }

    /// The grid level `delta * code`.
    pub fn level(&self, code: i32) -> f64 {
        self.delta * code as f64
    }

    /// Lowest representable value, `-delta * 2^(b-1)`.
    pub fn min_level(&self) -> f64 {
        self.level(self.min_code())
    }

    /// Highest representable value, `delta * (2^(b-1) - 1)`.
    pub fn max_level(&self) -> f64 {
        self.level(self.max_code())
    }

    pub fn num_levels(&self) -> u32 {
        1u32 << self.bits
    }
}

/// The distribution of one stochastic rounding, in code space.
///
/// `Point` covers the deterministic branches (clipping and exact grid hits);
/// `Split` is the two-point law on adjacent levels.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RoundingLaw {
    Point(i32),
    Split { lower: i32, prob_upper: f64 },
}

/// Branch logic shared by the sampler and the exact-moment oracles.
fn rounding_law(v: f64, grid: &QuantGrid) -> Result<RoundingLaw, QuantError> {
    if !v.is_finite() {
        return Err(QuantError::NonFinite);
    }
    let delta = grid.delta();
    let top = grid.max_code();
    let bot = grid.min_code();
    if v >= grid.max_level() {
        return Ok(RoundingLaw::Point(top));
    }
    if v <= grid.min_level() {
        return Ok(RoundingLaw::Point(bot));
    }
    // Strictly inside the span. floor(v/delta) can land one step off at the
    // extremes because of the division rounding; clamp back into the span
    // (the misrounded value was within one ulp of the boundary anyway).
    let k = math::floor(v / delta) as i64;
    if k >= top as i64 {
        return Ok(RoundingLaw::Point(top));
    }
    if k < bot as i64 {
        return Ok(RoundingLaw::Point(bot));
    }
    let k = k as i32;
    let lower_level = grid.level(k);
    if v == lower_level {
        return Ok(RoundingLaw::Point(k));
    }
    let upper_level = grid.level(k + 1);
    if v == upper_level {
        return Ok(RoundingLaw::Point(k + 1));
    }
    Ok(RoundingLaw::Split {
        lower: k,
        prob_upper: (v - lower_level) / delta,
    })
}

fn sample_code(v: f64, grid: &QuantGrid, rng: &mut RandomSource) -> Result<i32, QuantError> {
    Ok(match rounding_law(v, grid)? {
        RoundingLaw::Point(k) => k,
        RoundingLaw::Split { lower, prob_upper } => {
            if rng.next_uniform() < prob_upper {
                lower + 1
            } else {
                lower
            }
        }
    })
}

/// Stochastically round `v` onto the grid. Returns a member of the level set.
pub fn quantize_scalar(v: f64, grid: &QuantGrid, rng: &mut RandomSource) -> Result<f64, QuantError> {
    Ok(grid.level(sample_code(v, grid, rng)?))
}

/// Exact expectation of one rounding, `E[Q(v)]`.
///
/// Strictly inside the span this equals `v` (the two-point law is unbiased);
/// in the clip regions it is the projected boundary level. The two-point
/// branch is evaluated as `lower + (v - lower)` — the algebraic reduction of
/// `p_lo * lo + p_hi * hi` — which keeps it exact in floating point.
pub fn exact_mean(v: f64, grid: &QuantGrid) -> Result<f64, QuantError> {
    Ok(match rounding_law(v, grid)? {
        RoundingLaw::Point(k) => grid.level(k),
        RoundingLaw::Split { lower, .. } => {
            let lo = grid.level(lower);
            lo + (v - lo)
        }
    })
}

/// Exact second moment `E[(Q(v_prime) - v)^2]` of one rounding around `v`.
///
/// Evaluated through the decomposition
/// `E[(Q(x) - v)^2] = (x - v)^2 + E[(Q(x) - x)^2]` valid whenever the law is
/// unbiased about `x`, with the one-step variance written as the product of
/// the two gap lengths. Keeping the `(x - v)^2` term separate from the
/// O(delta^2) variance term preserves the variance bound under floating
/// point even when the squared distance dwarfs it.
pub fn exact_second_moment(v_prime: f64, v: f64, grid: &QuantGrid) -> Result<f64, QuantError> {
    if !v.is_finite() {
        return Err(QuantError::NonFinite);
    }
    Ok(match rounding_law(v_prime, grid)? {
        RoundingLaw::Point(k) => {
            let q = grid.level(k);
            (q - v) * (q - v)
        }
        RoundingLaw::Split { lower, .. } => {
            let lo = grid.level(lower);
            let hi = grid.level(lower + 1);
            let gap_lo = v_prime - lo;
            let gap_hi = hi - v_prime;
            let centered = (v_prime - v) * (v_prime - v);
            centered + gap_lo * gap_hi
        }
    })
}

/// A vector of grid codes plus its grid header.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    grid: QuantGrid,
    codes: Vec<i32>,
}

impl QuantizedVector {
    /// Build from raw codes, validating every code against the grid range.
    pub fn new(grid: QuantGrid, codes: Vec<i32>) -> Result<Self, QuantError> {
        for (index, &code) in codes.iter().enumerate() {
            if code < grid.min_code() || code > grid.max_code() {
                return Err(QuantError::CodeOutOfRange {
                    index,
                    code,
                    bits: grid.bits(),
                });
            }
        }
        Ok(Self { grid, codes })
    }

    pub fn grid(&self) -> &QuantGrid {
        &self.grid
    }

    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    pub fn dim(&self) -> usize {
        self.codes.len()
    }

    /// Reconstruct the real-valued vector `delta * codes`.
    pub fn decode(&self) -> Vec<f64> {
        self.codes.iter().map(|&k| self.grid.level(k)).collect()
    }
}

/// Quantize each coordinate independently.
///
/// Randomness is consumed in ascending coordinate order, one draw per
/// coordinate that actually needs one (on-grid and clipped coordinates
/// consume none), so runs replay exactly.
pub fn quantize_vector(
    u: &[f64],
    grid: &QuantGrid,
    rng: &mut RandomSource,
) -> Result<QuantizedVector, QuantError> {
    if u.is_empty() {
        return Err(QuantError::EmptyVector);
    }
    let mut codes = Vec::with_capacity(u.len());
    for &v in u {
        codes.push(sample_code(v, grid, rng)?);
    }
    Ok(QuantizedVector { grid: *grid, codes })
}

/// Per-bucket grid-step policy for [`quantize_bucketed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BucketDeltaRule {
    /// `delta = max_abs(bucket) / (2^(b-1) - 1)`: the bucket extremes become
    /// exact grid points. All-zero buckets fall back to the smallest positive
    /// normal so the grid stays valid.
    MaxAbs,
    /// [`BucketDeltaRule::MaxAbs`] with an upper cap on the step.
    MaxAbsCapped(f64),
    /// One fixed step for every bucket.
    Fixed(f64),
}

impl BucketDeltaRule {
    fn delta_for(&self, bucket: &[f64], bits: u8) -> Result<f64, QuantError> {
        let max_abs_delta = |cap: Option<f64>| -> Result<f64, QuantError> {
            if bits < 2 {
                return Err(QuantError::BucketRuleNeedsBits);
            }
            let top = ((1u32 << (bits - 1)) - 1) as f64;
            let mut delta = math::max_abs(bucket) / top;
            if delta <= 0.0 {
                delta = f64::MIN_POSITIVE;
            }
            if let Some(cap) = cap {
                if delta > cap {
                    delta = cap;
                }
            }
            Ok(delta)
        };
        match *self {
            BucketDeltaRule::MaxAbs => max_abs_delta(None),
            BucketDeltaRule::MaxAbsCapped(cap) => max_abs_delta(Some(cap)),
            BucketDeltaRule::Fixed(delta) => Ok(delta),
        }
    }
}

/// Split `u` into buckets of `bucket_size` coordinates (the last may be
/// shorter) and quantize each with its own grid. `bucket_size >= dim` yields
/// a single bucket.
pub fn quantize_bucketed(
    u: &[f64],
    bucket_size: usize,
    bits: u8,
    rule: &BucketDeltaRule,
    rng: &mut RandomSource,
) -> Result<Vec<QuantizedVector>, QuantError> {
    if u.is_empty() {
        return Err(QuantError::EmptyVector);
    }
    if bucket_size == 0 {
        return Err(QuantError::InvalidBucketSize);
    }
    let mut out = Vec::with_capacity(u.len().div_ceil(bucket_size));
    for bucket in u.chunks(bucket_size) {
        let grid = QuantGrid::new(rule.delta_for(bucket, bits)?, bits)?;
        out.push(quantize_vector(bucket, &grid, rng)?);
    }
    Ok(out)
}

/// Decode and concatenate a bucketed quantization back into one vector.
pub fn decode_buckets(buckets: &[QuantizedVector]) -> Vec<f64> {
    let mut out = Vec::new();
    for b in buckets {
        out.extend(b.decode());
    }
    out
}

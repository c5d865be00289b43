//! Property tests for the stochastic quantizer and its wire codec.

use proptest::prelude::*;
use qesgd_core::quant::{
    exact_mean, exact_second_moment, quantize_scalar, quantize_vector, QuantGrid, QuantizedVector,
};
use qesgd_core::rng::RandomSource;
use qesgd_core::wire;

fn arb_grid() -> impl Strategy<Value = QuantGrid> {
    (1e-3f64..10.0, 2u8..=16).prop_map(|(delta, bits)| QuantGrid::new(delta, bits).unwrap())
}

proptest! {
    /// Every quantization lands exactly on a grid level.
    #[test]
    fn membership(grid in arb_grid(), unit in -1.5f64..1.5, seed in any::<u64>()) {
        let span = grid.max_level() - grid.min_level();
        let v = unit * span;
        let mut rng = RandomSource::new(seed, 1);
        let q = quantize_scalar(v, &grid, &mut rng).unwrap();
        let code = (q / grid.delta()).round() as i32;
        prop_assert!(code >= grid.min_code() && code <= grid.max_code());
        prop_assert_eq!(q, grid.level(code));
    }

    /// Inside the representable range the rounding error is below one step.
    #[test]
    fn boundedness_in_range(grid in arb_grid(), unit in 0.0f64..1.0, seed in any::<u64>()) {
        let lo = grid.min_level();
        let span = grid.max_level() - lo;
        let v = lo + unit * span;
        let mut rng = RandomSource::new(seed, 1);
        let q = quantize_scalar(v, &grid, &mut rng).unwrap();
        prop_assert!((q - v).abs() < grid.delta());
    }

    /// The exact two-point expectation is the identity strictly inside the
    /// span and the clipped level outside.
    #[test]
    fn unbiased_inside_biased_outside(grid in arb_grid(), unit in -1.5f64..1.5) {
        let span = grid.max_level() - grid.min_level();
        let v = unit * span;
        let mean = exact_mean(v, &grid).unwrap();
        if v > grid.min_level() && v < grid.max_level() {
            prop_assert!((mean - v).abs() <= 1e-12, "mean {} vs {}", mean, v);
        } else {
            let clip = if v >= grid.max_level() { grid.max_level() } else { grid.min_level() };
            prop_assert_eq!(mean, clip);
        }
    }

    /// One-step variance bound: E[(Q(v') - v)^2] <= (v' - v)^2 + delta^2/4
    /// for any grid point v.
    #[test]
    fn second_moment_bound(
        grid in arb_grid(),
        unit in -1.5f64..1.5,
        code_unit in 0.0f64..1.0,
    ) {
        let span = grid.max_level() - grid.min_level();
        let v_prime = unit * span;
        let code = grid.min_code()
            + (code_unit * (grid.max_code() - grid.min_code()) as f64).round() as i32;
        let v = grid.level(code);
        let lhs = exact_second_moment(v_prime, v, &grid).unwrap();
        let rhs = (v_prime - v) * (v_prime - v) + grid.delta() * grid.delta() / 4.0;
        prop_assert!(lhs <= rhs + 1e-12, "lhs {} rhs {}", lhs, rhs);
    }

    /// Identical generator state implies identical output.
    #[test]
    fn deterministic_replay(grid in arb_grid(), seed in any::<u64>(), dim in 1usize..64) {
        let span = grid.max_level() - grid.min_level();
        let mut vals = RandomSource::new(seed ^ 0xabcd, 5);
        let u: Vec<f64> = (0..dim)
            .map(|_| (vals.next_uniform() - 0.5) * 1.5 * span)
            .collect();
        let mut rng_a = RandomSource::new(seed, 1);
        let mut rng_b = RandomSource::new(seed, 1);
        let qa = quantize_vector(&u, &grid, &mut rng_a).unwrap();
        let qb = quantize_vector(&u, &grid, &mut rng_b).unwrap();
        prop_assert_eq!(qa, qb);
    }

    /// decode(encode(qv)) is the identity and the size formula is exact.
    #[test]
    fn codec_round_trip(
        delta in 1e-6f64..1e6,
        bits in 1u8..=16,
        codes_unit in proptest::collection::vec(0.0f64..1.0, 1..200),
    ) {
        let grid = QuantGrid::new(delta, bits).unwrap();
        let codes: Vec<i32> = codes_unit
            .iter()
            .map(|&x| grid.min_code() + (x * (grid.max_code() - grid.min_code()) as f64).round() as i32)
            .collect();
        let dim = codes.len();
        let qv = QuantizedVector::new(grid, codes).unwrap();
        let bytes = wire::encode(&qv);
        prop_assert_eq!(bytes.len(), wire::encoded_len(dim, bits));
        let back = wire::decode(&bytes).unwrap();
        prop_assert_eq!(back, qv);
    }
}

/// Monte-Carlo draws agree with the analytic one-step law.
#[test]
fn sampler_matches_analytic_law() {
    let grid = QuantGrid::new(0.37, 3).unwrap();
    let mut rng = RandomSource::new(1234, 1);
    for &v in &[0.1, -0.4, 0.9, -1.4, 0.0, 0.37] {
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let q = quantize_scalar(v, &grid, &mut rng).unwrap();
            sum += q;
            sum_sq += q * q;
        }
        let mc_mean = sum / n as f64;
        let mc_second = sum_sq / n as f64;
        let mean = exact_mean(v, &grid).unwrap();
        let second = exact_second_moment(v, 0.0, &grid).unwrap();
        // Four standard errors of the Monte-Carlo estimates.
        let se_mean = 4.0 * (second - mean * mean).max(0.0).sqrt() / (n as f64).sqrt();
        assert!(
            (mc_mean - mean).abs() <= se_mean + 1e-9,
            "v = {v}: mc mean {mc_mean} vs {mean}"
        );
        assert!(
            (mc_second - second).abs() <= 6.0 * second.max(0.05) / (n as f64).sqrt() + 1e-9,
            "v = {v}: mc second {mc_second} vs {second}"
        );
    }
}

/// Requantizing an already-quantized vector is the identity.
#[test]
fn requantization_is_identity() {
    let grid = QuantGrid::new(0.21, 6).unwrap();
    let mut vals = RandomSource::new(8, 4);
    let u: Vec<f64> = (0..50).map(|_| (vals.next_uniform() - 0.5) * 10.0).collect();
    let mut rng = RandomSource::new(3, 1);
    let first = quantize_vector(&u, &grid, &mut rng).unwrap();
    let z = first.decode();
    let mut rng2 = RandomSource::new(7, 1);
    let again = quantize_vector(&z, &grid, &mut rng2).unwrap();
    assert_eq!(again.codes(), first.codes());
}

//! Empirical convergence-rate fitting.
//!
//! A strongly convex run whose expected suboptimality decays like `1/t`
//! shows up as slope -1 in log-log coordinates; the fit below measures that
//! slope over a chosen epoch window.

use std::fmt;
use thiserror::Error;

/// Suboptimality values below this are floored before taking logs.
pub const SUBOPT_FLOOR: f64 = 1e-15;

/// Minimum number of points for a meaningful fit.
pub const MIN_WINDOW_POINTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("window [{t_lo}, {t_hi}] covers {points} points; at least {MIN_WINDOW_POINTS} required")]
    WindowTooSmall { t_lo: u64, t_hi: u64, points: usize },
}

/// Least-squares line through `(ln t, ln suboptimality)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub t_lo: u64,
    pub t_hi: u64,
    pub r2: f64,
}

impl fmt::Display for RateFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slope = {:.6}, intercept = {:.6}, window = [{}, {}], r2 = {:.6}",
            self.slope, self.intercept, self.t_lo, self.t_hi, self.r2
        )
    }
}

/// Fit `log(subopt)` against `log(t)` over epochs `t` in `[t_lo, t_hi]`.
///
/// Epoch 0 can never enter the window (its log is undefined); suboptimality
/// is floored at [`SUBOPT_FLOOR`] so exactly-converged runs stay finite.
pub fn fit_convergence_slope(
    series: &[(u64, f64)],
    t_lo: u64,
    t_hi: u64,
) -> Result<RateFit, FitError> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= t_lo.max(1) && *t <= t_hi)
        .map(|(t, y)| ((*t as f64).ln(), y.max(SUBOPT_FLOOR).ln()))
        .collect();
    if points.len() < MIN_WINDOW_POINTS {
        return Err(FitError::WindowTooSmall {
            t_lo,
            t_hi,
            points: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    // A constant series (variance at round-off scale) is fit perfectly by
    // its own level.
    let degenerate = syy <= 1e-26 * n * (1.0 + mean_y * mean_y);
    let r2 = if degenerate {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        t_lo,
        t_hi,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_has_slope_minus_one() {
        let series: Vec<(u64, f64)> = (1..=100).map(|t| (t, 1.0 / t as f64)).collect();
        let fit = fit_convergence_slope(&series, 1, 100).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6, "slope {}", fit.slope);
        assert!(fit.r2 > 0.999999);
    }

    #[test]
    fn constant_series_has_slope_zero() {
        let series: Vec<(u64, f64)> = (1..=50).map(|t| (t, 0.25)).collect();
        let fit = fit_convergence_slope(&series, 1, 50).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn window_restricts_points() {
        let series: Vec<(u64, f64)> = (0..=100)
            .map(|t| (t, if t < 50 { 1.0 } else { 1.0 / t as f64 }))
            .collect();
        let fit = fit_convergence_slope(&series, 50, 100).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6);
    }

    #[test]
    fn small_window_rejected() {
        let series: Vec<(u64, f64)> = (1..=4).map(|t| (t, 1.0 / t as f64)).collect();
        assert!(matches!(
            fit_convergence_slope(&series, 1, 4),
            Err(FitError::WindowTooSmall { points: 4, .. })
        ));
    }

    #[test]
    fn zero_suboptimality_is_floored() {
        let series: Vec<(u64, f64)> = (1..=10).map(|t| (t, 0.0)).collect();
        let fit = fit_convergence_slope(&series, 1, 10).unwrap();
        assert!(fit.slope.abs() < 1e-15);
    }

    #[test]
    fn quadratic_decay_has_slope_minus_two() {
        let series: Vec<(u64, f64)> = (1..=60).map(|t| (t, 1.0 / (t * t) as f64)).collect();
        let fit = fit_convergence_slope(&series, 10, 60).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-6);
    }
}

//! Finite-sum strongly convex objectives with exact oracles.
//!
//! Two problem families are supported:
//!
//! - **Ridge regression**: `f_i(w) = 1/2 (x_i^T w - y_i)^2 + lambda/2 ||w||^2`
//! - **L2-regularized logistic regression**:
//!   `f_i(w) = ln(1 + exp(-y_i x_i^T w)) + lambda/2 ||w||^2`, targets in {-1, +1}
//!
//! The regularizer is folded into every component, so each `f_i` is
//! individually `mu`-strongly convex and the finite-sum average keeps a single
//! regularizer term.
//!
//! A [`ProblemSpec`] carries the dataset together with everything the
//! schedules and the verification suite need: the strong-convexity and
//! smoothness constants `mu` and `L` (extreme eigenvalues of
//! `X^T X / n + lambda I` for ridge; `lambda` and `sigma_max(X^T X)/(4n) +
//! lambda` for logistic), a stochastic-gradient norm bound `G`, and the exact
//! optimum `(w*, F(w*))`. Ridge optima come from a direct normal-equations
//! solve; logistic optima from deterministic full-gradient descent run to
//! gradient norm 1e-10, tighter than any tolerance reported downstream.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::linalg;
use crate::math;
use crate::rng::{RandomSource, STREAM_DATAGEN};

/// Gradient-norm tolerance certified for a ridge `w*`.
pub const RIDGE_OPT_TOL: f64 = 1e-10;
/// Gradient-norm tolerance certified for a logistic `w*`.
pub const LOGISTIC_OPT_TOL: f64 = 1e-8;

/// Logistic descent runs until the gradient norm falls below this.
const LOGISTIC_SOLVE_TOL: f64 = 1e-10;
const LOGISTIC_SOLVE_MAX_ITERS: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("features/targets shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset contains a non-finite entry")]
    NonFinite,
    #[error("dataset must have n >= 1 and d >= 1")]
    EmptyDataset,
    #[error("logistic targets must be -1 or +1, found {0}")]
    BadTarget(f64),
    #[error("vector has dimension {got}, problem dimension is {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("sample index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("batch must contain at least one sample index")]
    EmptyBatch,
    #[error("lambda must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("logistic regression requires lambda > 0 for strong convexity")]
    LogisticNeedsRegularization,
    #[error("condition target {0} is not achievable: {1}")]
    InfeasibleCondition(f64, String),
    #[error("synthetic generation requires n >= d >= 1, got n = {n}, d = {d}")]
    BadShape { n: usize, d: usize },
    #[error("normal equations are singular; set lambda > 0 to regularize rank-deficient features")]
    SingularSystem,
    #[error("optimum solver did not reach gradient norm {tol} (best {best})")]
    NoConvergence { tol: f64, best: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Ridge,
    LogisticL2,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Ridge => "ridge",
            ProblemKind::LogisticL2 => "logistic-l2",
        }
    }
}

/// An `n x d` design matrix (row-major) plus length-`n` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    targets: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, targets: Vec<f64>, n: usize, d: usize) -> Result<Self, ProblemError> {
        if n == 0 || d == 0 {
            return Err(ProblemError::EmptyDataset);
        }
        if features.len() != n * d {
            return Err(ProblemError::ShapeMismatch(format!(
                "features has {} entries, expected n*d = {}",
                features.len(),
                n * d
            )));
        }
        if targets.len() != n {
            return Err(ProblemError::ShapeMismatch(format!(
                "targets has {} entries, expected n = {}",
                targets.len(),
                n
            )));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite);
        }
        Ok(Self { features, targets, n, d })
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `X^T X / n`, row-major `d x d`.
    fn gram_mean(&self) -> Vec<f64> {
        let d = self.d;
        let mut s = vec![0.0; d * d];
        for i in 0..self.n {
            let x = self.row(i);
            for a in 0..d {
                for b in a..d {
                    s[a * d + b] += x[a] * x[b];
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        for a in 0..d {
            for b in a..d {
                let v = s[a * d + b] * inv_n;
                s[a * d + b] = v;
                s[b * d + a] = v;
            }
        }
        s
    }
}

/// The loss slope at margin `m = x^T w` (regularizer excluded): the per-sample
/// gradient is `slope * x + lambda * w`.
fn loss_slope(kind: ProblemKind, margin: f64, target: f64) -> f64 {
    match kind {
        ProblemKind::Ridge => margin - target,
        ProblemKind::LogisticL2 => -target * sigmoid(-target * margin),
    }
}

fn loss_value(kind: ProblemKind, margin: f64, target: f64) -> f64 {
    match kind {
        ProblemKind::Ridge => {
            let r = margin - target;
            0.5 * r * r
        }
        ProblemKind::LogisticL2 => logistic_loss(target * margin),
    }
}

fn raw_objective(kind: ProblemKind, dataset: &Dataset, lambda: f64, w: &[f64]) -> f64 {
    let n = dataset.num_samples();
    let mut acc = 0.0;
    for i in 0..n {
        let margin = math::dot(dataset.row(i), w);
        acc += loss_value(kind, margin, dataset.target(i));
    }
    acc / n as f64 + 0.5 * lambda * math::dot(w, w)
}

fn raw_full_gradient(kind: ProblemKind, dataset: &Dataset, lambda: f64, w: &[f64]) -> Vec<f64> {
    let n = dataset.num_samples();
    let d = dataset.dim();
    let mut acc = vec![0.0; d];
    for i in 0..n {
        let x = dataset.row(i);
        let slope = loss_slope(kind, math::dot(x, w), dataset.target(i));
        for j in 0..d {
            acc[j] += slope * x[j] + lambda * w[j];
        }
    }
    let inv_n = 1.0 / n as f64;
    for v in acc.iter_mut() {
        *v *= inv_n;
    }
    acc
}

/// A strongly convex finite-sum problem with all derived constants attached.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    kind: ProblemKind,
    dataset: Dataset,
    lambda: f64,
    mu: f64,
    smoothness: f64,
    kappa: f64,
    second_moment_bound: f64,
    w_star: Vec<f64>,
    f_star: f64,
}

impl ProblemSpec {
    /// Build a spec from a dataset: solves for the optimum and fills in the
    /// constants `(mu, L, kappa, G)`.
    pub fn from_dataset(kind: ProblemKind, dataset: Dataset, lambda: f64) -> Result<Self, ProblemError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(ProblemError::InvalidLambda(lambda));
        }
        if kind == ProblemKind::LogisticL2 {
            if lambda == 0.0 {
                return Err(ProblemError::LogisticNeedsRegularization);
            }
            for &t in dataset.targets() {
                if t != 1.0 && t != -1.0 {
                    return Err(ProblemError::BadTarget(t));
                }
            }
        }

        let (mu, smoothness) = curvature_constants(kind, &dataset, lambda);
        if mu <= 0.0 {
            return Err(ProblemError::SingularSystem);
        }
        let (w_star, f_star) = solve_exact(kind, &dataset, lambda)?;

        // Certify the optimum at the kind-specific tolerance.
        let tol = match kind {
            ProblemKind::Ridge => RIDGE_OPT_TOL,
            ProblemKind::LogisticL2 => LOGISTIC_OPT_TOL,
        };
        let grad_norm = math::norm2(&raw_full_gradient(kind, &dataset, lambda, &w_star));
        if grad_norm > tol {
            return Err(ProblemError::NoConvergence { tol, best: grad_norm });
        }

        let mut spec = Self {
            kind,
            dataset,
            lambda,
            mu,
            smoothness,
            kappa: smoothness / mu,
            second_moment_bound: 0.0,
            w_star,
            f_star,
        };
        spec.second_moment_bound = spec.estimate_second_moment_bound();
        Ok(spec)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn num_samples(&self) -> usize {
        self.dataset.num_samples()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Strong convexity constant.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smoothness constant `L`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Condition number `L / mu`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Empirical bound on `max_i ||grad f_i||`, probed at `0` and `w*` with a
    /// 2x safety factor. Reporting only; never enters the update rule.
    pub fn second_moment_bound(&self) -> f64 {
        self.second_moment_bound
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `F(w) - F(w*)`, the objective gap reported in trajectories.
    pub fn suboptimality(&self, w: &[f64]) -> Result<f64, ProblemError> {
        Ok(self.full_objective(w)? - self.f_star)
    }

    fn check_dim(&self, w: &[f64]) -> Result<(), ProblemError> {
        if w.len() != self.dim() {
            return Err(ProblemError::DimMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// The finite-sum average `F(w)`.
    pub fn full_objective(&self, w: &[f64]) -> Result<f64, ProblemError> {
        self.check_dim(w)?;
        Ok(raw_objective(self.kind, &self.dataset, self.lambda, w))
    }

    /// Accumulate `grad f_i(w)` (regularizer included) into `acc`.
    ///
    /// Both the batch oracle and the simulated workers sum per-sample
    /// gradients through this single code path, in index order, so
    /// distributed runs reproduce single-process arithmetic exactly.
    pub(crate) fn accumulate_gradient(&self, w: &[f64], i: usize, acc: &mut [f64]) {
        let x = self.dataset.row(i);
        let slope = loss_slope(self.kind, math::dot(x, w), self.dataset.target(i));
        for j in 0..w.len() {
            acc[j] += slope * x[j] + self.lambda * w[j];
        }
    }

    /// Un-averaged sum of per-sample gradients over `indices`, in order.
    pub fn gradient_sum(&self, w: &[f64], indices: &[usize]) -> Result<Vec<f64>, ProblemError> {
        self.check_dim(w)?;
        if indices.is_empty() {
            return Err(ProblemError::EmptyBatch);
        }
        let n = self.num_samples();
        let mut acc = vec![0.0; w.len()];
        for &i in indices {
            if i >= n {
                return Err(ProblemError::IndexOutOfRange { index: i, n });
            }
            self.accumulate_gradient(w, i, &mut acc);
        }
        Ok(acc)
    }

    /// Averaged mini-batch gradient over `indices`.
    pub fn stochastic_gradient(&self, w: &[f64], indices: &[usize]) -> Result<Vec<f64>, ProblemError> {
        let mut acc = self.gradient_sum(w, indices)?;
        let inv = 1.0 / indices.len() as f64;
        for v in acc.iter_mut() {
            *v *= inv;
        }
        Ok(acc)
    }

    /// `grad F(w)`: the batch gradient over all samples.
    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_dim(w)?;
        Ok(raw_full_gradient(self.kind, &self.dataset, self.lambda, w))
    }

    fn estimate_second_moment_bound(&self) -> f64 {
        let zeros = vec![0.0; self.dim()];
        let mut worst = 0.0f64;
        for probe in [&zeros[..], &self.w_star[..]] {
            for i in 0..self.num_samples() {
                let mut g = vec![0.0; self.dim()];
                self.accumulate_gradient(probe, i, &mut g);
                let norm = math::norm2(&g);
                if norm > worst {
                    worst = norm;
                }
            }
        }
        2.0 * worst
    }
}

/// Numerically stable `ln(1 + exp(-t))`.
fn logistic_loss(t: f64) -> f64 {
    if t >= 0.0 {
        math::ln_1p(math::exp(-t))
    } else {
        -t + math::ln_1p(math::exp(t))
    }
}

/// Numerically stable `1 / (1 + exp(-t))`.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + math::exp(-t))
    } else {
        let e = math::exp(t);
        e / (1.0 + e)
    }
}

/// `(mu, L)` for the given problem family.
fn curvature_constants(kind: ProblemKind, dataset: &Dataset, lambda: f64) -> (f64, f64) {
    let eig = linalg::sym_eigenvalues(&dataset.gram_mean(), dataset.dim());
    let (min_eig, max_eig) = (eig[0], eig[eig.len() - 1]);
    match kind {
        ProblemKind::Ridge => (min_eig.max(0.0) + lambda, max_eig + lambda),
        ProblemKind::LogisticL2 => (lambda, max_eig / 4.0 + lambda),
    }
}

/// Exact (or high-precision) optimum of the regularized objective.
///
/// Ridge solves the normal equations `(X^T X / n + lambda I) w = X^T y / n`
/// directly; logistic runs deterministic full-gradient descent until the
/// gradient norm drops below 1e-10.
pub fn solve_exact(kind: ProblemKind, dataset: &Dataset, lambda: f64) -> Result<(Vec<f64>, f64), ProblemError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ProblemError::InvalidLambda(lambda));
    }
    match kind {
        ProblemKind::Ridge => {
            let d = dataset.dim();
            let mut a = dataset.gram_mean();
            for j in 0..d {
                a[j * d + j] += lambda;
            }
            let mut rhs = vec![0.0; d];
            let inv_n = 1.0 / dataset.num_samples() as f64;
            for i in 0..dataset.num_samples() {
                let x = dataset.row(i);
                let y = dataset.target(i);
                for j in 0..d {
                    rhs[j] += x[j] * y * inv_n;
                }
            }
            let w = linalg::cholesky_solve(&a, &rhs, d).map_err(|_| ProblemError::SingularSystem)?;
            let f = raw_objective(kind, dataset, lambda, &w);
            Ok((w, f))
        }
        ProblemKind::LogisticL2 => {
            if lambda == 0.0 {
                return Err(ProblemError::LogisticNeedsRegularization);
            }
            let (mu, l) = curvature_constants(kind, dataset, lambda);
            let step = 2.0 / (mu + l);
            let mut w = vec![0.0; dataset.dim()];
            let mut best = f64::INFINITY;
            for _ in 0..LOGISTIC_SOLVE_MAX_ITERS {
                let g = raw_full_gradient(kind, dataset, lambda, &w);
                let norm = math::norm2(&g);
                best = best.min(norm);
                if norm <= LOGISTIC_SOLVE_TOL {
                    let f = raw_objective(kind, dataset, lambda, &w);
                    return Ok((w, f));
                }
                math::axpy(-step, &g, &mut w);
            }
            Err(ProblemError::NoConvergence {
                tol: LOGISTIC_SOLVE_TOL,
                best,
            })
        }
    }
}

/// Deterministically generate a synthetic problem with a controlled spectrum.
///
/// Features are `X = W diag(s_j sqrt(n)) V^T` with column-orthonormal `W`
/// (n x d) and orthogonal `V` (d x d), so the eigenvalues of `X^T X / n` are
/// exactly `s_j^2` up to orthonormalization round-off. For ridge the spectrum
/// is placed so the condition number of `X^T X / n + lambda I` equals
/// `condition_target`; for logistic the feature scale is chosen so
/// `L / mu = condition_target` with `mu = lambda`.
///
/// Targets are `y = X w_true + noise * eps` for ridge and
/// `sign(X w_true + noise * eps)` for logistic, with `||w_true|| = 1`.
/// Deterministic in all arguments.
pub fn gen_synthetic(
    kind: ProblemKind,
    n: usize,
    d: usize,
    seed: u64,
    condition_target: f64,
    noise: f64,
    lambda: f64,
) -> Result<ProblemSpec, ProblemError> {
    if n < d || d == 0 {
        return Err(ProblemError::BadShape { n, d });
    }
    if !condition_target.is_finite() || condition_target < 1.0 {
        return Err(ProblemError::InfeasibleCondition(
            condition_target,
            String::from("condition target must be a finite value >= 1"),
        ));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(ProblemError::NonFinite);
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ProblemError::InvalidLambda(lambda));
    }

    let mut rng = RandomSource::new(seed, STREAM_DATAGEN);

    // Spectrum of X^T X / n.
    let spectrum_sq: Vec<f64> = match kind {
        ProblemKind::Ridge => {
            let hi = 1.0;
            let lo = (hi + lambda) / condition_target - lambda;
            if lo <= 0.0 {
                return Err(ProblemError::InfeasibleCondition(
                    condition_target,
                    format!("lambda = {lambda} already bounds the condition below the target"),
                ));
            }
            if d == 1 && condition_target > 1.2 {
                return Err(ProblemError::InfeasibleCondition(
                    condition_target,
                    String::from("a 1-dimensional ridge problem always has condition 1"),
                ));
            }
            geometric_spectrum(lo, hi, d)
        }
        ProblemKind::LogisticL2 => {
            if lambda == 0.0 {
                return Err(ProblemError::LogisticNeedsRegularization);
            }
            if condition_target <= 1.0 {
                return Err(ProblemError::InfeasibleCondition(
                    condition_target,
                    String::from("logistic condition L/mu = 1 requires zero features"),
                ));
            }
            let hi = 4.0 * lambda * (condition_target - 1.0);
            geometric_spectrum(hi / condition_target, hi, d)
        }
    };

    let w_mat = orthonormal_columns(n, d, &mut rng);
    let v_mat = orthonormal_columns(d, d, &mut rng);

    // X[i][k] = sum_j W[i][j] * s_j * sqrt(n) * V[k][j]
    let sqrt_n = math::sqrt(n as f64);
    let mut features = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            let scale = w_mat[i * d + j] * math::sqrt(spectrum_sq[j]) * sqrt_n;
            for k in 0..d {
                features[i * d + k] += scale * v_mat[k * d + j];
            }
        }
    }

    let mut w_true: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
    let norm = math::norm2(&w_true);
    if norm > 0.0 {
        for v in w_true.iter_mut() {
            *v /= norm;
        }
    } else {
        w_true[0] = 1.0;
    }

    let mut targets = vec![0.0; n];
    for i in 0..n {
        let clean = math::dot(&features[i * d..(i + 1) * d], &w_true);
        let noisy = clean + noise * rng.next_gaussian();
        targets[i] = match kind {
            ProblemKind::Ridge => noisy,
            ProblemKind::LogisticL2 => {
                if noisy >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
    }

    ProblemSpec::from_dataset(kind, Dataset::new(features, targets, n, d)?, lambda)
}

/// Geometrically spaced values from `lo` to `hi` inclusive.
fn geometric_spectrum(lo: f64, hi: f64, d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![hi];
    }
    let log_ratio = math::ln(hi / lo);
    (0..d)
        .map(|j| lo * math::exp(log_ratio * j as f64 / (d - 1) as f64))
        .collect()
}

/// Column-orthonormalize a seeded Gaussian `rows x cols` matrix (row-major)
/// by modified Gram-Schmidt. Requires `rows >= cols`.
fn orthonormal_columns(rows: usize, cols: usize, rng: &mut RandomSource) -> Vec<f64> {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
    for j in 0..cols {
        let mut norm = orthogonalize_column(&mut m, rows, cols, j);
        while norm < 1e-12 {
            // A dependent Gaussian column is a measure-zero accident; redraw
            // it deterministically from the same stream.
            for r in 0..rows {
                m[r * cols + j] = rng.next_gaussian();
            }
            norm = orthogonalize_column(&mut m, rows, cols, j);
        }
        for r in 0..rows {
            m[r * cols + j] /= norm;
        }
    }
    m
}

/// Project column `j` against columns `0..j` and return its remaining norm.
fn orthogonalize_column(m: &mut [f64], rows: usize, cols: usize, j: usize) -> f64 {
    for prev in 0..j {
        let mut proj = 0.0;
        for r in 0..rows {
            proj += m[r * cols + j] * m[r * cols + prev];
        }
        for r in 0..rows {
            m[r * cols + j] -= proj * m[r * cols + prev];
        }
    }
    let mut norm_sq = 0.0;
    for r in 0..rows {
        norm_sq += m[r * cols + j] * m[r * cols + j];
    }
    math::sqrt(norm_sq)
}

//! Elastic-net linear regression by cyclic coordinate descent.
//!
//! Minimizes over `(b0, β)`:
//!
//! ```text
//! (1/2n)·‖y − b0 − Xβ‖² + λ·(α·‖β‖₁ + (1−α)/2·‖β‖²)
//! ```
//!
//! on internally standardized features (zero mean, unit population variance).
//! The intercept is not penalized. `λ = 0` gives OLS, `α = 0` ridge and
//! `α = 1` lasso. Coefficients are reported on the original feature scale.
//!
//! Sweeps use covariance updates: the `p×p` Gram matrix and `Xᵀy` are formed
//! once, so each sweep costs `O(p²)` regardless of `n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative standard deviation below which a column (or target) counts as constant.
const FLAT_EPS: f64 = 1e-12;

/// Validation errors within this relative distance are considered tied.
const TIE_EPS: f64 = 1e-12;

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "design data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    /// Rows `from..to` as a new matrix.
    pub fn slice_rows(&self, from: usize, to: usize) -> Design {
        Design { rows: to - from, cols: self.cols, data: self.data[from * self.cols..to * self.cols].to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub alpha: f64,
    /// Convergence threshold on the largest per-sweep change of a standardized coefficient.
    pub tol: f64,
    pub max_iter: usize,
}

impl FitConfig {
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_MAX_ITER: usize = 10_000;

    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        let cfg = Self { lambda, alpha, tol: Self::DEFAULT_TOL, max_iter: Self::DEFAULT_MAX_ITER };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ols() -> Self {
        Self::new(0.0, 0.0).expect("valid")
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    fn penalty(&self, beta: &[f64]) -> f64 {
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = beta.iter().map(|b| b * b).sum();
        self.lambda * (self.alpha * l1 + 0.5 * (1.0 - self.alpha) * l2)
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self::ols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub intercept: f64,
    /// Original-scale coefficients.
    pub coefficients: Vec<f64>,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub n_sweeps: usize,
    pub converged: bool,
    /// Penalized objective on the standardized problem at the returned solution.
    pub final_objective: f64,
}

impl FitResult {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    /// Coefficients on the standardized scale the penalty acts on.
    pub fn standardized_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.feature_scales).map(|(c, s)| c * s).collect()
    }
}

/// `sign(z)·max(|z| − gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn is_flat(sd: f64, mean: f64) -> bool {
    sd <= FLAT_EPS * mean.abs().max(1.0)
}

fn mean_sd(vals: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = vals.clone().sum::<f64>() / n as f64;
    let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Standardized problem shared by the solver and the objective trace.
struct Problem<'a> {
    x: &'a Design,
    y: &'a [f64],
    means: Vec<f64>,
    scales: Vec<f64>,
    active: Vec<bool>,
    y_mean: f64,
    gram: Vec<f64>,
    xty: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(x: &'a Design, y: &'a [f64]) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut active = Vec::with_capacity(p);
        for j in 0..p {
            let (m, s) = mean_sd(x.column(j), n);
            means.push(m);
            active.push(!is_flat(s, m));
            scales.push(s);
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;

        let std = |i: usize, j: usize| {
            if active[j] {
                (x.get(i, j) - means[j]) / scales[j]
            } else {
                0.0
            }
        };
        let mut gram = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for (i, yi) in y.iter().enumerate() {
            let yc = yi - y_mean;
            for j in 0..p {
                let xij = std(i, j);
                xty[j] += xij * yc;
                for k in j..p {
                    gram[j * p + k] += xij * std(i, k);
                }
            }
        }
        for j in 0..p {
            xty[j] /= n as f64;
            for k in j..p {
                gram[j * p + k] /= n as f64;
                gram[k * p + j] = gram[j * p + k];
            }
        }
        Self { x, y, means, scales, active, y_mean, gram, xty }
    }

    /// Objective on the standardized problem, evaluated from residuals.
    fn objective(&self, beta: &[f64], cfg: &FitConfig) -> f64 {
        let (n, p) = (self.x.rows(), self.x.cols());
        let mut rss = 0.0;
        for i in 0..n {
            let mut fit = 0.0;
            for (j, b) in beta.iter().enumerate().take(p) {
                if self.active[j] {
                    fit += b * (self.x.get(i, j) - self.means[j]) / self.scales[j];
                }
            }
            let r = self.y[i] - self.y_mean - fit;
            rss += r * r;
        }
        rss / (2.0 * n as f64) + cfg.penalty(beta)
    }

    fn into_result(self, beta: &[f64], cfg: &FitConfig, n_sweeps: usize, converged: bool) -> FitResult {
        let final_objective = self.objective(beta, cfg);
        let coefficients: Vec<f64> =
            (0..beta.len()).map(|j| if self.active[j] { beta[j] / self.scales[j] } else { 0.0 }).collect();
        let intercept = self.y_mean - coefficients.iter().zip(&self.means).map(|(c, m)| c * m).sum::<f64>();
        FitResult {
            intercept,
            coefficients,
            feature_means: self.means,
            feature_scales: self.scales,
            n_sweeps,
            converged,
            final_objective,
        }
    }
}

fn check_inputs(x: &Design, y: &[f64], cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::TooFewRows { rows: 0 });
    }
    if x.cols() == 0 {
        return Err(Error::InvalidArgument("design has no feature columns".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::InvalidArgument(format!("target has {} entries, design has {} rows", y.len(), x.rows())));
    }
    if !x.data.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn solve(x: &Design, y: &[f64], cfg: &FitConfig, mut trace: Option<&mut Vec<f64>>) -> Result<FitResult> {
    check_inputs(x, y, cfg)?;
    let prob = Problem::new(x, y);
    let p = x.cols();
    let mut beta = vec![0.0; p];

    let (_, y_sd) = mean_sd(y.iter().copied(), y.len());
    if is_flat(y_sd, prob.y_mean) {
        if let Some(t) = trace.as_deref_mut() {
            t.push(prob.objective(&beta, cfg));
        }
        return Ok(prob.into_result(&beta, cfg, 0, true));
    }

    if let Some(t) = trace.as_deref_mut() {
        t.push(prob.objective(&beta, cfg));
    }
    let l1 = cfg.lambda * cfg.alpha;
    let l2 = cfg.lambda * (1.0 - cfg.alpha);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if !prob.active[j] {
                continue;
            }
            let row = &prob.gram[j * p..(j + 1) * p];
            let partial: f64 = (0..p).filter(|&k| k != j).map(|k| row[k] * beta[k]).sum();
            let z = prob.xty[j] - partial;
            let next = soft_threshold(z, l1) / (row[j] + l2);
            max_change = max_change.max((next - beta[j]).abs());
            beta[j] = next;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(prob.objective(&beta, cfg));
        }
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(prob.into_result(&beta, cfg, sweeps, converged))
}

/// Fit an elastic-net model to `x` (n×p) and `y` (n).
///
/// A constant target yields `intercept = mean(y)`, zero coefficients and
/// `converged = true`. Constant feature columns always get coefficient 0.
pub fn fit(x: &Design, y: &[f64], cfg: &FitConfig) -> Result<FitResult> {
    solve(x, y, cfg, None)
}

/// Like [`fit`], also returning the objective before the first sweep and after each sweep.
pub fn fit_traced(x: &Design, y: &[f64], cfg: &FitConfig) -> Result<(FitResult, Vec<f64>)> {
    let mut trace = Vec::new();
    let res = solve(x, y, cfg, Some(&mut trace))?;
    Ok((res, trace))
}

pub fn predict_row(model: &FitResult, row: &[f64]) -> Result<f64> {
    if row.len() != model.n_features() {
        return Err(Error::DimensionMismatch { expected: model.n_features(), got: row.len() });
    }
    Ok(model.intercept + model.coefficients.iter().zip(row).map(|(c, v)| c * v).sum::<f64>())
}

pub fn predict(model: &FitResult, x: &Design) -> Result<Vec<f64>> {
    if x.cols() != model.n_features() {
        return Err(Error::DimensionMismatch { expected: model.n_features(), got: x.cols() });
    }
    (0..x.rows()).map(|i| predict_row(model, x.row(i))).collect()
}

/// Choose the grid point with the lowest mean-squared error on the last
/// `val_len` rows after fitting on the rows before them.
///
/// Ties go to the larger `lambda`, then to the earlier grid entry.
pub fn select_hyperparams(x: &Design, y: &[f64], grid: &[FitConfig], val_len: usize) -> Result<FitConfig> {
    let first = *grid.first().ok_or_else(|| Error::Config("hyperparameter grid is empty".into()))?;
    if grid.len() == 1 {
        return Ok(first);
    }
    if val_len == 0 {
        return Err(Error::InvalidArgument("validation tail must hold at least one row".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::InvalidArgument("target and design lengths differ".into()));
    }
    let n_fit = x.rows().saturating_sub(val_len);
    if n_fit < 2 {
        return Err(Error::TooFewRows { rows: n_fit });
    }
    let (x_fit, x_val) = (x.slice_rows(0, n_fit), x.slice_rows(n_fit, x.rows()));
    let (y_fit, y_val) = (&y[..n_fit], &y[n_fit..]);

    let mut best: Option<(FitConfig, f64)> = None;
    for cfg in grid {
        let model = fit(&x_fit, y_fit, cfg)?;
        let pred = predict(&model, &x_val)?;
        let mse = pred.iter().zip(y_val).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / val_len as f64;
        best = match best {
            None => Some((*cfg, mse)),
            Some((b, b_mse)) => {
                let tied = (mse - b_mse).abs() <= TIE_EPS * b_mse.abs().max(1.0);
                if (tied && cfg.lambda > b.lambda) || (!tied && mse < b_mse) {
                    Some((*cfg, mse))
                } else {
                    Some((b, b_mse))
                }
            }
        };
    }
    Ok(best.expect("grid non-empty").0)
}

/// Estimator family; each expands to a grid of [`FitConfig`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    ElasticNet,
    Ols,
    Ridge,
    Lasso,
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "elasticnet" | "elastic-net" | "enet" => Ok(Self::ElasticNet),
            "ols" => Ok(Self::Ols),
            "ridge" => Ok(Self::Ridge),
            "lasso" => Ok(Self::Lasso),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ElasticNet => "elasticnet",
            Self::Ols => "ols",
            Self::Ridge => "ridge",
            Self::Lasso => "lasso",
        })
    }
}

/// Candidate configurations plus the chronological validation tail length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub configs: Vec<FitConfig>,
    pub val_len: usize,
}

impl HyperGrid {
    pub const DEFAULT_LAMBDAS: [f64; 5] = [0.0, 0.001, 0.01, 0.1, 1.0];
    pub const DEFAULT_ALPHAS: [f64; 1] = [0.5];
    pub const DEFAULT_VAL_LEN: usize = 14;

    pub fn for_estimator(est: Estimator) -> Self {
        Self::build(est, &Self::DEFAULT_LAMBDAS, &Self::DEFAULT_ALPHAS).expect("default grid is valid")
    }

    /// Expand `lambdas × alphas`; OLS ignores both, ridge and lasso pin alpha.
    pub fn build(est: Estimator, lambdas: &[f64], alphas: &[f64]) -> Result<Self> {
        let configs = match est {
            Estimator::Ols => vec![FitConfig::ols()],
            Estimator::Ridge => lambdas.iter().map(|&l| FitConfig::new(l, 0.0)).collect::<Result<_>>()?,
            Estimator::Lasso => lambdas.iter().map(|&l| FitConfig::new(l, 1.0)).collect::<Result<_>>()?,
            Estimator::ElasticNet => lambdas
                .iter()
                .flat_map(|&l| alphas.iter().map(move |&a| FitConfig::new(l, a)))
                .collect::<Result<_>>()?,
        };
        if configs.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        Ok(Self { configs, val_len: Self::DEFAULT_VAL_LEN })
    }

    pub fn with_val_len(mut self, val_len: usize) -> Self {
        self.val_len = val_len;
        self
    }

    /// Select on a chronological tail, then refit the winner on all rows.
    ///
    /// When there are too few rows for the configured tail, the tail shrinks
    /// to keep two fitting rows; with no room left, the first grid entry is used.
    pub fn fit_selected(&self, x: &Design, y: &[f64]) -> Result<FitResult> {
        let val_len = self.val_len.min(x.rows().saturating_sub(2));
        let cfg = if self.configs.len() == 1 || val_len == 0 {
            *self.configs.first().ok_or_else(|| Error::Config("hyperparameter grid is empty".into()))?
        } else {
            select_hyperparams(x, y, &self.configs, val_len)?
        };
        fit(x, y, &cfg)
    }
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self::for_estimator(Estimator::ElasticNet)
    }
}

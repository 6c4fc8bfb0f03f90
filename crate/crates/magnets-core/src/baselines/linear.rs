//! Mean, ordinary least squares, ridge, and lasso baselines on flattened
//! standardized series.
//!
//! OLS and ridge solve the (optionally damped) normal equations with a
//! Cholesky factorization; a rank-deficient unregularized system is reported
//! as an error suggesting ridge. Lasso minimizes
//! (1/2n)||y - Xw||^2 + lambda*|w|_1 by cyclic coordinate descent with
//! soft thresholding. Intercepts are never penalized (columns and targets are
//! centered during the solve).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::train::Standardizer;

/// Predicts the training-target mean.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanModel {
    pub mean: f64,
}

impl MeanModel {
    pub fn fit(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("fit_mean", "empty training set".into()));
        }
        Ok(MeanModel { mean: y.iter().sum::<f64>() / y.len() as f64 })
    }

    pub fn predict(&self, n: usize) -> Vec<f64> {
        vec![self.mean; n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Regularization {
    None,
    Ridge(f64),
    Lasso(f64),
}

impl Regularization {
    pub fn label(&self) -> &'static str {
        match self {
            Regularization::None => "ols",
            Regularization::Ridge(_) => "ridge",
            Regularization::Lasso(_) => "lasso",
        }
    }
}

/// Linear predictor over the flattened standardized series.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearBaseline {
    /// One weight per (channel, time) position, [c * t].
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub regularization: Regularization,
    pub scaler: Standardizer,
}

impl LinearBaseline {
    pub fn predict(&self, ds: &TimeSeriesDataset) -> Vec<f64> {
        (0..ds.n)
            .map(|i| {
                let row = self.scaler.transform_sample(ds.sample_x(i), ds.c, ds.t);
                self.intercept + crate::kernels::dot(&self.weights, &row)
            })
            .collect()
    }
}

/// Centered design matrix in column-major order plus centering statistics.
struct Design {
    cols: Vec<f64>,
    /// Per-column mean of the standardized features.
    col_mean: Vec<f64>,
    y_centered: Vec<f64>,
    y_mean: f64,
    n: usize,
    p: usize,
}

fn build_design(train: &TimeSeriesDataset, scaler: &Standardizer) -> Design {
    let (n, p) = (train.n, train.c * train.t);
    let mut cols = vec![0.0; p * n];
    let mut col_mean = vec![0.0; p];
    for i in 0..n {
        let row = scaler.transform_sample(train.sample_x(i), train.c, train.t);
        for (j, v) in row.iter().enumerate() {
            cols[j * n + i] = *v;
            col_mean[j] += v;
        }
    }
    for m in col_mean.iter_mut() {
        *m /= n as f64;
    }
    for j in 0..p {
        let m = col_mean[j];
        for v in &mut cols[j * n..][..n] {
            *v -= m;
        }
    }
    let y_mean = train.y.iter().sum::<f64>() / n as f64;
    let y_centered: Vec<f64> = train.y.iter().map(|y| y - y_mean).collect();
    Design { cols, col_mean, y_centered, y_mean, n, p }
}

fn finish(design: &Design, weights: Vec<f64>, reg: Regularization, scaler: Standardizer) -> LinearBaseline {
    let intercept = design.y_mean - crate::kernels::dot(&weights, &design.col_mean);
    LinearBaseline { weights, intercept, regularization: reg, scaler }
}

/// In-place Cholesky solve of (G)w = rhs for a symmetric positive definite G.
/// Fails when a pivot falls below `tol` times the largest initial diagonal.
fn cholesky_solve(mut g: Vec<f64>, p: usize, mut rhs: Vec<f64>, tol: f64) -> Result<Vec<f64>> {
    let max_diag = (0..p).map(|i| g[i * p + i]).fold(0.0f64, f64::max);
    for j in 0..p {
        for k in 0..j {
            let l_jk = g[j * p + k];
            for i in j..p {
                g[i * p + j] -= g[i * p + k] * l_jk;
            }
        }
        let d = g[j * p + j];
        if !(d > tol * max_diag.max(1e-300)) {
            return Err(Error::invalid(
                "fit_ols",
                format!("design matrix is numerically singular at column {j}; use ridge"),
            ));
        }
        let root = libm::sqrt(d);
        for i in j..p {
            g[i * p + j] /= root;
        }
    }
    // forward substitution L z = rhs
    for i in 0..p {
        for k in 0..i {
            rhs[i] -= g[i * p + k] * rhs[k];
        }
        rhs[i] /= g[i * p + i];
    }
    // back substitution L^T w = z
    for i in (0..p).rev() {
        for k in i + 1..p {
            rhs[i] -= g[k * p + i] * rhs[k];
        }
        rhs[i] /= g[i * p + i];
    }
    Ok(rhs)
}

fn solve_normal_equations(train: &TimeSeriesDataset, lambda: f64, reg: Regularization) -> Result<LinearBaseline> {
    if train.n == 0 {
        return Err(Error::invalid("fit_linear", "empty training set".into()));
    }
    let scaler = Standardizer::fit(train)?;
    let design = build_design(train, &scaler);
    let (n, p) = (design.n, design.p);

    // upper triangle of X^T X via rank-1 updates, then mirrored
    let mut gram = vec![0.0; p * p];
    for i in 0..n {
        for j in 0..p {
            let xj = design.cols[j * n + i];
            if xj == 0.0 {
                continue;
            }
            for k in j..p {
                gram[j * p + k] += xj * design.cols[k * n + i];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[j * p + k] = gram[k * p + j];
        }
        gram[j * p + j] += lambda;
    }
    let rhs: Vec<f64> = (0..p)
        .map(|j| crate::kernels::dot(&design.cols[j * n..][..n], &design.y_centered))
        .collect();
    let weights = cholesky_solve(gram, p, rhs, 1e-10)?;
    Ok(finish(&design, weights, reg, scaler))
}

pub fn fit_ols(train: &TimeSeriesDataset) -> Result<LinearBaseline> {
    solve_normal_equations(train, 0.0, Regularization::None)
}

pub fn fit_ridge(train: &TimeSeriesDataset, lambda: f64) -> Result<LinearBaseline> {
    solve_normal_equations(train, lambda, Regularization::Ridge(lambda))
}

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for the lasso objective
/// (1/2n)||y - Xw||^2 + lambda*|w|_1. Converges when the largest coefficient
/// change in a sweep drops below 1e-6, with a 1000-sweep budget.
pub fn fit_lasso(train: &TimeSeriesDataset, lambda: f64) -> Result<LinearBaseline> {
    if train.n == 0 {
        return Err(Error::invalid("fit_lasso", "empty training set".into()));
    }
    let scaler = Standardizer::fit(train)?;
    let design = build_design(train, &scaler);
    let (n, p) = (design.n, design.p);
    let inv_n = 1.0 / n as f64;
    let col_sq: Vec<f64> = (0..p)
        .map(|j| {
            let col = &design.cols[j * n..][..n];
            crate::kernels::dot(col, col) * inv_n
        })
        .collect();

    let mut w = vec![0.0; p];
    let mut residual = design.y_centered.clone();
    let mut converged = false;
    for _sweep in 0..1000 {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = &design.cols[j * n..][..n];
            let rho = crate::kernels::dot(col, &residual) * inv_n + col_sq[j] * w[j];
            let w_new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = w_new - w[j];
            if delta != 0.0 {
                crate::kernels::axpy(-delta, col, &mut residual);
                w[j] = w_new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < 1e-6 {
            converged = true;
            break;
        }
    }
    if !converged {
        // report the worst stationarity-condition violation
        let mut worst = 0.0f64;
        for j in 0..p {
            let col = &design.cols[j * n..][..n];
            let corr = crate::kernels::dot(col, &residual) * inv_n;
            let viol = if w[j] > 0.0 {
                (corr - lambda).abs()
            } else if w[j] < 0.0 {
                (corr + lambda).abs()
            } else {
                (corr.abs() - lambda).max(0.0)
            };
            worst = worst.max(viol);
        }
        return Err(Error::NoConvergence { what: String::from("lasso coordinate descent"), residual: worst });
    }
    Ok(finish(&design, w, Regularization::Lasso(lambda), scaler))
}

/// Lasso objective value for the current weights (used by tests).
pub fn lasso_objective(train: &TimeSeriesDataset, model: &LinearBaseline, lambda: f64) -> f64 {
    let pred = model.predict(train);
    let ss: f64 = train
        .y
        .iter()
        .zip(pred.iter())
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    ss / (2.0 * train.n as f64) + lambda * model.weights.iter().map(|w| w.abs()).sum::<f64>()
}

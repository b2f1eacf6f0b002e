//! Linear and log-linear models.
//!
//! Gaussian fits work on centered sufficient statistics (`XᵀX`, `Xᵀy` after
//! removing column means), so the intercept is never penalized and the cost
//! of a refit at a new penalty is independent of the row count.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FeatureMatrix, Standardization};
use super::LearnError;

/// Relative pivot below which a column counts as linearly dependent on the
/// columns before it (and on the intercept).
const DEPENDENCE_TOL: f64 = 1e-10;

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 100_000;
pub const POISSON_TOL: f64 = 1e-8;
pub const POISSON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianOls,
    GaussianLasso,
    GaussianRidge,
    Poisson,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearDiagnostics {
    pub n_obs: usize,
    pub r_squared: Option<f64>,
    pub adjusted_r_squared: Option<f64>,
    pub deviance: Option<f64>,
    pub intercept_std_error: Option<f64>,
    pub std_errors: Option<Vec<f64>>,
    /// `‖β_λ‖ / ‖β_OLS‖` in the penalty's norm (l1 for LASSO, l2 for ridge).
    pub shrinkage_ratio: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub family: Family,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub schema: Vec<String>,
    /// Applied to raw predictors before the linear predictor is formed.
    pub standardization: Option<Standardization>,
    pub diagnostics: LinearDiagnostics,
}

impl LinearModel {
    /// Linear predictor for predictors already on the model's scale.
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    fn response(&self, eta: f64) -> f64 {
        match self.family {
            Family::Poisson => eta.exp(),
            _ => eta,
        }
    }

    /// Predictions for predictors on the raw scale.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
        x.check_schema(&self.schema)?;
        let prepared;
        let x = match &self.standardization {
            Some(state) => {
                prepared = state.apply(x);
                &prepared
            }
            None => x,
        };
        Ok(self.predict_prepared(x))
    }

    /// Predictions for predictors that are already standardized (if the model is).
    pub(crate) fn predict_prepared(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|r| self.response(self.linear_predictor(x.row(r))))
            .collect()
    }
}

/// Column means plus centered cross products of a dataset.
pub(crate) struct Moments {
    pub n: usize,
    pub x_mean: Vec<f64>,
    pub y_mean: f64,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
}

impl Moments {
    pub fn of(d: &Dataset) -> Self {
        let (n, p) = (d.n_rows(), d.n_cols());
        let nf = n.max(1) as f64;
        let mut x_mean = vec![0.0; p];
        for r in 0..n {
            for (m, v) in x_mean.iter_mut().zip(d.x.row(r)) {
                *m += v;
            }
        }
        x_mean.iter_mut().for_each(|m| *m /= nf);
        let y_mean = d.y.iter().sum::<f64>() / nf;

        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut centered = vec![0.0; p];
        for r in 0..n {
            for ((c, v), m) in centered.iter_mut().zip(d.x.row(r)).zip(&x_mean) {
                *c = v - m;
            }
            let yc = d.y[r] - y_mean;
            for a in 0..p {
                let ca = centered[a];
                xty[a] += ca * yc;
                for b in a..p {
                    xtx[(a, b)] += ca * centered[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[(a, b)] = xtx[(b, a)];
            }
        }
        Self { n, x_mean, y_mean, xtx, xty }
    }

    fn intercept(&self, beta: &[f64]) -> f64 {
        self.y_mean - self.x_mean.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
    }

    /// Indices of columns that are constant or a linear combination of
    /// earlier columns, found by a pivot-skipping Cholesky of the correlation
    /// matrix.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let p = self.xtx.nrows();
        let scale: Vec<f64> = (0..p).map(|j| self.xtx[(j, j)].max(0.0).sqrt()).collect();
        let mut l = DMatrix::<f64>::zeros(p, p);
        let mut kept: Vec<usize> = Vec::with_capacity(p);
        let mut dependent = Vec::new();
        for j in 0..p {
            if scale[j] == 0.0 {
                dependent.push(j);
                continue;
            }
            let corr = |a: usize, b: usize| self.xtx[(a, b)] / (scale[a] * scale[b]);
            for (idx, &k) in kept.iter().enumerate() {
                let mut v = corr(j, k);
                for &m in &kept[..idx] {
                    v -= l[(j, m)] * l[(k, m)];
                }
                l[(j, k)] = v / l[(k, k)];
            }
            let mut pivot = 1.0;
            for &k in &kept {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if pivot < DEPENDENCE_TOL {
                dependent.push(j);
            } else {
                l[(j, j)] = pivot.sqrt();
                kept.push(j);
            }
        }
        dependent
    }

    fn check_rank(&self, names: &[String]) -> Result<(), LearnError> {
        let dep = self.dependent_columns();
        if dep.is_empty() {
            Ok(())
        } else {
            Err(LearnError::RankDeficient(dep.into_iter().map(|j| names[j].clone()).collect()))
        }
    }

    /// Solves `(XᵀX + nλI) β = Xᵀy` on centered data.
    fn solve_penalized(&self, lambda: f64) -> Result<DVector<f64>, LearnError> {
        let p = self.xtx.nrows();
        // Equilibrate so the factorization sees a unit-diagonal matrix.
        let scale: Vec<f64> = (0..p)
            .map(|j| {
                let d = self.xtx[(j, j)] + self.n as f64 * lambda;
                if d > 0.0 {
                    d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut a = self.xtx.clone();
        for j in 0..p {
            a[(j, j)] += self.n as f64 * lambda;
        }
        let a = DMatrix::from_fn(p, p, |r, c| a[(r, c)] / (scale[r] * scale[c]));
        let rhs = DVector::from_fn(p, |r, _| self.xty[r] / scale[r]);
        let chol = a
            .cholesky()
            .ok_or_else(|| LearnError::Singular("penalized normal equations".into()))?;
        let z = chol.solve(&rhs);
        Ok(DVector::from_fn(p, |r, _| z[r] / scale[r]))
    }

    fn inverse_xtx(&self) -> Option<DMatrix<f64>> {
        let p = self.xtx.nrows();
        let scale: Vec<f64> = (0..p).map(|j| self.xtx[(j, j)].sqrt()).collect();
        let a = DMatrix::from_fn(p, p, |r, c| self.xtx[(r, c)] / (scale[r] * scale[c]));
        let inv = a.cholesky()?.inverse();
        Some(DMatrix::from_fn(p, p, |r, c| inv[(r, c)] / (scale[r] * scale[c])))
    }
}

struct FitSummary {
    rss: f64,
    tss: f64,
}

fn summarize(d: &Dataset, intercept: f64, beta: &[f64]) -> FitSummary {
    let y_mean = d.y.iter().sum::<f64>() / d.n_rows() as f64;
    let mut rss = 0.0;
    let mut tss = 0.0;
    for r in 0..d.n_rows() {
        let fitted = intercept + d.x.row(r).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
        rss += (d.y[r] - fitted).powi(2);
        tss += (d.y[r] - y_mean).powi(2);
    }
    FitSummary { rss, tss }
}

fn r_squared(s: &FitSummary, n: usize, p: usize) -> (Option<f64>, Option<f64>) {
    if s.tss <= 0.0 {
        return (None, None);
    }
    let r2 = 1.0 - s.rss / s.tss;
    let adj = if n > p + 1 {
        Some(1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - p as f64 - 1.0))
    } else {
        None
    };
    (Some(r2), adj)
}

fn check_lambda(lambda: f64) -> Result<(), LearnError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(LearnError::InvalidLambda(lambda))
    }
}

fn ols_beta(m: &Moments, names: &[String]) -> Result<Vec<f64>, LearnError> {
    m.check_rank(names)?;
    Ok(m.solve_penalized(0.0)?.iter().copied().collect())
}

/// Ordinary least squares with an intercept.
pub fn fit_ols(d: &Dataset) -> Result<LinearModel, LearnError> {
    let (n, p) = (d.n_rows(), d.n_cols());
    if n <= p + 1 {
        return Err(LearnError::TooFewRows { rows: n, params: p + 1 });
    }
    let names = d.names();
    let m = Moments::of(d);
    let beta = ols_beta(&m, &names)?;
    let intercept = m.intercept(&beta);
    let summary = summarize(d, intercept, &beta);
    let (r2, adj) = r_squared(&summary, n, p);

    let sigma2 = summary.rss / (n - p - 1) as f64;
    let (std_errors, intercept_se) = match m.inverse_xtx() {
        Some(inv) => {
            let se = (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
            let xm = DVector::from_column_slice(&m.x_mean);
            let quad = (xm.transpose() * &inv * &xm)[(0, 0)];
            (Some(se), Some((sigma2 * (1.0 / n as f64 + quad)).sqrt()))
        }
        None => (None, None),
    };
    Ok(LinearModel {
        family: Family::GaussianOls,
        intercept,
        coefficients: beta,
        lambda: 0.0,
        schema: names,
        standardization: d.standardization.clone(),
        diagnostics: LinearDiagnostics {
            n_obs: n,
            r_squared: r2,
            adjusted_r_squared: adj,
            deviance: Some(summary.rss),
            intercept_std_error: intercept_se,
            std_errors,
            shrinkage_ratio: None,
            iterations: 1,
        },
    })
}

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Ridge regression: minimizes `‖y − Xβ‖²/n + λ‖β‖²` with an unpenalized intercept.
pub fn fit_ridge(d: &Dataset, lambda: f64) -> Result<LinearModel, LearnError> {
    check_lambda(lambda)?;
    let (n, p) = (d.n_rows(), d.n_cols());
    if n < 2 {
        return Err(LearnError::TooFewRows { rows: n, params: p + 1 });
    }
    let names = d.names();
    let m = Moments::of(d);
    if lambda == 0.0 {
        m.check_rank(&names)?;
    }
    let beta: Vec<f64> = m.solve_penalized(lambda)?.iter().copied().collect();
    let intercept = m.intercept(&beta);
    let summary = summarize(d, intercept, &beta);
    let (r2, adj) = r_squared(&summary, n, p);
    let shrinkage = ols_beta(&m, &names)
        .ok()
        .and_then(|ols| ratio(norm2(&beta), norm2(&ols)));
    Ok(LinearModel {
        family: Family::GaussianRidge,
        intercept,
        coefficients: beta,
        lambda,
        schema: names,
        standardization: d.standardization.clone(),
        diagnostics: LinearDiagnostics {
            n_obs: n,
            r_squared: r2,
            adjusted_r_squared: adj,
            deviance: Some(summary.rss),
            shrinkage_ratio: shrinkage,
            iterations: 1,
            ..Default::default()
        },
    })
}

/// Ridge coefficients from precomputed centered moments.
pub(crate) fn fit_ridge_moments(m: &Moments, lambda: f64) -> Result<Vec<f64>, LearnError> {
    check_lambda(lambda)?;
    Ok(m.solve_penalized(lambda)?.iter().copied().collect())
}

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

/// Smallest penalty at which every LASSO coefficient is zero: `max_j |x_jᵀ(y − ȳ)| / n`.
#[cfg(test)]
pub(crate) fn lambda_max(m: &Moments) -> f64 {
    m.xty.iter().map(|v| v.abs()).fold(0.0, f64::max) / m.n as f64
}

/// Cyclic coordinate descent on `½‖y − Xβ‖²/n + λ‖β‖₁` using covariance
/// updates. `beta` is the warm start and receives the solution. Returns the
/// number of sweeps.
pub(crate) fn lasso_descent(
    m: &Moments,
    lambda: f64,
    beta: &mut [f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<usize, LearnError> {
    let p = beta.len();
    let n = m.n as f64;
    // grad[j] = x_jᵀ r / n for the current residual r.
    let mut grad: Vec<f64> = (0..p)
        .map(|j| (m.xty[j] - (0..p).map(|k| m.xtx[(j, k)] * beta[k]).sum::<f64>()) / n)
        .collect();
    let curvature: Vec<f64> = (0..p).map(|j| m.xtx[(j, j)] / n).collect();
    let mut trace = Vec::new();
    for sweep in 1..=max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if curvature[j] <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let old = beta[j];
            let new = soft_threshold(grad[j] + curvature[j] * old, lambda) / curvature[j];
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                for (k, g) in grad.iter_mut().enumerate() {
                    *g -= m.xtx[(k, j)] * delta / n;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if sweep % 1000 == 0 {
            trace.push(max_change);
        }
        if max_change < tol {
            return Ok(sweep);
        }
    }
    Err(LearnError::NotConverged { iterations: max_sweeps, trace })
}

/// LASSO on standardized predictors by coordinate descent with soft-thresholding.
pub fn fit_lasso(d: &Dataset, lambda: f64) -> Result<LinearModel, LearnError> {
    fit_lasso_with(d, lambda, LASSO_TOL)
}

pub fn fit_lasso_with(d: &Dataset, lambda: f64, tol: f64) -> Result<LinearModel, LearnError> {
    check_lambda(lambda)?;
    if d.standardization.is_none() {
        return Err(LearnError::NotStandardized);
    }
    let (n, p) = (d.n_rows(), d.n_cols());
    if n < 2 {
        return Err(LearnError::TooFewRows { rows: n, params: p + 1 });
    }
    let names = d.names();
    let m = Moments::of(d);
    let mut beta = vec![0.0; p];
    let sweeps = lasso_descent(&m, lambda, &mut beta, tol, LASSO_MAX_SWEEPS)?;
    let intercept = m.intercept(&beta);
    let summary = summarize(d, intercept, &beta);
    let (r2, adj) = r_squared(&summary, n, p);
    let shrinkage = ols_beta(&m, &names)
        .ok()
        .and_then(|ols| ratio(norm1(&beta), norm1(&ols)));
    Ok(LinearModel {
        family: Family::GaussianLasso,
        intercept,
        coefficients: beta,
        lambda,
        schema: names,
        standardization: d.standardization.clone(),
        diagnostics: LinearDiagnostics {
            n_obs: n,
            r_squared: r2,
            adjusted_r_squared: adj,
            deviance: Some(summary.rss),
            shrinkage_ratio: shrinkage,
            iterations: sweeps,
            ..Default::default()
        },
    })
}

fn poisson_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| {
            let term = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
            term - (y - m)
        })
        .sum::<f64>()
}

/// Columns that are constant or an exact linear combination of earlier
/// columns, in column order. Dropping them leaves a full-rank design.
pub fn aliased_columns(d: &Dataset) -> Vec<String> {
    let names = d.names();
    Moments::of(d).dependent_columns().into_iter().map(|j| names[j].clone()).collect()
}

/// Log-link Poisson regression by iteratively reweighted least squares.
pub fn fit_poisson(d: &Dataset) -> Result<LinearModel, LearnError> {
    let (n, p) = (d.n_rows(), d.n_cols());
    if let Some(bad) = d.y.iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
        return Err(LearnError::InvalidTarget(format!(
            "Poisson response must be a nonnegative integer, found {bad}"
        )));
    }
    if n <= p + 1 {
        return Err(LearnError::TooFewRows { rows: n, params: p + 1 });
    }
    let names = d.names();
    let y_mean = d.y.iter().sum::<f64>() / n as f64;
    if y_mean <= 0.0 {
        return Err(LearnError::InvalidTarget("Poisson response is identically zero".into()));
    }
    Moments::of(d).check_rank(&names)?;

    let q = p + 1;
    let mut beta = vec![0.0; q];
    beta[0] = y_mean.ln();
    let mut mu = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged_at = None;

    for iteration in 1..=POISSON_MAX_ITER {
        let mut a = DMatrix::<f64>::zeros(q, q);
        let mut c = DVector::<f64>::zeros(q);
        let mut xt = vec![1.0; q];
        for r in 0..n {
            xt[1..].copy_from_slice(d.x.row(r));
            let eta: f64 = xt.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let m = eta.exp();
            if !m.is_finite() || m <= 0.0 {
                return Err(LearnError::Diverged { iteration, trace });
            }
            mu[r] = m;
            let z = eta + (d.y[r] - m) / m;
            for s in 0..q {
                let wx = m * xt[s];
                c[s] += wx * z;
                for t in s..q {
                    a[(s, t)] += wx * xt[t];
                }
            }
        }
        trace.push(poisson_deviance(&d.y, &mu));
        for s in 0..q {
            for t in 0..s {
                a[(s, t)] = a[(t, s)];
            }
        }
        let next: Vec<f64> = a
            .cholesky()
            .ok_or_else(|| LearnError::Singular("IRLS weighted normal equations".into()))?
            .solve(&c)
            .iter()
            .copied()
            .collect();
        if next.iter().any(|b| !b.is_finite()) {
            return Err(LearnError::Diverged { iteration, trace });
        }
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        if change < POISSON_TOL {
            converged_at = Some(iteration);
            break;
        }
    }
    let Some(iterations) = converged_at else {
        return Err(LearnError::NotConverged { iterations: POISSON_MAX_ITER, trace });
    };

    // Fisher information at the solution.
    let mut info = DMatrix::<f64>::zeros(q, q);
    let mut xt = vec![1.0; q];
    for r in 0..n {
        xt[1..].copy_from_slice(d.x.row(r));
        let m = xt.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>().exp();
        mu[r] = m;
        for s in 0..q {
            for t in 0..q {
                info[(s, t)] += m * xt[s] * xt[t];
            }
        }
    }
    let se: Option<Vec<f64>> = info
        .cholesky()
        .map(|ch| {
            let inv = ch.inverse();
            (0..q).map(|j| inv[(j, j)].sqrt()).collect()
        });
    Ok(LinearModel {
        family: Family::Poisson,
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        lambda: 0.0,
        schema: names,
        standardization: d.standardization.clone(),
        diagnostics: LinearDiagnostics {
            n_obs: n,
            deviance: Some(poisson_deviance(&d.y, &mu)),
            intercept_std_error: se.as_ref().map(|s| s[0]),
            std_errors: se.map(|s| s[1..].to_vec()),
            iterations,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, p: usize, seed: u64, coefs: &[f64], noise: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y = rows
            .iter()
            .map(|r| {
                1.0 + r.iter().zip(coefs).map(|(x, b)| x * b).sum::<f64>()
                    + noise * (rng.random::<f64>() - 0.5)
            })
            .collect();
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        Dataset::from_rows(&names, &rows, y).unwrap()
    }

    #[test]
    fn ols_exact_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = (0..10).map(|i| 2.0 * i as f64).collect();
        let d = Dataset::from_rows(&["x"], &rows, y).unwrap();
        let m = fit_ols(&d).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
        assert!((m.diagnostics.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_names_dependent_columns() {
        let rows: Vec<Vec<f64>> =
            (0..20).map(|i| vec![i as f64, (i * i) as f64, 2.0 * i as f64 + 1.0, 3.0]).collect();
        let y = (0..20).map(|i| i as f64).collect();
        let d = Dataset::from_rows(&["a", "b", "c", "k"], &rows, y).unwrap();
        assert_eq!(
            fit_ols(&d).unwrap_err(),
            LearnError::RankDeficient(vec!["c".into(), "k".into()])
        );
    }

    #[test]
    fn ols_too_few_rows() {
        let d = Dataset::from_rows(&["a", "b"], &[vec![1.0, 2.0], vec![2.0, 1.0]], vec![1.0, 2.0])
            .unwrap();
        assert!(matches!(fit_ols(&d), Err(LearnError::TooFewRows { .. })));
    }

    #[test]
    fn ridge_single_feature_closed_form() {
        let d = random_dataset(50, 1, 3, &[1.5], 1.0);
        let lambda = 0.3;
        let m = fit_ridge(&d, lambda).unwrap();
        let x: Vec<f64> = d.x.column(0).collect();
        let xm = x.iter().sum::<f64>() / 50.0;
        let ym = d.y.iter().sum::<f64>() / 50.0;
        let sxy: f64 = x.iter().zip(&d.y).map(|(a, b)| (a - xm) * (b - ym)).sum();
        let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
        let expected = sxy / (sxx + 50.0 * lambda);
        assert!((m.coefficients[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn ridge_shrinks_monotonically() {
        let d = random_dataset(200, 4, 5, &[1.0, -2.0, 0.5, 0.0], 0.5).standardized().unwrap();
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0, 1e3, 1e6] {
            let m = fit_ridge(&d, lambda).unwrap();
            let norm = norm2(&m.coefficients);
            assert!(norm <= last + 1e-12, "λ={lambda}: {norm} > {last}");
            last = norm;
        }
        assert!(last < 1e-5);
        assert!(fit_ridge(&d, -1.0).is_err());
    }

    #[test]
    fn lasso_requires_standardization() {
        let d = random_dataset(50, 2, 1, &[1.0, 1.0], 0.1);
        assert_eq!(fit_lasso(&d, 0.1).unwrap_err(), LearnError::NotStandardized);
    }

    #[test]
    fn lasso_zero_above_lambda_max() {
        let d = random_dataset(300, 5, 9, &[1.0, -1.0, 0.0, 0.3, 0.0], 0.5).standardized().unwrap();
        let lm = lambda_max(&Moments::of(&d));
        let m = fit_lasso(&d, lm).unwrap();
        assert!(m.coefficients.iter().all(|b| *b == 0.0));
        let m = fit_lasso(&d, lm * 0.9).unwrap();
        assert!(m.coefficients.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn lasso_kkt_conditions() {
        let d = random_dataset(400, 6, 11, &[2.0, -1.0, 0.0, 0.0, 0.5, 0.0], 1.0)
            .standardized()
            .unwrap();
        let lambda = 0.05;
        let m = fit_lasso(&d, lambda).unwrap();
        let n = d.n_rows() as f64;
        let resid: Vec<f64> = (0..d.n_rows())
            .map(|r| d.y[r] - m.linear_predictor(d.x.row(r)))
            .collect();
        for j in 0..d.n_cols() {
            let g = d.x.column(j).zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
            let b = m.coefficients[j];
            if b == 0.0 {
                assert!(g.abs() <= lambda + 1e-6, "inactive {j}: {g}");
            } else {
                assert!((g - lambda * b.signum()).abs() < 1e-6, "active {j}: {g}");
            }
        }
    }

    #[test]
    fn poisson_constant_response() {
        let d = random_dataset(100, 2, 2, &[0.0, 0.0], 0.0);
        let d = Dataset::new(d.x.clone(), vec![3.0; 100]).unwrap();
        let m = fit_poisson(&d).unwrap();
        assert!((m.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(m.coefficients.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn poisson_two_group_closed_form() {
        // MLE with one binary covariate: exp(intercept) = mean of group 0,
        // exp(intercept + slope) = mean of group 1.
        let xs = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let ys = [1.0, 3.0, 2.0, 2.0, 7.0, 4.0, 6.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        let d = Dataset::from_rows(&["g"], &rows, ys.to_vec()).unwrap();
        let m = fit_poisson(&d).unwrap();
        let mean0: f64 = 8.0 / 4.0;
        let mean1: f64 = 17.0 / 3.0;
        assert!((m.intercept - mean0.ln()).abs() < 1e-10);
        assert!((m.coefficients[0] - (mean1 / mean0).ln()).abs() < 1e-10);
    }

    #[test]
    fn poisson_rejects_bad_targets() {
        let d = Dataset::from_rows(&["x"], &[vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 1.5, 2.0])
            .unwrap();
        assert!(matches!(fit_poisson(&d), Err(LearnError::InvalidTarget(_))));
        let d = Dataset::from_rows(&["x"], &[vec![0.0], vec![1.0], vec![2.0]], vec![0.0; 3]).unwrap();
        assert!(matches!(fit_poisson(&d), Err(LearnError::InvalidTarget(_))));
    }

    #[test]
    fn poisson_predictions_are_positive() {
        let d = random_dataset(100, 2, 4, &[0.0, 0.0], 0.0);
        let y: Vec<f64> = (0..100).map(|i| (i % 5) as f64).collect();
        let d = Dataset::new(d.x.clone(), y).unwrap();
        let m = fit_poisson(&d).unwrap();
        assert!(m.predict(&d.x).unwrap().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn standardized_model_predicts_intercept_at_means() {
        let d = random_dataset(200, 3, 8, &[1.0, 2.0, 3.0], 0.2);
        let s = d.standardized().unwrap();
        let m = fit_ols(&s).unwrap();
        let state = s.standardization.as_ref().unwrap();
        let row = FeatureMatrix::new(d.x.schema().to_vec(), 1, state.means.clone()).unwrap();
        let pred = m.predict(&row).unwrap()[0];
        assert!((pred - m.intercept).abs() < 1e-12);
    }
}

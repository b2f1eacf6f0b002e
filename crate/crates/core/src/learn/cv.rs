//! k-fold cross-validation of the LASSO and ridge penalties.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::linear::{lasso_descent, Moments, LASSO_MAX_SWEEPS, LASSO_TOL};
use super::LearnError;

pub const DEFAULT_FOLDS: usize = 10;
pub const GRID_POINTS: usize = 100;
pub const LASSO_GRID: (f64, f64) = (1e-4, 1e1);
pub const RIDGE_GRID: (f64, f64) = (1e-4, 1e3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Lasso,
    Ridge,
}

impl Penalty {
    pub fn default_grid(self) -> Vec<f64> {
        let (lo, hi) = match self {
            Penalty::Lasso => LASSO_GRID,
            Penalty::Ridge => RIDGE_GRID,
        };
        log_grid(lo, hi, GRID_POINTS)
    }
}

/// `points` values spaced evenly in log10 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

/// Fold index of every row: a seeded shuffle dealt round-robin into `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub penalty: Penalty,
    pub folds: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub sd_loss: Vec<f64>,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
}

/// Mean squared held-out error for every penalty in `grid`.
///
/// The chosen penalty minimizes the mean fold loss; among exact ties the
/// largest penalty wins.
pub fn cross_validate(
    d: &Dataset,
    penalty: Penalty,
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult, LearnError> {
    if grid.is_empty() {
        return Err(LearnError::EmptyGrid);
    }
    if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(LearnError::InvalidLambda(*bad));
    }
    let n = d.n_rows();
    if k < 2 || n < k {
        return Err(LearnError::TooFewRowsForFolds { rows: n, folds: k });
    }
    if penalty == Penalty::Lasso && d.standardization.is_none() {
        return Err(LearnError::NotStandardized);
    }
    let folds = fold_assignment(n, k, seed);
    let mut losses = vec![vec![0.0; k]; grid.len()];

    // Visit penalties from largest to smallest so LASSO can warm start.
    let mut visit: Vec<usize> = (0..grid.len()).collect();
    visit.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]).then(a.cmp(&b)));

    for fold in 0..k {
        let train: Vec<usize> = (0..n).filter(|&r| folds[r] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&r| folds[r] == fold).collect();
        let train_set = d.subset(&train);
        let m = Moments::of(&train_set);
        let p = d.n_cols();
        let mut beta = vec![0.0; p];
        let mut previous: Option<usize> = None;
        for &g in &visit {
            let lambda = grid[g];
            if let Some(prev) = previous.filter(|&q| grid[q] == lambda) {
                losses[g][fold] = losses[prev][fold];
                continue;
            }
            previous = Some(g);
            match penalty {
                Penalty::Lasso => {
                    lasso_descent(&m, lambda, &mut beta, LASSO_TOL, LASSO_MAX_SWEEPS)?;
                }
                Penalty::Ridge => {
                    let solved = super::linear::fit_ridge_moments(&m, lambda)?;
                    beta.copy_from_slice(&solved);
                }
            }
            let intercept =
                m.y_mean - m.x_mean.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            let sse: f64 = test
                .iter()
                .map(|&r| {
                    let pred = intercept
                        + d.x.row(r).iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>();
                    (d.y[r] - pred).powi(2)
                })
                .sum();
            losses[g][fold] = sse / test.len() as f64;
        }
    }

    let mean_loss: Vec<f64> = losses.iter().map(|l| l.iter().sum::<f64>() / k as f64).collect();
    let sd_loss = losses
        .iter()
        .zip(&mean_loss)
        .map(|(l, m)| (l.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt())
        .collect();
    let mut chosen = 0;
    for g in 1..grid.len() {
        let better = mean_loss[g] < mean_loss[chosen]
            || (mean_loss[g] == mean_loss[chosen] && grid[g] > grid[chosen]);
        if better {
            chosen = g;
        }
    }
    Ok(CvResult {
        penalty,
        folds: k,
        seed,
        lambdas: grid.to_vec(),
        mean_loss,
        sd_loss,
        chosen_index: chosen,
        chosen_lambda: grid[chosen],
    })
}

//! Bootstrap confidence intervals and pairwise win-rate matrices.
//!
//! Resampling is by index with replacement; the resampling unit is whatever
//! one sample element represents (episodes for mortality, timesteps for the
//! per-hour tasks). Resample seeds derive from the run seed and the resample
//! index, so results are independent of thread scheduling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ci, EvalError};
use crate::seeds::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub point: f64,
    pub ci: Ci,
    /// Degenerate resamples (e.g. a single class drawn) skipped.
    pub skipped: usize,
    pub n_resamples: usize,
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Percentile 95% CI of a metric under resampling.
pub fn bootstrap_ci<T, F>(
    samples: &[T],
    metric: F,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapOutcome, EvalError>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<f64, EvalError> + Sync,
{
    if n_resamples < 100 {
        return Err(EvalError::TooFewResamples(n_resamples));
    }
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let point = metric(samples)?;
    let n = samples.len();
    let outcomes: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, "bootstrap", r as u64);
            let resample: Vec<T> = (0..n)
                .map(|_| samples[rng.random_range(0..n)].clone())
                .collect();
            metric(&resample).ok()
        })
        .collect();
    let mut values: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let skipped = n_resamples - values.len();
    values.sort_by(|a, b| a.total_cmp(b));
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(BootstrapOutcome {
        point,
        ci: Ci {
            lo: percentile(&values, 0.025),
            hi: percentile(&values, 0.975),
            level: 0.95,
        },
        skipped,
        n_resamples,
    })
}

/// Pairwise win counts of each model over each other across shared resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub names: Vec<String>,
    /// `wins[i][j]`: resamples where model i scored strictly above model j.
    pub wins: Vec<Vec<u32>>,
    /// `ties[i][j]`: resamples where they scored equal.
    pub ties: Vec<Vec<u32>>,
    /// Resamples skipped because some model's metric was degenerate there.
    pub skipped: u32,
    pub n_compared: u32,
}

impl SignificanceMatrix {
    /// Percentage of compared resamples where model i beats model j.
    pub fn win_pct(&self, i: usize, j: usize) -> f64 {
        if self.n_compared == 0 {
            return f64::NAN;
        }
        100.0 * f64::from(self.wins[i][j]) / f64::from(self.n_compared)
    }

    pub fn tie_pct(&self, i: usize, j: usize) -> f64 {
        if self.n_compared == 0 {
            return f64::NAN;
        }
        100.0 * f64::from(self.ties[i][j]) / f64::from(self.n_compared)
    }
}

/// Compare models on the SAME resample indices of a shared test set. Each
/// model supplies one sample element per test item, aligned across models.
pub fn significance_matrix<T, F>(
    models: &[(String, Vec<T>)],
    metric: F,
    n_resamples: usize,
    seed: u64,
) -> Result<SignificanceMatrix, EvalError>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<f64, EvalError> + Sync,
{
    if models.len() < 2 {
        return Err(EvalError::TooFewModels);
    }
    if n_resamples < 100 {
        return Err(EvalError::TooFewResamples(n_resamples));
    }
    let n = models[0].1.len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    for (_, samples) in models {
        if samples.len() != n {
            return Err(EvalError::LengthMismatch(n, samples.len()));
        }
    }
    let k = models.len();
    let per_resample: Vec<Option<Vec<f64>>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, "significance", r as u64);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut scores = Vec::with_capacity(k);
            for (_, samples) in models {
                let resample: Vec<T> = indices.iter().map(|i| samples[*i].clone()).collect();
                match metric(&resample) {
                    Ok(v) => scores.push(v),
                    Err(_) => return None,
                }
            }
            Some(scores)
        })
        .collect();

    let mut wins = vec![vec![0u32; k]; k];
    let mut ties = vec![vec![0u32; k]; k];
    let mut skipped = 0u32;
    let mut compared = 0u32;
    for scores in per_resample {
        let Some(scores) = scores else {
            skipped += 1;
            continue;
        };
        compared += 1;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                if scores[i] > scores[j] {
                    wins[i][j] += 1;
                } else if scores[i] == scores[j] {
                    ties[i][j] += 1;
                }
            }
        }
    }
    Ok(SignificanceMatrix {
        names: models.iter().map(|(n, _)| n.clone()).collect(),
        wins,
        ties,
        skipped,
        n_compared: compared,
    })
}

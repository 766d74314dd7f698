//! Exhaustive grid search with seeded k-fold cross-validation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, Family, FeatureVector, HyperValue, Hyperparameters, ModelSpec, PredictError};
use crate::metrics;
use crate::seed;

/// Hyperparameter name to the values to try.
pub type Grid = BTreeMap<String, Vec<HyperValue>>;

/// Cartesian product of the grid. Keys are taken in sorted order and the
/// last key varies fastest. An empty grid yields one empty assignment.
pub fn expand_grid(grid: &Grid) -> Result<Vec<Hyperparameters>, PredictError> {
    if grid.values().any(Vec::is_empty) {
        return Err(PredictError::EmptyGrid);
    }
    let mut out = vec![Hyperparameters::new()];
    for (name, values) in grid {
        out = out
            .into_iter()
            .flat_map(|partial| {
                values.iter().map(move |v| {
                    let mut h = partial.clone();
                    h.insert(name.clone(), *v);
                    h
                })
            })
            .collect();
    }
    Ok(out)
}

/// Held-out indices of each fold: a seeded shuffle of `0..n` cut into `k`
/// contiguous chunks, the first `n % k` of them one element longer.
pub fn kfold_assignment(n: usize, k: usize, seed_value: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    seed::shuffle(&mut seed::rng_from_seed(seed::derive_seed(seed_value, &[b"kfold"])), &mut idx);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub spec: ModelSpec,
    pub mean_score: f64,
    pub per_fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_spec: ModelSpec,
    /// Mean held-out R^2 of `best_spec`.
    pub mean_score: f64,
    pub per_fold_scores: Vec<f64>,
    /// Every evaluated spec, in grid enumeration order.
    pub candidates: Vec<CandidateScore>,
}

fn cross_validate(spec: &ModelSpec, x: &[FeatureVector], y: &[f64], folds: &[Vec<usize>]) -> Result<Vec<f64>, PredictError> {
    let n = x.len();
    folds
        .iter()
        .map(|held_out| {
            let mut is_test = vec![false; n];
            for &i in held_out {
                is_test[i] = true;
            }
            let (mut xt, mut yt) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for i in (0..n).filter(|&i| !is_test[i]) {
                xt.push(x[i]);
                yt.push(y[i]);
            }
            let model = fit(spec, &xt, &yt)?;
            let xv: Vec<FeatureVector> = held_out.iter().map(|&i| x[i]).collect();
            let yv: Vec<f64> = held_out.iter().map(|&i| y[i]).collect();
            let pred = model.predict(&xv)?;
            Ok(metrics::r_squared(&yv, &pred)?)
        })
        .collect()
}

/// Scores every grid point by mean held-out R^2 over the same `k` folds and
/// returns the best; ties go to the earliest grid point.
pub fn grid_search_cv(
    family: Family,
    grid: &Grid,
    x: &[FeatureVector],
    y: &[f64],
    k: usize,
    seed_value: u64,
) -> Result<CvResult, PredictError> {
    if k < 2 {
        return Err(PredictError::BadHyperparameter { name: "k".into(), reason: "need at least 2 folds".into() });
    }
    if x.len() != y.len() {
        return Err(PredictError::LengthMismatch { features: x.len(), targets: y.len() });
    }
    if x.len() < k || x.len() < 2 * k {
        return Err(PredictError::TooFewSamples { needed: 2 * k, got: x.len() });
    }
    let specs: Vec<ModelSpec> = expand_grid(grid)?
        .into_iter()
        .map(|hyperparameters| ModelSpec { family, hyperparameters, seed: seed_value })
        .collect();
    let folds = kfold_assignment(x.len(), k, seed_value);

    let scores: Vec<Vec<f64>> = specs
        .par_iter()
        .map(|spec| cross_validate(spec, x, y, &folds))
        .collect::<Result<_, _>>()?;

    let candidates: Vec<CandidateScore> = specs
        .into_iter()
        .zip(scores)
        .map(|(spec, per_fold_scores)| CandidateScore {
            spec,
            mean_score: per_fold_scores.iter().sum::<f64>() / per_fold_scores.len() as f64,
            per_fold_scores,
        })
        .collect();
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean_score > candidates[best].mean_score {
            best = i;
        }
    }
    Ok(CvResult {
        best_spec: candidates[best].spec.clone(),
        mean_score: candidates[best].mean_score,
        per_fold_scores: candidates[best].per_fold_scores.clone(),
        candidates,
    })
}

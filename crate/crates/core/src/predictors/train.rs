use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cv::{grid_search_cv, CvResult, Grid};
use super::grids::{default_grid, quick_grid};
use super::{fit, Family, FeatureVector, PredictError, Target, TrainedPredictor};
use crate::model::{AnchorMeasurement, ConfigSpace, Dataset, DatasetError, Representation};

/// Feature vectors and targets for every record of `ds` inside `space`,
/// anchor rows included. Rows follow the dataset order.
pub fn build_features(ds: &Dataset, space: &ConfigSpace, target: Target) -> Result<(Vec<FeatureVector>, Vec<f64>), PredictError> {
    build_features_at(ds, space, target, &space.anchor())
}

/// [`build_features`] with the anchor reading taken at `anchor` instead of
/// the space's own anchor.
pub fn build_features_at(
    ds: &Dataset,
    space: &ConfigSpace,
    target: Target,
    anchor: &Representation,
) -> Result<(Vec<FeatureVector>, Vec<f64>), PredictError> {
    let mut x = Vec::with_capacity(ds.len());
    let mut y = Vec::with_capacity(ds.len());
    for video in ds.video_ids() {
        let rec = ds
            .get(&video, anchor)
            .ok_or_else(|| DatasetError::MissingAnchorRecord { video_id: video.clone(), rep: *anchor })?;
        let a = target.anchor_value(&AnchorMeasurement::from_record(rec));
        for rec in ds.records_for(&video).filter(|r| space.contains(&r.rep)) {
            x.push(FeatureVector::new(a, rec.rep.height(), rec.rep.qp));
            y.push(target.value(rec));
        }
    }
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub families: Vec<Family>,
    pub targets: Vec<Target>,
    pub folds: usize,
    /// Use [`quick_grid`] instead of [`default_grid`].
    pub quick: bool,
    pub seed: u64,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        Self { families: Family::ALL.to_vec(), targets: Target::ALL.to_vec(), folds: 5, quick: false, seed }
    }

    pub fn grid(&self, family: Family) -> Grid {
        if self.quick {
            quick_grid(family)
        } else {
            default_grid(family)
        }
    }
}

/// One family's grid search outcome and its best spec refit on all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: Family,
    pub cv: CvResult,
    pub model: TrainedPredictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModels {
    /// In the order of [`TrainOptions::families`].
    pub candidates: Vec<FamilyResult>,
    /// Index into `candidates` with the highest CV score; ties go to the
    /// earlier family.
    pub best: usize,
}

impl TargetModels {
    pub fn best(&self) -> &FamilyResult {
        &self.candidates[self.best]
    }

    pub fn best_model(&self) -> &TrainedPredictor {
        &self.best().model
    }

    pub fn family(&self, family: Family) -> Option<&FamilyResult> {
        self.candidates.iter().find(|c| c.family == family)
    }
}

pub type TrainedModels = BTreeMap<Target, TargetModels>;

/// Full grid search over every family for every target.
pub fn train_all(ds_train: &Dataset, space: &ConfigSpace, seed: u64) -> Result<TrainedModels, PredictError> {
    train_all_with(ds_train, space, &TrainOptions::new(seed))
}

pub fn train_all_with(ds_train: &Dataset, space: &ConfigSpace, opts: &TrainOptions) -> Result<TrainedModels, PredictError> {
    if opts.families.is_empty() || opts.targets.is_empty() {
        return Err(PredictError::EmptyGrid);
    }
    let mut out = TrainedModels::new();
    for &target in &opts.targets {
        let (x, y) = build_features(ds_train, space, target)?;
        let mut candidates = Vec::with_capacity(opts.families.len());
        for &family in &opts.families {
            let cv = grid_search_cv(family, &opts.grid(family), &x, &y, opts.folds, opts.seed)?;
            let mut model = fit(&cv.best_spec, &x, &y)?;
            model.target = Some(target);
            candidates.push(FamilyResult { family, cv, model });
        }
        let mut best = 0;
        for (i, c) in candidates.iter().enumerate() {
            if c.cv.mean_score > candidates[best].cv.mean_score {
                best = i;
            }
        }
        out.insert(target, TargetModels { candidates, best });
    }
    Ok(out)
}

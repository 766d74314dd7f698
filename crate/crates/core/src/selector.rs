//! Green configuration selection.
//!
//! For one video the trained models turn its anchor measurement into a
//! [`PredictionGrid`] of predicted encode energy, decode energy and quality
//! for every representation. [`select`] keeps the cells whose predicted
//! quality is at least `(1 - rho)` times the best predicted quality and
//! returns the one with the lowest predicted total energy. Ties go to higher
//! predicted quality, then lower height, then higher QP.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{energy_savings_pct, MetricError, PolicyReport};
use crate::model::{AnchorMeasurement, ConfigSpace, Dataset, DatasetError, QualityMetric, Representation};
use crate::predictors::{FeatureVector, PredictError, Target, TrainedModels, TrainedPredictor};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("rho must lie in [0, 1], got {0}")]
    InvalidRho(f64),
    #[error("prediction grid is empty")]
    EmptyGrid,
    #[error("no trained model for target {0}")]
    MissingModel(Target),
    #[error("no ground-truth record for video {video_id} at {rep}")]
    MissingGroundTruth { video_id: String, rep: Representation },
    #[error("stage weights must be finite and non-negative")]
    InvalidWeights,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Allowed fractional quality loss, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rho(f64);

impl Rho {
    pub const ZERO: Rho = Rho(0.0);

    pub fn new(value: f64) -> Result<Self, SelectError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(SelectError::InvalidRho(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Rho {
    type Error = SelectError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Rho::new(value)
    }
}

impl From<Rho> for f64 {
    fn from(r: Rho) -> f64 {
        r.0
    }
}

/// Degradation levels swept in the policy table.
pub const DEFAULT_RHOS: [f64; 7] = [0.0, 0.05, 0.1, 0.3, 0.5, 0.7, 1.0];

/// Multipliers on predicted encode and decode energy in the objective.
/// `(1, 1)` minimizes plain encode + decode energy; a larger decode weight
/// models one encode served to many viewers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    pub enc: f64,
    pub dec: f64,
}

impl Default for StageWeights {
    fn default() -> Self {
        Self { enc: 1.0, dec: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub rep: Representation,
    pub e_enc_hat: f64,
    pub e_dec_hat: f64,
    /// `enc * e_enc_hat + dec * e_dec_hat` under the grid's stage weights.
    pub e_total_hat: f64,
    pub q_hat: f64,
}

impl Cell {
    pub fn new(rep: Representation, e_enc_hat: f64, e_dec_hat: f64, q_hat: f64) -> Self {
        Self { rep, e_enc_hat, e_dec_hat, e_total_hat: e_enc_hat + e_dec_hat, q_hat }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub video_id: String,
    /// Resolution-major, QP ascending within a resolution.
    pub cells: Vec<Cell>,
}

impl PredictionGrid {
    pub fn new(video_id: impl Into<String>, cells: Vec<Cell>) -> Self {
        Self { video_id: video_id.into(), cells }
    }

    /// The grid a clairvoyant selector would see: measured values in place
    /// of predictions.
    pub fn from_ground_truth(
        ds: &Dataset,
        video_id: &str,
        space: &ConfigSpace,
        metric: QualityMetric,
    ) -> Result<Self, SelectError> {
        let cells = space
            .representations()
            .map(|rep| {
                let rec = ds.get(video_id, &rep).ok_or_else(|| SelectError::MissingGroundTruth {
                    video_id: video_id.to_string(),
                    rep,
                })?;
                Ok(Cell::new(rep, rec.enc_energy, rec.dec_energy, rec.quality(metric)))
            })
            .collect::<Result<_, SelectError>>()?;
        Ok(Self::new(video_id, cells))
    }

    pub fn get(&self, rep: &Representation) -> Option<&Cell> {
        self.cells.iter().find(|c| c.rep == *rep)
    }
}

/// A source of one trained predictor per target.
pub trait ModelSet {
    fn model(&self, target: Target) -> Option<&TrainedPredictor>;

    fn require(&self, target: Target) -> Result<&TrainedPredictor, SelectError> {
        self.model(target).ok_or(SelectError::MissingModel(target))
    }
}

/// Uses each target's best family.
impl ModelSet for TrainedModels {
    fn model(&self, target: Target) -> Option<&TrainedPredictor> {
        self.get(&target).map(|m| m.best_model())
    }
}

impl ModelSet for BTreeMap<Target, TrainedPredictor> {
    fn model(&self, target: Target) -> Option<&TrainedPredictor> {
        self.get(&target)
    }
}

pub fn build_grid(
    models: &impl ModelSet,
    anchor: &AnchorMeasurement,
    space: &ConfigSpace,
    metric: QualityMetric,
) -> Result<PredictionGrid, SelectError> {
    build_grid_weighted(models, anchor, space, metric, StageWeights::default())
}

/// One predictor call per representation and target.
pub fn build_grid_weighted(
    models: &impl ModelSet,
    anchor: &AnchorMeasurement,
    space: &ConfigSpace,
    metric: QualityMetric,
    weights: StageWeights,
) -> Result<PredictionGrid, SelectError> {
    if !(weights.enc >= 0.0 && weights.dec >= 0.0 && weights.enc.is_finite() && weights.dec.is_finite()) {
        return Err(SelectError::InvalidWeights);
    }
    let q_target = Target::quality(metric);
    let (enc, dec, qual) = (models.require(Target::EncEnergy)?, models.require(Target::DecEnergy)?, models.require(q_target)?);
    let reps: Vec<Representation> = space.representations().collect();
    let features = |target: Target| -> Vec<FeatureVector> {
        let a = target.anchor_value(anchor);
        reps.iter().map(|r| FeatureVector::new(a, r.height(), r.qp)).collect()
    };
    let e_enc = enc.predict(&features(Target::EncEnergy))?;
    let e_dec = dec.predict(&features(Target::DecEnergy))?;
    let q = qual.predict(&features(q_target))?;
    let cells = reps
        .into_iter()
        .enumerate()
        .map(|(i, rep)| Cell {
            rep,
            e_enc_hat: e_enc[i],
            e_dec_hat: e_dec[i],
            e_total_hat: weights.enc * e_enc[i] + weights.dec * e_dec[i],
            q_hat: q[i],
        })
        .collect();
    Ok(PredictionGrid::new(anchor.video_id.clone(), cells))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub video_id: String,
    pub rho: Rho,
    pub chosen: Representation,
    pub q_max_hat: f64,
    pub threshold: f64,
    /// In grid order.
    pub feasible: Vec<Representation>,
    pub predicted: Cell,
}

/// Total order used to pick among feasible cells; `Less` is preferred.
pub fn preference(a: &Cell, b: &Cell) -> Ordering {
    a.e_total_hat
        .total_cmp(&b.e_total_hat)
        .then(b.q_hat.total_cmp(&a.q_hat))
        .then(a.rep.height().cmp(&b.rep.height()))
        .then(b.rep.qp.cmp(&a.rep.qp))
}

pub fn select(grid: &PredictionGrid, rho: Rho) -> Result<SelectionResult, SelectError> {
    let q_max_hat = grid.cells.iter().map(|c| c.q_hat).reduce(f64::max).ok_or(SelectError::EmptyGrid)?;
    let threshold = (1.0 - rho.value()) * q_max_hat;
    let mut chosen: Option<&Cell> = None;
    let mut feasible = Vec::new();
    for cell in grid.cells.iter().filter(|c| c.q_hat >= threshold) {
        feasible.push(cell.rep);
        if chosen.is_none_or(|best| preference(cell, best) == Ordering::Less) {
            chosen = Some(cell);
        }
    }
    // the q_max cell always clears the threshold
    let chosen = chosen.expect("feasible set is non-empty");
    Ok(SelectionResult {
        video_id: grid.video_id.clone(),
        rho,
        chosen: chosen.rep,
        q_max_hat,
        threshold,
        feasible,
        predicted: chosen.clone(),
    })
}

/// Per-video outcome of one policy level, with ground truth attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoOutcome {
    pub video_id: String,
    pub rho: Rho,
    pub chosen: Representation,
    pub predicted_total: f64,
    pub enc_energy: f64,
    pub dec_energy: f64,
    pub vmaf: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub reports: Vec<PolicyReport>,
    /// Video-major, then in the order of the requested rho values.
    pub outcomes: Vec<VideoOutcome>,
}

/// Runs the selector on every test video at each `rho` and scores the
/// chosen representations with their measured values. Savings are
/// per-video percentages against that video's `rho = 0` choice, averaged
/// over videos; quality drops are differences of the averages.
pub fn evaluate_policy(
    ds_test: &Dataset,
    models: &impl ModelSet,
    space: &ConfigSpace,
    rhos: &[Rho],
    metric: QualityMetric,
) -> Result<PolicyEvaluation, SelectError> {
    evaluate_with(ds_test, space, rhos, |video| {
        let anchor = ds_test.anchor_of(video, space)?;
        build_grid(models, &anchor, space, metric)
    })
}

/// The same evaluation with a selector that sees measured values.
pub fn evaluate_oracle_policy(
    ds_test: &Dataset,
    space: &ConfigSpace,
    rhos: &[Rho],
    metric: QualityMetric,
) -> Result<PolicyEvaluation, SelectError> {
    evaluate_with(ds_test, space, rhos, |video| PredictionGrid::from_ground_truth(ds_test, video, space, metric))
}

fn evaluate_with(
    ds_test: &Dataset,
    space: &ConfigSpace,
    rhos: &[Rho],
    grid_for: impl Fn(&str) -> Result<PredictionGrid, SelectError>,
) -> Result<PolicyEvaluation, SelectError> {
    let videos = ds_test.video_ids();
    if videos.is_empty() {
        return Err(SelectError::Dataset(DatasetError::TooFewVideos { found: 0 }));
    }
    let outcome = |grid: &PredictionGrid, rho: Rho| -> Result<VideoOutcome, SelectError> {
        let sel = select(grid, rho)?;
        let rec = ds_test.get(&grid.video_id, &sel.chosen).filter(|_| space.contains(&sel.chosen)).ok_or_else(|| {
            SelectError::MissingGroundTruth { video_id: grid.video_id.clone(), rep: sel.chosen }
        })?;
        Ok(VideoOutcome {
            video_id: grid.video_id.clone(),
            rho,
            chosen: sel.chosen,
            predicted_total: sel.predicted.e_total_hat,
            enc_energy: rec.enc_energy,
            dec_energy: rec.dec_energy,
            vmaf: rec.vmaf,
            psnr: rec.psnr,
        })
    };

    let mut baselines = Vec::with_capacity(videos.len());
    let mut outcomes = Vec::with_capacity(videos.len() * rhos.len());
    for video in &videos {
        let grid = grid_for(video)?;
        baselines.push(outcome(&grid, Rho::ZERO)?);
        for &rho in rhos {
            outcomes.push(outcome(&grid, rho)?);
        }
    }

    let n = videos.len() as f64;
    let mean = |f: &dyn Fn(&VideoOutcome) -> f64, rows: &mut dyn Iterator<Item = &VideoOutcome>| rows.map(f).sum::<f64>() / n;
    let base_vmaf = mean(&|o| o.vmaf, &mut baselines.iter());
    let base_psnr = mean(&|o| o.psnr, &mut baselines.iter());
    let mut reports = Vec::with_capacity(rhos.len());
    for (k, &rho) in rhos.iter().enumerate() {
        let rows: Vec<&VideoOutcome> = outcomes.iter().skip(k).step_by(rhos.len()).collect();
        let mut savings = [0.0; 4];
        for (o, b) in rows.iter().zip(&baselines) {
            savings[0] += energy_savings_pct(b.enc_energy, o.enc_energy)? / n;
            savings[1] += energy_savings_pct(b.dec_energy, o.dec_energy)? / n;
            savings[2] += energy_savings_pct(b.enc_energy + b.dec_energy, o.enc_energy + o.dec_energy)? / n;
            savings[3] += energy_savings_pct(b.predicted_total, o.predicted_total)? / n;
        }
        let avg_vmaf = mean(&|o| o.vmaf, &mut rows.iter().copied());
        let avg_psnr = mean(&|o| o.psnr, &mut rows.iter().copied());
        reports.push(PolicyReport {
            rho: rho.value(),
            avg_vmaf,
            avg_psnr,
            vmaf_drop: base_vmaf - avg_vmaf,
            psnr_drop: base_psnr - avg_psnr,
            enc_savings_pct: savings[0],
            dec_savings_pct: savings[1],
            total_savings_pct: savings[2],
            predicted_savings_pct: savings[3],
        });
    }
    Ok(PolicyEvaluation { reports, outcomes })
}

pub const POLICY_CSV_HEADER: &str =
    "rho,avg_vmaf,avg_psnr,vmaf_drop,psnr_drop,enc_savings_pct,dec_savings_pct,total_savings_pct,predicted_savings_pct";

/// One row per rho, four decimals.
pub fn policy_csv(reports: &[PolicyReport]) -> String {
    let mut out = String::from(POLICY_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.rho,
            r.avg_vmaf,
            r.avg_psnr,
            r.vmaf_drop,
            r.psnr_drop,
            r.enc_savings_pct,
            r.dec_savings_pct,
            r.total_savings_pct,
            r.predicted_savings_pct
        );
    }
    out
}

//! Regressors mapping `(anchor value, height, qp)` to a target quantity.
//!
//! Six model families are available, each with the hyperparameter grid in
//! [`grids::default_grid`]. A fitted model is a [`TrainedPredictor`]: the
//! spec it was built from, a per-feature scaler, and the family-specific
//! learned state. Predictors serialize to a versioned JSON document.

pub mod cv;
pub mod grids;
mod linear;
mod mlp;
mod train;
mod tree;

pub use cv::{expand_grid, grid_search_cv, kfold_assignment, CvResult, Grid};
pub use linear::LinearModel;
pub use mlp::{mlp_gradient_check, mlp_gradient_check_with_step, MlpModel, MlpNetwork};
pub use train::{build_features, build_features_at, train_all, train_all_with, FamilyResult, TargetModels, TrainOptions, TrainedModels};
pub use tree::{BoostedModel, Forest, Node, RegressionTree};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricError;
use crate::model::{AnchorMeasurement, DatasetError, MeasurementRecord, QualityMetric};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("{features} feature vectors but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("invalid hyperparameter `{name}`: {reason}")]
    BadHyperparameter { name: String, reason: String },
    #[error("design matrix is degenerate: {0}")]
    DegenerateDesignMatrix(&'static str),
    #[error("model file: {0}")]
    Persist(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Ridge,
    RandomForest,
    GbmDepthwise,
    GbmLeafwise,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Linear,
        Family::Ridge,
        Family::RandomForest,
        Family::GbmDepthwise,
        Family::GbmLeafwise,
        Family::Mlp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Ridge => "ridge",
            Family::RandomForest => "random_forest",
            Family::GbmDepthwise => "gbm_depthwise",
            Family::GbmLeafwise => "gbm_leafwise",
            Family::Mlp => "mlp",
        }
    }

    /// Whether features are standardized before fitting.
    pub fn scales_features(&self) -> bool {
        matches!(self, Family::Linear | Family::Ridge | Family::Mlp)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown model family `{s}`"))
    }
}

/// Quantity a predictor estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    EncEnergy,
    DecEnergy,
    Psnr,
    Vmaf,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::EncEnergy, Target::DecEnergy, Target::Psnr, Target::Vmaf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Target::EncEnergy => "enc_energy",
            Target::DecEnergy => "dec_energy",
            Target::Psnr => "psnr",
            Target::Vmaf => "vmaf",
        }
    }

    pub fn quality(metric: QualityMetric) -> Target {
        match metric {
            QualityMetric::Vmaf => Target::Vmaf,
            QualityMetric::Psnr => Target::Psnr,
        }
    }

    /// Anchor reading fed to this target's model: encode time for encoding
    /// energy, decode time for decoding energy, the same quality score for
    /// quality targets.
    pub fn anchor_value(&self, anchor: &AnchorMeasurement) -> f64 {
        match self {
            Target::EncEnergy => anchor.enc_time,
            Target::DecEnergy => anchor.dec_time,
            Target::Psnr => anchor.psnr,
            Target::Vmaf => anchor.vmaf,
        }
    }

    pub fn value(&self, rec: &MeasurementRecord) -> f64 {
        match self {
            Target::EncEnergy => rec.enc_energy,
            Target::DecEnergy => rec.dec_energy,
            Target::Psnr => rec.psnr,
            Target::Vmaf => rec.vmaf,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Target::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown target `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub anchor_value: f64,
    pub height: u32,
    pub qp: u8,
}

pub const N_FEATURES: usize = 3;

impl FeatureVector {
    pub fn new(anchor_value: f64, height: u32, qp: u8) -> Self {
        Self { anchor_value, height, qp }
    }

    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [self.anchor_value, self.height as f64, self.qp as f64]
    }
}

/// A hyperparameter value. `Unbounded` stands for "no limit" (e.g. an
/// unrestricted tree depth) and serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(i64),
    Float(f64),
    Unbounded,
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v}"),
            HyperValue::Unbounded => f.write_str("none"),
        }
    }
}

pub type Hyperparameters = BTreeMap<String, HyperValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self { family, hyperparameters: Hyperparameters::new(), seed }
    }

    pub fn with(mut self, name: &str, value: HyperValue) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn with_int(self, name: &str, value: i64) -> Self {
        self.with(name, HyperValue::Int(value))
    }

    pub fn with_float(self, name: &str, value: f64) -> Self {
        self.with(name, HyperValue::Float(value))
    }

    fn bad(name: &str, reason: impl Into<String>) -> PredictError {
        PredictError::BadHyperparameter { name: name.to_string(), reason: reason.into() }
    }

    pub(crate) fn float(&self, name: &str, default: f64) -> Result<f64, PredictError> {
        match self.hyperparameters.get(name) {
            None => Ok(default),
            Some(HyperValue::Float(v)) => Ok(*v),
            Some(HyperValue::Int(v)) => Ok(*v as f64),
            Some(HyperValue::Unbounded) => Err(Self::bad(name, "expected a number")),
        }
    }

    pub(crate) fn count(&self, name: &str, default: usize) -> Result<usize, PredictError> {
        match self.limit(name, Some(default))? {
            Some(v) => Ok(v),
            None => Err(Self::bad(name, "expected a non-negative integer")),
        }
    }

    /// Non-negative integer or `Unbounded` (`None`).
    pub(crate) fn limit(&self, name: &str, default: Option<usize>) -> Result<Option<usize>, PredictError> {
        match self.hyperparameters.get(name) {
            None => Ok(default),
            Some(HyperValue::Unbounded) => Ok(None),
            Some(HyperValue::Int(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(HyperValue::Float(v)) if *v >= 0.0 && v.fract() == 0.0 => Ok(Some(*v as usize)),
            Some(other) => Err(Self::bad(name, format!("expected a non-negative integer, got {other}"))),
        }
    }

    /// Short `name=value` rendering for reports.
    pub fn describe(&self) -> String {
        if self.hyperparameters.is_empty() {
            return "-".into();
        }
        self.hyperparameters.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

/// Per-feature `(mean, sd)` standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub params: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn identity() -> Self {
        Self { params: vec![(0.0, 1.0); N_FEATURES] }
    }

    /// Population mean and standard deviation; a zero spread maps to 1 so
    /// constant features become all-zero columns.
    pub fn fit(x: &[[f64; N_FEATURES]]) -> Self {
        let n = x.len() as f64;
        let params = (0..N_FEATURES)
            .map(|j| {
                let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                (mean, if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 })
            })
            .collect();
        Self { params }
    }

    pub fn transform(&self, row: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for (j, (m, s)) in self.params.iter().enumerate() {
            out[j] = (row[j] - m) / s;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnedState {
    Linear(LinearModel),
    Forest(Forest),
    Boosted(BoostedModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPredictor {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub target: Option<Target>,
    pub scaler: Scaler,
    pub learned_state: LearnedState,
}

fn check_inputs(x: &[FeatureVector], y: &[f64]) -> Result<(), PredictError> {
    if x.len() != y.len() {
        return Err(PredictError::LengthMismatch { features: x.len(), targets: y.len() });
    }
    if x.len() < 2 {
        return Err(PredictError::TooFewSamples { needed: 2, got: x.len() });
    }
    if x.iter().any(|f| !f.anchor_value.is_finite()) {
        return Err(PredictError::NonFiniteInput("features"));
    }
    if x.iter().any(|f| f.anchor_value < 0.0) {
        return Err(PredictError::BadHyperparameter {
            name: "anchor_value".into(),
            reason: "anchor values must be non-negative".into(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(PredictError::NonFiniteInput("targets"));
    }
    Ok(())
}

/// Fits one model of `spec.family` on the given samples.
pub fn fit(spec: &ModelSpec, x: &[FeatureVector], y: &[f64]) -> Result<TrainedPredictor, PredictError> {
    check_inputs(x, y)?;
    let raw: Vec<[f64; N_FEATURES]> = x.iter().map(FeatureVector::to_array).collect();
    let scaler = if spec.family.scales_features() { Scaler::fit(&raw) } else { Scaler::identity() };
    let z: Vec<[f64; N_FEATURES]> = raw.iter().map(|r| scaler.transform(r)).collect();
    let learned_state = match spec.family {
        Family::Linear => LearnedState::Linear(LinearModel::fit_ols(&z, y)?),
        Family::Ridge => LearnedState::Linear(LinearModel::fit_ridge(&z, y, spec.float("alpha", 1.0)?)?),
        Family::RandomForest => LearnedState::Forest(Forest::fit(spec, &z, y)?),
        Family::GbmDepthwise | Family::GbmLeafwise => LearnedState::Boosted(BoostedModel::fit(spec, &z, y)?.0),
        Family::Mlp => LearnedState::Mlp(MlpModel::fit(spec, &z, y)?),
    };
    Ok(TrainedPredictor { format_version: MODEL_FORMAT_VERSION, spec: spec.clone(), target: None, scaler, learned_state })
}

/// Applies the fitted model to each feature vector.
pub fn predict(p: &TrainedPredictor, x: &[FeatureVector]) -> Result<Vec<f64>, PredictError> {
    p.predict(x)
}

impl TrainedPredictor {
    pub fn predict(&self, x: &[FeatureVector]) -> Result<Vec<f64>, PredictError> {
        if x.iter().any(|f| !f.anchor_value.is_finite()) {
            return Err(PredictError::NonFiniteInput("features"));
        }
        Ok(x.iter().map(|f| self.predict_one(f)).collect())
    }

    pub fn predict_one(&self, f: &FeatureVector) -> f64 {
        let z = self.scaler.transform(&f.to_array());
        match &self.learned_state {
            LearnedState::Linear(m) => m.predict(&z),
            LearnedState::Forest(m) => m.predict(&z),
            LearnedState::Boosted(m) => m.predict(&z),
            LearnedState::Mlp(m) => m.predict(&z),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let p: TrainedPredictor = serde_json::from_str(text).map_err(|e| PredictError::Persist(e.to_string()))?;
        if p.format_version != MODEL_FORMAT_VERSION {
            return Err(PredictError::Persist(format!(
                "unsupported format version {} (expected {MODEL_FORMAT_VERSION})",
                p.format_version
            )));
        }
        if p.scaler.params.len() != N_FEATURES {
            return Err(PredictError::Persist("scaler must have 3 entries".into()));
        }
        Ok(p)
    }
}

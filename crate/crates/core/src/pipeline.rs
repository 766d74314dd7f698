//! Library side of the command-line tool: run configuration, the exit-code
//! taxonomy, model persistence and one function per pipeline stage.
//!
//! The binary only parses flags and calls into this module, so everything a
//! command writes can also be produced (and tested) in-process.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    anchor_ranking, anchor_sweep, default_candidates, pairwise_correlation, ranking_csv, sweep_csv, AnalysisError,
    AnchorSweepRow, CorrelationMatrix, RankingRow, SweepOptions,
};
use crate::harness::{synth_generate, HarnessError, SyntheticWorldParams};
use crate::model::{load_dataset, write_dataset, ConfigSpace, Dataset, DatasetError, QualityMetric};
use crate::predictors::{train_all_with, Family, PredictError, Target, TrainOptions, TrainedModels, TrainedPredictor};
use crate::report::{
    aggregates, aggregates_csv, correlation_csv, evaluate_models, model_report_csv, model_report_text, policy_report_text,
    Axis, ModelEvaluation,
};
use crate::selector::{evaluate_policy, policy_csv, ModelSet, PolicyEvaluation, Rho, SelectError, DEFAULT_RHOS};

pub const SEED_ENV: &str = "GREENLADDER_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("training failed: {0}")]
    Training(String),
    #[error("model error: {0}")]
    Model(String),
}

impl AppError {
    /// 2 usage or validation, 3 I/O, 4 training, 5 model.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Invalid(_) => 2,
            AppError::Io { .. } => 3,
            AppError::Training(_) => 4,
            AppError::Model(_) => 5,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        AppError::Io { path: path.display().to_string(), reason: e.to_string() }
    }
}

impl From<DatasetError> for AppError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(io) => AppError::Io { path: "dataset".into(), reason: io.to_string() },
            other => AppError::Invalid(other.to_string()),
        }
    }
}

impl From<PredictError> for AppError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::Persist(_) => AppError::Model(e.to_string()),
            PredictError::Dataset(d) => d.into(),
            other => AppError::Training(other.to_string()),
        }
    }
}

impl From<SelectError> for AppError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::MissingModel(_) | SelectError::Predict(_) => AppError::Model(e.to_string()),
            SelectError::Dataset(d) => d.into(),
            other => AppError::Invalid(other.to_string()),
        }
    }
}

impl From<HarnessError> for AppError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(_) | HarnessError::CommandFailed { .. } | HarnessError::Timeout { .. } | HarnessError::ParseFailure { .. } => {
                AppError::Io { path: "measurement".into(), reason: e.to_string() }
            }
            HarnessError::Dataset(d) => d.into(),
            other => AppError::Invalid(other.to_string()),
        }
    }
}

impl From<AnalysisError> for AppError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Predict(p) => p.into(),
            AnalysisError::Dataset(d) => d.into(),
            other => AppError::Invalid(other.to_string()),
        }
    }
}

/// Input and output locations; each command falls back to these when the
/// matching flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Everything a run depends on. Parsed from a JSON file whose keys mirror
/// the fields; absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub space: ConfigSpace,
    /// `None` defers to the environment, then to [`DEFAULT_SEED`].
    pub seed: Option<u64>,
    pub train_fraction: f64,
    pub quality_metric: QualityMetric,
    pub rho_list: Vec<Rho>,
    pub folds: usize,
    /// Search the reduced grids instead of the full ones.
    pub quick_grids: bool,
    pub families: Vec<Family>,
    pub targets: Vec<Target>,
    /// Used by `dataset synth`; its `seed` is replaced by the run seed.
    pub synthetic: SyntheticWorldParams,
    /// Family retrained per candidate in the anchor sweep; `None` skips it.
    pub sweep_family: Option<Family>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            space: ConfigSpace::default_ladder(),
            seed: None,
            train_fraction: 0.7,
            quality_metric: QualityMetric::Vmaf,
            rho_list: DEFAULT_RHOS.iter().map(|&r| Rho::new(r).expect("valid rho")).collect(),
            folds: 5,
            quick_grids: false,
            families: Family::ALL.to_vec(),
            targets: Target::ALL.to_vec(),
            synthetic: SyntheticWorldParams::default(),
            sweep_family: Some(Family::GbmDepthwise),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| AppError::Invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(AppError::Invalid(format!("train_fraction {} is not in (0, 1)", self.train_fraction)));
        }
        if self.folds < 2 {
            return Err(AppError::Invalid("folds must be at least 2".into()));
        }
        if self.families.is_empty() || self.targets.is_empty() {
            return Err(AppError::Invalid("families and targets must be non-empty".into()));
        }
        if self.rho_list.is_empty() {
            return Err(AppError::Invalid("rho_list must be non-empty".into()));
        }
        self.synthetic.validate()?;
        Ok(())
    }

    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            families: self.families.clone(),
            targets: self.targets.clone(),
            folds: self.folds,
            quick: self.quick_grids,
            seed,
        }
    }

    /// Targets the selector needs: both energies and the chosen quality.
    pub fn selection_targets(&self) -> Vec<Target> {
        vec![Target::EncEnergy, Target::DecEnergy, Target::quality(self.quality_metric)]
    }
}

/// First of: explicit flag, config file, `GREENLADDER_SEED`, [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64, AppError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| AppError::Invalid(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

pub fn load_data(path: &Path) -> Result<Dataset, AppError> {
    load_dataset(path).map_err(|e| match e {
        DatasetError::Io(io) => AppError::io(path, io),
        other => AppError::Invalid(format!("{}: {other}", path.display())),
    })
}

pub fn dataset_csv(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("dataset CSV is UTF-8")
}

/// Canonical synthetic dataset for a run.
pub fn synth_dataset(cfg: &RunConfig, seed: u64) -> Result<Dataset, AppError> {
    let params = SyntheticWorldParams { seed, ..cfg.synthetic.clone() };
    Ok(synth_generate(&params, &cfg.space)?)
}

pub fn split(ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<(Dataset, Dataset), AppError> {
    Ok(ds.split_by_video(cfg.train_fraction, seed)?)
}

pub const CV_RESULTS_FILE: &str = "cv_results.json";

pub fn model_file(dir: &Path, target: Target) -> PathBuf {
    dir.join(format!("{target}.json"))
}

pub fn candidate_file(dir: &Path, target: Target, family: Family) -> PathBuf {
    dir.join("candidates").join(format!("{target}_{family}.json"))
}

/// Writes each target's best model, every refit candidate and the grid
/// search scores.
pub fn save_models(models: &TrainedModels, dir: &Path) -> Result<(), AppError> {
    let mut cv = BTreeMap::new();
    for (&target, tm) in models {
        write_file(&model_file(dir, target), &tm.best_model().to_json())?;
        for c in &tm.candidates {
            write_file(&candidate_file(dir, target, c.family), &c.model.to_json())?;
        }
        let per_family: BTreeMap<String, _> = tm.candidates.iter().map(|c| (c.family.to_string(), &c.cv)).collect();
        cv.insert(target.to_string(), per_family);
    }
    write_file(&dir.join(CV_RESULTS_FILE), &serde_json::to_string_pretty(&cv).expect("cv results serialize"))
}

/// Loads the best model of each target; errors name the offending file.
pub fn load_models(dir: &Path, targets: &[Target]) -> Result<BTreeMap<Target, TrainedPredictor>, AppError> {
    let mut out = BTreeMap::new();
    for &target in targets {
        let path = model_file(dir, target);
        let text = fs::read_to_string(&path).map_err(|e| AppError::Model(format!("{}: {e}", path.display())))?;
        let p = TrainedPredictor::from_json(&text).map_err(|e| AppError::Model(format!("{}: {e}", path.display())))?;
        if p.target.is_some_and(|t| t != target) {
            return Err(AppError::Model(format!("{}: holds a model for {}", path.display(), p.target.unwrap())));
        }
        out.insert(target, p);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub models: TrainedModels,
    pub evaluation: Vec<ModelEvaluation>,
}

/// Splits by video, grid-searches every family for every target and scores
/// the refit models on the held-out videos.
pub fn run_train(ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<TrainSummary, AppError> {
    let (train, test) = split(ds, cfg, seed)?;
    let models = train_all_with(&train, &cfg.space, &cfg.train_options(seed))?;
    let evaluation = evaluate_models(&models, &test, &cfg.space)?;
    Ok(TrainSummary { models, evaluation })
}

/// Policy table over `cfg.rho_list` on the held-out videos of the run split.
pub fn run_evaluate(ds: &Dataset, models: &impl ModelSet, cfg: &RunConfig, seed: u64) -> Result<PolicyEvaluation, AppError> {
    let (_, test) = split(ds, cfg, seed)?;
    Ok(evaluate_policy(&test, models, &cfg.space, &cfg.rho_list, cfg.quality_metric)?)
}

#[derive(Debug, Clone)]
pub struct AnalysisSummary {
    pub correlation: CorrelationMatrix,
    pub ranking: Vec<RankingRow>,
    pub sweep: Option<Vec<AnchorSweepRow>>,
}

pub fn run_analyze(ds: &Dataset, cfg: &RunConfig, seed: u64) -> Result<AnalysisSummary, AppError> {
    let correlation = pairwise_correlation(ds, &cfg.space)?;
    let ranking = anchor_ranking(&correlation, ds)?;
    let sweep = match cfg.sweep_family {
        Some(family) => {
            let candidates: Vec<_> = default_candidates().into_iter().filter(|c| cfg.space.contains(c)).collect();
            let opts = SweepOptions {
                train_fraction: cfg.train_fraction,
                train: cfg.train_options(seed),
                ..SweepOptions::new(family, seed)
            };
            Some(anchor_sweep(ds, &cfg.space, &candidates, &opts)?)
        }
        None => None,
    };
    Ok(AnalysisSummary { correlation, ranking, sweep })
}

pub mod files {
    pub const DATASET: &str = "dataset.csv";
    pub const MODELS_DIR: &str = "models";
    pub const REPORTS_DIR: &str = "reports";
    pub const MODEL_REPORT_TXT: &str = "model_report.txt";
    pub const MODEL_REPORT_CSV: &str = "model_report.csv";
    pub const POLICY_CSV: &str = "policy.csv";
    pub const POLICY_TXT: &str = "policy.txt";
    pub const AGG_RESOLUTION_CSV: &str = "aggregates_by_resolution.csv";
    pub const AGG_QP_CSV: &str = "aggregates_by_qp.csv";
    pub const CORRELATION_CSV: &str = "correlation_matrix.csv";
    pub const RANKING_CSV: &str = "anchor_ranking.csv";
    pub const SWEEP_CSV: &str = "anchor_sweep.csv";
}

pub fn write_train_reports(evaluation: &[ModelEvaluation], dir: &Path) -> Result<(), AppError> {
    write_file(&dir.join(files::MODEL_REPORT_TXT), &model_report_text(evaluation))?;
    write_file(&dir.join(files::MODEL_REPORT_CSV), &model_report_csv(evaluation))
}

pub fn write_policy_reports(eval: &PolicyEvaluation, dir: &Path) -> Result<(), AppError> {
    write_file(&dir.join(files::POLICY_CSV), &policy_csv(&eval.reports))?;
    write_file(&dir.join(files::POLICY_TXT), &policy_report_text(&eval.reports))
}

pub fn write_aggregate_reports(ds: &Dataset, dir: &Path) -> Result<(), AppError> {
    write_file(&dir.join(files::AGG_RESOLUTION_CSV), &aggregates_csv(&aggregates(ds, Axis::Resolution), Axis::Resolution))?;
    write_file(&dir.join(files::AGG_QP_CSV), &aggregates_csv(&aggregates(ds, Axis::Qp), Axis::Qp))
}

pub fn write_analysis_reports(a: &AnalysisSummary, dir: &Path) -> Result<(), AppError> {
    write_file(&dir.join(files::CORRELATION_CSV), &correlation_csv(&a.correlation))?;
    write_file(&dir.join(files::RANKING_CSV), &ranking_csv(&a.ranking))?;
    if let Some(sweep) = &a.sweep {
        write_file(&dir.join(files::SWEEP_CSV), &sweep_csv(sweep))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub dataset: Dataset,
    pub train: TrainSummary,
    pub policy: PolicyEvaluation,
    pub analysis: AnalysisSummary,
    /// Wall-clock seconds per stage: synth, train, evaluate, analyze, report.
    pub stage_seconds: [f64; 5],
}

/// Synthesizes a dataset and runs every stage on it, writing
/// `dataset.csv`, `models/` and `reports/` under `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<PipelineSummary, AppError> {
    cfg.validate()?;
    let reports = out_dir.join(files::REPORTS_DIR);
    let mut stage_seconds = [0.0; 5];
    let mut clock = Instant::now();
    let mut lap = |i: usize| {
        stage_seconds[i] = clock.elapsed().as_secs_f64();
        clock = Instant::now();
    };

    let dataset = synth_dataset(cfg, seed)?;
    write_file(&out_dir.join(files::DATASET), &dataset_csv(&dataset))?;
    lap(0);

    let train = run_train(&dataset, cfg, seed)?;
    save_models(&train.models, &out_dir.join(files::MODELS_DIR))?;
    write_train_reports(&train.evaluation, &reports)?;
    lap(1);

    let policy = run_evaluate(&dataset, &train.models, cfg, seed)?;
    write_policy_reports(&policy, &reports)?;
    lap(2);

    let analysis = run_analyze(&dataset, cfg, seed)?;
    write_analysis_reports(&analysis, &reports)?;
    lap(3);

    write_aggregate_reports(&dataset, &reports)?;
    lap(4);

    Ok(PipelineSummary { dataset, train, policy, analysis, stage_seconds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig {
            space: ConfigSpace::new(&[360, 720, 1080], &[22, 32, 47]).unwrap(),
            quick_grids: true,
            families: vec![Family::Linear, Family::GbmDepthwise],
            synthetic: SyntheticWorldParams { n_videos: 12, ..Default::default() },
            sweep_family: Some(Family::Linear),
            ..RunConfig::default()
        }
    }

    #[test]
    fn seed_resolution_order() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some(" 3 ")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), DEFAULT_SEED);
        assert_eq!(resolve_seed(None, None, Some("x")).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = small_config();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 9, "rho_list": [0, 0.5]}"#).unwrap();
        assert_eq!(partial.seed, Some(9));
        assert_eq!(partial.rho_list.len(), 2);
        assert_eq!(partial.space, ConfigSpace::default_ladder());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 9}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"rho_list": [1.5]}"#).is_err());
        let bad = RunConfig { train_fraction: 1.0, ..RunConfig::default() };
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn error_taxonomy() {
        assert_eq!(AppError::from(PredictError::EmptyGrid).exit_code(), 4);
        assert_eq!(AppError::from(PredictError::Persist("x".into())).exit_code(), 5);
        assert_eq!(AppError::from(SelectError::MissingModel(Target::Vmaf)).exit_code(), 5);
        assert_eq!(AppError::from(DatasetError::BadFraction(2.0)).exit_code(), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(AppError::from(DatasetError::Io(io)).exit_code(), 3);
        assert_eq!(load_data(Path::new("/nonexistent/d.csv")).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn models_survive_a_save_load_cycle() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let ds = synth_dataset(&cfg, 3).unwrap();
        let summary = run_train(&ds, &cfg, 3).unwrap();
        save_models(&summary.models, dir.path()).unwrap();
        let loaded = load_models(dir.path(), &Target::ALL).unwrap();
        for (target, p) in &loaded {
            assert_eq!(p, summary.models[target].best_model());
        }
        assert!(candidate_file(dir.path(), Target::Vmaf, Family::Linear).exists());
        fs::write(model_file(dir.path(), Target::Psnr), "{ not json").unwrap();
        let err = load_models(dir.path(), &[Target::Psnr]).unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert!(err.to_string().contains("psnr.json"));
    }

    #[test]
    fn pipeline_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(&small_config(), 5, dir.path()).unwrap();
        assert_eq!(summary.dataset.len(), 12 * 9);
        for f in [
            files::MODEL_REPORT_TXT,
            files::MODEL_REPORT_CSV,
            files::POLICY_CSV,
            files::POLICY_TXT,
            files::AGG_RESOLUTION_CSV,
            files::AGG_QP_CSV,
            files::CORRELATION_CSV,
            files::RANKING_CSV,
            files::SWEEP_CSV,
        ] {
            assert!(dir.path().join(files::REPORTS_DIR).join(f).exists(), "{f}");
        }
        let corr = fs::read_to_string(dir.path().join("reports").join(files::CORRELATION_CSV)).unwrap();
        assert_eq!(corr.lines().count(), 10);
        assert!(dir.path().join("models").join("enc_energy.json").exists());
    }
}

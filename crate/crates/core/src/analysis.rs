//! How well one configuration's encoding time stands in for the others, and
//! what choosing a different anchor costs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::r_squared;
use crate::model::{ConfigSpace, Dataset, Representation};
use crate::predictors::{build_features_at, fit, grid_search_cv, Family, PredictError, Target, TrainOptions};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("video {video_id} has no record for {rep}")]
    MissingCell { video_id: String, rep: Representation },
    #[error("encoding time of {0} does not vary across videos")]
    ZeroVariance(Representation),
    #[error("need at least 2 videos, got {0}")]
    TooFewVideos(usize),
    #[error("anchor candidate {0} is outside the configuration space")]
    OutsideSpace(Representation),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Dataset(#[from] crate::model::DatasetError),
}

/// Pearson coefficients between per-video encoding times of every pair of
/// configurations. Symmetric with a unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub configs: Vec<Representation>,
    pub values: Vec<Vec<f64>>,
}

/// Per-video encoding times of `rep`, in video-id order.
fn enc_times(ds: &Dataset, videos: &[String], rep: &Representation) -> Result<Vec<f64>, AnalysisError> {
    videos
        .iter()
        .map(|v| {
            ds.get(v, rep)
                .map(|r| r.enc_time)
                .ok_or_else(|| AnalysisError::MissingCell { video_id: v.clone(), rep: *rep })
        })
        .collect()
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    (c, norm)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ((ca, na), (cb, nb)) = (centered(a), centered(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let r = ca.iter().zip(&cb).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some(r.clamp(-1.0, 1.0))
}

pub fn pairwise_correlation(ds: &Dataset, space: &ConfigSpace) -> Result<CorrelationMatrix, AnalysisError> {
    let videos = ds.video_ids();
    if videos.len() < 2 {
        return Err(AnalysisError::TooFewVideos(videos.len()));
    }
    let configs: Vec<Representation> = space.representations().collect();
    let columns: Vec<(Vec<f64>, f64)> = configs
        .iter()
        .map(|rep| {
            let (c, norm) = centered(&enc_times(ds, &videos, rep)?);
            if norm == 0.0 {
                return Err(AnalysisError::ZeroVariance(*rep));
            }
            Ok((c, norm))
        })
        .collect::<Result<_, _>>()?;
    let n = configs.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let (ci, ni) = &columns[i];
                    let (cj, nj) = &columns[j];
                    (ci.iter().zip(cj).map(|(x, y)| x * y).sum::<f64>() / (ni * nj)).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for (k, &r) in upper[i].iter().enumerate() {
            values[i][i + 1 + k] = r;
            values[i + 1 + k][i] = r;
        }
    }
    Ok(CorrelationMatrix { configs, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rep: Representation,
    /// Mean correlation with every other configuration; 1 when there is
    /// no other configuration.
    pub mean_corr: f64,
    pub mean_time: f64,
}

/// Configurations sorted by ascending mean encoding time; equal times keep
/// matrix order.
pub fn anchor_ranking(cm: &CorrelationMatrix, ds: &Dataset) -> Result<Vec<RankingRow>, AnalysisError> {
    let videos = ds.video_ids();
    let n = cm.configs.len();
    let mut rows = cm
        .configs
        .iter()
        .enumerate()
        .map(|(i, rep)| {
            let times = enc_times(ds, &videos, rep)?;
            let mean_corr = if n > 1 {
                cm.values[i].iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r).sum::<f64>() / (n - 1) as f64
            } else {
                1.0
            };
            Ok(RankingRow { rep: *rep, mean_corr, mean_time: times.iter().sum::<f64>() / times.len() as f64 })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    rows.sort_by(|a, b| a.mean_time.total_cmp(&b.mean_time));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSweepRow {
    pub anchor: Representation,
    /// Mean encoding time of the candidate over all videos, seconds.
    pub mean_anchor_time: f64,
    /// Held-out R^2 of the retrained model.
    pub r2: f64,
}

/// `{360p, 1080p, 2160p} x {QP17, QP47}`, cheapest first.
pub fn default_candidates() -> Vec<Representation> {
    let mut out = Vec::new();
    for h in [360, 1080, 2160] {
        for qp in [47, 17] {
            out.push(Representation::new(h, qp));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub family: Family,
    pub target: Target,
    pub train_fraction: f64,
    /// Grid, folds and seed for each retraining; `families` is ignored.
    pub train: TrainOptions,
}

impl SweepOptions {
    pub fn new(family: Family, seed: u64) -> Self {
        Self { family, target: Target::EncEnergy, train_fraction: 0.7, train: TrainOptions::new(seed) }
    }
}

/// Retrains `opts.family` once per candidate anchor on the same video split
/// and scores it on the held-out videos.
pub fn anchor_sweep(
    ds: &Dataset,
    space: &ConfigSpace,
    candidates: &[Representation],
    opts: &SweepOptions,
) -> Result<Vec<AnchorSweepRow>, AnalysisError> {
    if let Some(c) = candidates.iter().find(|c| !space.contains(c)) {
        return Err(AnalysisError::OutsideSpace(*c));
    }
    let (train, test) = ds.split_by_video(opts.train_fraction, opts.train.seed)?;
    let videos = ds.video_ids();
    let grid = opts.train.grid(opts.family);
    candidates
        .iter()
        .map(|anchor| {
            let times = enc_times(ds, &videos, anchor)?;
            let (x, y) = build_features_at(&train, space, opts.target, anchor)?;
            let cv = grid_search_cv(opts.family, &grid, &x, &y, opts.train.folds, opts.train.seed)?;
            let model = fit(&cv.best_spec, &x, &y)?;
            let (xt, yt) = build_features_at(&test, space, opts.target, anchor)?;
            let r2 = r_squared(&yt, &model.predict(&xt)?).map_err(PredictError::from)?;
            Ok(AnchorSweepRow { anchor: *anchor, mean_anchor_time: times.iter().sum::<f64>() / times.len() as f64, r2 })
        })
        .collect()
}

pub const RANKING_CSV_HEADER: &str = "height,qp,mean_corr,mean_time_s";
pub const SWEEP_CSV_HEADER: &str = "anchor,mean_time_s,r2";

pub fn ranking_csv(rows: &[RankingRow]) -> String {
    let mut out = format!("{RANKING_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.rep.height(), r.rep.qp, r.mean_corr, r.mean_time);
    }
    out
}

pub fn sweep_csv(rows: &[AnchorSweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6}", r.anchor, r.mean_anchor_time, r.r2);
    }
    out
}

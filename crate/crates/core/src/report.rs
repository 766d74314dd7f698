//! Tables and plot data. Every table is produced both as aligned text and
//! as CSV; CSV floats use fixed precision so reruns compare byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::CorrelationMatrix;
use crate::metrics::{PolicyReport, RegressionReport};
use crate::model::{ConfigSpace, Dataset, MeasurementRecord};
use crate::predictors::{build_features, Family, PredictError, Target, TrainedModels};

/// Held-out scores of one family's refit model for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub target: Target,
    pub family: Family,
    /// Whether this family won the grid search for the target.
    pub best: bool,
    pub cv_r2: f64,
    pub hyperparameters: String,
    pub test: RegressionReport,
}

/// Scores every trained candidate on `ds_test`, target by target.
pub fn evaluate_models(models: &TrainedModels, ds_test: &Dataset, space: &ConfigSpace) -> Result<Vec<ModelEvaluation>, PredictError> {
    let mut out = Vec::new();
    for (&target, tm) in models {
        let (x, y) = build_features(ds_test, space, target)?;
        for (i, c) in tm.candidates.iter().enumerate() {
            let pred = c.model.predict(&x)?;
            out.push(ModelEvaluation {
                target,
                family: c.family,
                best: i == tm.best,
                cv_r2: c.cv.mean_score,
                hyperparameters: c.cv.best_spec.describe(),
                test: RegressionReport::compute(&y, &pred)?,
            });
        }
    }
    Ok(out)
}

/// One block per target with a row per family; `*` marks the CV winner.
pub fn model_report_text(rows: &[ModelEvaluation]) -> String {
    let mut out = String::new();
    let mut current: Option<Target> = None;
    for r in rows {
        if current != Some(r.target) {
            if current.is_some() {
                out.push('\n');
            }
            current = Some(r.target);
            let _ = writeln!(out, "Prediction results for {}", r.target);
            let _ = writeln!(out, "  {:<15} {:>8} {:>11} {:>11} {:>11}  hyperparameters", "model", "R2", "RMSE", "MAE", "SDAE");
        }
        let name = format!("{}{}", r.family, if r.best { " *" } else { "" });
        let _ = writeln!(
            out,
            "  {:<15} {:>8.4} {:>11.5} {:>11.5} {:>11.5}  {}",
            name, r.test.r2, r.test.rmse, r.test.mae, r.test.sdae, r.hyperparameters
        );
    }
    out
}

pub const MODEL_CSV_HEADER: &str = "target,family,best,cv_r2,r2,rmse,mae,sdae,n,hyperparameters";

pub fn model_report_csv(rows: &[ModelEvaluation]) -> String {
    let mut out = format!("{MODEL_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},\"{}\"",
            r.target, r.family, r.best, r.cv_r2, r.test.r2, r.test.rmse, r.test.mae, r.test.sdae, r.test.n, r.hyperparameters
        );
    }
    out
}

pub fn policy_report_text(reports: &[PolicyReport]) -> String {
    let mut out = format!(
        "{:>5} {:>9} {:>9} {:>10} {:>10} {:>9} {:>9} {:>9} {:>10}\n",
        "rho", "VMAF", "PSNR", "VMAF drop", "PSNR drop", "enc sav%", "dec sav%", "tot sav%", "pred sav%"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:>5} {:>9.2} {:>9.2} {:>10.2} {:>10.2} {:>9.2} {:>9.2} {:>9.2} {:>10.2}",
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Resolution,
    Qp,
}

impl Axis {
    fn key(&self, rec: &MeasurementRecord) -> u32 {
        match self {
            Axis::Resolution => rec.rep.height(),
            Axis::Qp => rec.rep.qp as u32,
        }
    }

    fn column(&self) -> &'static str {
        match self {
            Axis::Resolution => "height",
            Axis::Qp => "qp",
        }
    }
}

pub const QUANTITIES: [&str; 5] = ["enc_energy_wh", "dec_energy_wh", "bitrate_kbps", "psnr_db", "vmaf"];

fn quantity(rec: &MeasurementRecord, i: usize) -> f64 {
    [rec.enc_energy, rec.dec_energy, rec.bitrate, rec.psnr, rec.vmaf][i]
}

/// Summary of one quantity over the records sharing one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: u32,
    pub quantity: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Quantile of ascending `sorted` by linear interpolation between order
/// statistics at position `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Rows ordered by axis value, then by [`QUANTITIES`] order.
pub fn aggregates(ds: &Dataset, axis: Axis) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<u32, Vec<&MeasurementRecord>> = BTreeMap::new();
    for rec in ds.records() {
        groups.entry(axis.key(rec)).or_default().push(rec);
    }
    let mut out = Vec::new();
    for (key, recs) in groups {
        for (i, name) in QUANTITIES.iter().enumerate() {
            let mut v: Vec<f64> = recs.iter().map(|r| quantity(r, i)).collect();
            v.sort_by(f64::total_cmp);
            out.push(AggregateRow {
                key,
                quantity: name.to_string(),
                n: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
            });
        }
    }
    out
}

pub fn aggregates_csv(rows: &[AggregateRow], axis: Axis) -> String {
    let mut out = format!("{},quantity,n,mean,median,q1,q3\n", axis.column());
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:.6},{:.6},{:.6},{:.6}", r.key, r.quantity, r.n, r.mean, r.median, r.q1, r.q3);
    }
    out
}

/// Row count and mean energy/quality per resolution.
pub fn dataset_summary(ds: &Dataset) -> String {
    let mut out = format!("{} rows, {} videos\n", ds.len(), ds.video_ids().len());
    let rows = aggregates(ds, Axis::Resolution);
    let _ = writeln!(out, "{:>7} {:>6} {:>12} {:>12} {:>8}", "height", "n", "enc Wh", "dec Wh", "VMAF");
    for chunk in rows.chunks(QUANTITIES.len()) {
        let _ = writeln!(
            out,
            "{:>6}p {:>6} {:>12.5} {:>12.5} {:>8.2}",
            chunk[0].key, chunk[0].n, chunk[0].mean, chunk[1].mean, chunk[4].mean
        );
    }
    out
}

/// Square matrix with a header row and a label column of representations.
pub fn correlation_csv(cm: &CorrelationMatrix) -> String {
    let labels: Vec<String> = cm.configs.iter().map(|r| r.to_string()).collect();
    let mut out = format!("config,{}\n", labels.join(","));
    for (label, row) in labels.iter().zip(&cm.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{label},{}", cells.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{synth_generate, SyntheticWorldParams};
    use crate::model::Representation;
    use crate::predictors::{train_all_with, TrainOptions};

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 8.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[5.0], 0.75), 5.0);
    }

    #[test]
    fn energy_rises_with_resolution_at_fixed_qp() {
        let space = ConfigSpace::default_ladder();
        let ds = synth_generate(&SyntheticWorldParams { n_videos: 12, ..Default::default() }, &space).unwrap();
        for qp in space.qps().to_vec() {
            let recs: Vec<_> = ds.records().iter().filter(|r| r.rep.qp == qp).cloned().collect();
            let rows = aggregates(&Dataset::new(recs).unwrap(), Axis::Resolution);
            for q in ["enc_energy_wh", "dec_energy_wh"] {
                let means: Vec<f64> = rows.iter().filter(|r| r.quantity == q).map(|r| r.mean).collect();
                assert_eq!(means.len(), 6);
                assert!(means.windows(2).all(|w| w[1] > w[0]), "qp {qp} {q}: {means:?}");
            }
        }
        let by_qp = aggregates(&ds, Axis::Qp);
        assert_eq!(by_qp.len(), 7 * QUANTITIES.len());
        assert!(aggregates_csv(&by_qp, Axis::Qp).starts_with("qp,quantity,n,mean,median,q1,q3\n17,enc_energy_wh,72,"));
        assert!(dataset_summary(&ds).starts_with("504 rows, 12 videos\n"));
    }

    #[test]
    fn model_report_has_a_block_per_target_and_a_row_per_family() {
        let space = ConfigSpace::new(&[360, 720, 1080], &[22, 37, 47]).unwrap();
        let ds = synth_generate(&SyntheticWorldParams { n_videos: 20, ..Default::default() }, &space).unwrap();
        let (train, test) = ds.split_by_video(0.7, 1).unwrap();
        let models = train_all_with(&train, &space, &TrainOptions { quick: true, ..TrainOptions::new(1) }).unwrap();
        let rows = evaluate_models(&models, &test, &space).unwrap();
        assert_eq!(rows.len(), 24);
        assert_eq!(rows.iter().filter(|r| r.best).count(), 4);
        let text = model_report_text(&rows);
        assert_eq!(text.matches("Prediction results for").count(), 4);
        assert_eq!(model_report_csv(&rows).lines().count(), 25);
    }

    #[test]
    fn correlation_csv_is_square() {
        let cm = CorrelationMatrix {
            configs: vec![Representation::new(360, 47), Representation::new(720, 47)],
            values: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        };
        assert_eq!(correlation_csv(&cm), "config,360p/QP47,720p/QP47\n360p/QP47,1.000000,0.500000\n720p/QP47,0.500000,1.000000\n");
    }
}

//! Regression accuracy metrics and green-policy outcome metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} truths vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("ground truth has zero variance")]
    ConstantTruth,
    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

fn check(y: &[f64], yhat: &[f64]) -> Result<(), MetricError> {
    if y.len() != yhat.len() {
        return Err(MetricError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat)?;
    let y_mean = mean(y.iter().copied());
    let ss_tot: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ConstantTruth);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat)?;
    Ok(mean(y.iter().zip(yhat).map(|(a, b)| (a - b).abs())))
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    check(y, yhat)?;
    Ok(mean(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2))).sqrt())
}

/// Population (divide-by-n) standard deviation of the absolute errors.
pub fn sdae(y: &[f64], yhat: &[f64]) -> Result<f64, MetricError> {
    let m = mae(y, yhat)?;
    Ok(mean(y.iter().zip(yhat).map(|(a, b)| ((a - b).abs() - m).powi(2))).sqrt())
}

/// Percent reduction of `value` relative to `baseline`.
pub fn energy_savings_pct(baseline: f64, value: f64) -> Result<f64, MetricError> {
    if !(baseline > 0.0) {
        return Err(MetricError::NonPositiveBaseline(baseline));
    }
    Ok(100.0 * (baseline - value) / baseline)
}

pub fn quality_drop(baseline_q: f64, q: f64) -> f64 {
    baseline_q - q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
    pub sdae: f64,
    pub n: usize,
}

impl RegressionReport {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self, MetricError> {
        Ok(Self {
            r2: r_squared(y, yhat)?,
            rmse: rmse(y, yhat)?,
            mae: mae(y, yhat)?,
            sdae: sdae(y, yhat)?,
            n: y.len(),
        })
    }
}

/// Outcome of running the selector at one quality-degradation factor.
/// Averages are over test videos; drops and savings are relative to the
/// `rho = 0` selections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub rho: f64,
    pub avg_vmaf: f64,
    pub avg_psnr: f64,
    pub vmaf_drop: f64,
    pub psnr_drop: f64,
    pub enc_savings_pct: f64,
    pub dec_savings_pct: f64,
    /// Savings of measured encode+decode energy.
    pub total_savings_pct: f64,
    /// Savings of the selector's own predicted encode+decode energy.
    pub predicted_savings_pct: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r2_endpoints() {
        let y = [1.0, 4.0, 2.0, 8.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let m = [3.75; 4];
        assert_eq!(r_squared(&y, &m).unwrap(), 0.0);
        assert_eq!(r_squared(&[2.0, 2.0], &[1.0, 2.0]), Err(MetricError::ConstantTruth));
    }

    #[test]
    fn r2_hand_computed() {
        // SS_res = 0.01 + 0 + 0.01, SS_tot = 2
        let r2 = r_squared(&[1.0, 2.0, 3.0], &[1.1, 2.0, 2.9]).unwrap();
        assert!((r2 - 0.99).abs() < 1e-12);
    }

    #[test]
    fn errors_hand_computed() {
        let y = [0.0, 0.0];
        let yhat = [0.0, 2.0];
        assert_eq!(mae(&y, &yhat).unwrap(), 1.0);
        assert!((rmse(&y, &yhat).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(sdae(&y, &yhat).unwrap(), 1.0);
        let z = [0.0; 3];
        assert_eq!(RegressionReport::compute(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().rmse, 0.0);
        assert_eq!((mae(&z, &z).unwrap(), rmse(&z, &z).unwrap(), sdae(&z, &z).unwrap()), (0.0, 0.0, 0.0));
        assert_eq!(mae(&[], &[]), Err(MetricError::EmptyInput));
        assert_eq!(rmse(&[1.0], &[]), Err(MetricError::LengthMismatch(1, 0)));
    }

    #[test]
    fn policy_arithmetic() {
        assert_eq!(energy_savings_pct(8.0, 8.0).unwrap(), 0.0);
        assert_eq!(energy_savings_pct(8.0, 4.0).unwrap(), 50.0);
        assert!(energy_savings_pct(0.0, 1.0).is_err());
        assert_eq!(quality_drop(90.0, 90.0), 0.0);
        assert!((quality_drop(99.74, 98.06) - 1.68).abs() < 1e-9);
        let (a, b, c) = (99.0, 95.5, 90.25);
        assert_eq!(quality_drop(a, b) + quality_drop(b, c), quality_drop(a, c));
    }

    proptest! {
        #[test]
        fn rmse_mae_sdae_identity(e in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let zeros = vec![0.0; e.len()];
            let (m, r, s) = (mae(&zeros, &e).unwrap(), rmse(&zeros, &e).unwrap(), sdae(&zeros, &e).unwrap());
            prop_assert!(r + 1e-12 >= m);
            let lhs = r * r;
            let rhs = m * m + s * s;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300));
        }

        #[test]
        fn r2_affine_invariant(
            y in prop::collection::vec(-100f64..100.0, 3..30),
            noise in prop::collection::vec(-5f64..5.0, 30),
            a in 0.1f64..10.0,
            b in -50f64..50.0,
        ) {
            let yhat: Vec<f64> = y.iter().zip(&noise).map(|(v, n)| v + n).collect();
            let Ok(r) = r_squared(&y, &yhat) else { return Ok(()); };
            let ys: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let yhs: Vec<f64> = yhat.iter().map(|v| a * v + b).collect();
            let r2 = r_squared(&ys, &yhs).unwrap();
            prop_assert!((r - r2).abs() < 1e-8 * r.abs().max(1.0));
        }
    }
}

//! Sources of measurement records.
//!
//! A [`MeasurementProvider`] turns `(video, representation)` into a
//! [`MeasurementRecord`]. Two providers ship with the crate: the
//! [`SyntheticProvider`], a closed-form world used for testing and demos,
//! and the [`ExternalProvider`], which shells out to real encoder and
//! decoder commands and reads their results from a JSON sidecar.

mod external;
mod synth;

pub use external::{external_measure, ExternalProvider, Sidecar};
pub use synth::{synth_generate, SyntheticLaw, SyntheticProvider, SyntheticWorldParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnchorMeasurement, ConfigSpace, Dataset, DatasetError, MeasurementRecord, Representation};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("command exited with status {code:?}: {command}")]
    CommandFailed { command: String, code: Option<i32> },
    #[error("command timed out after {secs:.1} s: {command}")]
    Timeout { command: String, secs: f64 },
    #[error("sidecar {path}: {reason}")]
    ParseFailure { path: String, field: Option<&'static str>, reason: String },
    #[error("command template lacks placeholder `{0}`")]
    MissingPlaceholder(&'static str),
    #[error("negative time {0} s")]
    NegativeTime(f64),
    #[error("invalid synthetic parameter `{0}`")]
    InvalidParams(&'static str),
    #[error("representation {0} is outside the configuration space")]
    OutsideSpace(Representation),
    #[error("measured record failed validation on `{0}`")]
    InvalidRecord(&'static str),
    #[error("cannot fit a power model: {0}")]
    DegenerateFit(&'static str),
    #[error("unknown video `{0}`")]
    UnknownVideo(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can encode, decode and score one representation of a video.
pub trait MeasurementProvider {
    fn measure(&self, video_id: &str, rep: &Representation) -> Result<MeasurementRecord, HarnessError>;
}

impl<P: MeasurementProvider + ?Sized> MeasurementProvider for &P {
    fn measure(&self, video_id: &str, rep: &Representation) -> Result<MeasurementRecord, HarnessError> {
        (**self).measure(video_id, rep)
    }
}

/// Linear time-to-energy proxy: `energy_wh = avg_power * t / 3600 + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub avg_power: f64,
    pub intercept: f64,
}

impl PowerModel {
    pub fn new(avg_power: f64) -> Self {
        Self { avg_power, intercept: 0.0 }
    }
}

pub fn energy_from_time(t: f64, pm: &PowerModel) -> Result<f64, HarnessError> {
    if t < 0.0 || t.is_nan() {
        return Err(HarnessError::NegativeTime(t));
    }
    Ok(pm.avg_power * t / 3600.0 + pm.intercept)
}

/// Least-squares fit of energy (Wh) against time (s).
pub fn fit_power_model(times: &[f64], energies: &[f64]) -> Result<PowerModel, HarnessError> {
    if times.len() != energies.len() || times.len() < 2 {
        return Err(HarnessError::DegenerateFit("need at least two paired samples"));
    }
    let n = times.len() as f64;
    let t_mean = times.iter().sum::<f64>() / n;
    let e_mean = energies.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - t_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::DegenerateFit("all times are equal"));
    }
    let sxy: f64 = times.iter().zip(energies).map(|(t, e)| (t - t_mean) * (e - e_mean)).sum();
    let slope = sxy / sxx;
    Ok(PowerModel { avg_power: slope * 3600.0, intercept: e_mean - slope * t_mean })
}

/// Measures the anchor representation of one video, and nothing else.
pub fn run_anchor<P: MeasurementProvider + ?Sized>(
    provider: &P,
    video_id: &str,
    space: &ConfigSpace,
) -> Result<AnchorMeasurement, HarnessError> {
    let rec = provider.measure(video_id, &space.anchor())?;
    Ok(AnchorMeasurement::from_record(&rec))
}

/// Measures every representation of `space` for each video, in order.
pub fn measure_ladder<P: MeasurementProvider + ?Sized>(
    provider: &P,
    video_ids: &[String],
    space: &ConfigSpace,
) -> Result<Dataset, HarnessError> {
    let mut records = Vec::with_capacity(video_ids.len() * space.len());
    for video in video_ids {
        for rep in space.representations() {
            let rec = provider.measure(video, &rep)?;
            rec.validate().map_err(HarnessError::InvalidRecord)?;
            records.push(rec);
        }
    }
    Ok(Dataset::new(records)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    #[test]
    fn energy_conversion() {
        assert_eq!(energy_from_time(0.0, &PowerModel::new(50.0)).unwrap(), 0.0);
        assert_eq!(energy_from_time(3600.0, &PowerModel::new(50.0)).unwrap(), 50.0);
        assert!(matches!(energy_from_time(-1.0, &PowerModel::new(1.0)), Err(HarnessError::NegativeTime(_))));
    }

    #[test]
    fn energy_is_linear_in_time() {
        let pm = PowerModel { avg_power: 73.0, intercept: 0.4 };
        for &(t, a) in &[(10.0, 3.0), (2.5, 0.5), (100.0, 7.25)] {
            let lhs = energy_from_time(a * t, &pm).unwrap() - pm.intercept;
            let rhs = a * (energy_from_time(t, &pm).unwrap() - pm.intercept);
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn power_fit_recovers_exact_line() {
        let t = [1.0, 5.0, 9.0, 30.0];
        let e: Vec<f64> = t.iter().map(|t| 120.0 * t / 3600.0 + 0.25).collect();
        let pm = fit_power_model(&t, &e).unwrap();
        assert!((pm.avg_power - 120.0).abs() < 1e-9);
        assert!((pm.intercept - 0.25).abs() < 1e-12);
        assert!(fit_power_model(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    struct Counting {
        inner: SyntheticProvider,
        calls: RefCell<Vec<Representation>>,
    }

    impl MeasurementProvider for Counting {
        fn measure(&self, video_id: &str, rep: &Representation) -> Result<MeasurementRecord, HarnessError> {
            self.calls.borrow_mut().push(*rep);
            self.inner.measure(video_id, rep)
        }
    }

    #[test]
    fn run_anchor_touches_only_the_anchor() {
        let space = ConfigSpace::default_ladder();
        let params = SyntheticWorldParams { noise_sd: 0.0, ..Default::default() };
        let provider = Counting { inner: SyntheticProvider::new(params.clone(), space.clone()), calls: RefCell::new(vec![]) };
        let anchor = run_anchor(&provider, "v007", &space).unwrap();
        assert_eq!(*provider.calls.borrow(), vec![Representation::new(360, 47)]);
        let c = SyntheticLaw::new(&params, &space).complexity("v007");
        assert!((anchor.enc_time - params.base_enc_time * c).abs() < 1e-12);
    }

    #[test]
    fn ladder_measurement_matches_synth_generate() {
        let space = ConfigSpace::new(&[360, 720], &[27, 47]).unwrap();
        let params = SyntheticWorldParams { n_videos: 3, ..Default::default() };
        let provider = SyntheticProvider::new(params.clone(), space.clone());
        let ds = measure_ladder(&provider, &params.video_ids(), &space).unwrap();
        assert_eq!(ds, synth_generate(&params, &space).unwrap());
    }
}

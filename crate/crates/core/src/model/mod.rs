//! Domain types for the measurement dataset: resolutions, representations,
//! the configuration space, measured records and the dataset container.

mod io;

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset, CSV_HEADER};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing or wrong header (expected `{expected}`)")]
    MissingHeader { expected: &'static str },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate record for video `{video_id}` at {height}p/QP{qp}")]
    DuplicateKey { video_id: String, height: u32, qp: u8 },
    #[error("invariant violated for field `{field}`{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    InvariantViolation { field: &'static str, line: Option<usize> },
    #[error("need at least 2 distinct videos to split, found {found}")]
    TooFewVideos { found: usize },
    #[error("train fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error("no anchor record ({rep}) for video `{video_id}`")]
    MissingAnchorRecord { video_id: String, rep: Representation },
    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frame size of one rung of the ladder. Width follows from height at 16:9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Resolution {
    pub height: u32,
    pub width: u32,
}

impl Resolution {
    /// 16:9 frame of the given height; the width is rounded to the nearest
    /// even number of pixels.
    pub fn from_height(height: u32) -> Self {
        let width = 2 * ((height as f64 * 8.0 / 9.0).round() as u32);
        Self { height, width: width.max(2) }
    }

    pub fn pixels(&self) -> u64 {
        self.height as u64 * self.width as u64
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}p", self.height)
    }
}

pub const MAX_QP: u8 = 63;

/// One encoded variant of a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Representation {
    pub resolution: Resolution,
    pub qp: u8,
}

impl Representation {
    pub fn new(height: u32, qp: u8) -> Self {
        Self { resolution: Resolution::from_height(height), qp }
    }

    pub fn height(&self) -> u32 {
        self.resolution.height
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/QP{}", self.resolution, self.qp)
    }
}

/// The set of resolutions and QPs a ladder may use. Both axes are kept
/// strictly ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct ConfigSpace {
    resolutions: Vec<Resolution>,
    qps: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    heights: Vec<u32>,
    qps: Vec<u8>,
}

impl TryFrom<RawSpace> for ConfigSpace {
    type Error = DatasetError;
    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        ConfigSpace::new(&raw.heights, &raw.qps)
    }
}

impl From<ConfigSpace> for RawSpace {
    fn from(space: ConfigSpace) -> Self {
        RawSpace { heights: space.heights(), qps: space.qps }
    }
}

impl ConfigSpace {
    pub fn new(heights: &[u32], qps: &[u8]) -> Result<Self, DatasetError> {
        if heights.is_empty() || qps.is_empty() {
            return Err(DatasetError::InvalidSpace("empty axis".into()));
        }
        if heights.windows(2).any(|w| w[0] >= w[1]) || qps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::InvalidSpace("axes must be strictly ascending".into()));
        }
        if heights[0] == 0 {
            return Err(DatasetError::InvalidSpace("height must be >= 1".into()));
        }
        if *qps.last().unwrap() > MAX_QP {
            return Err(DatasetError::InvalidSpace(format!("qp must be <= {MAX_QP}")));
        }
        Ok(Self {
            resolutions: heights.iter().map(|&h| Resolution::from_height(h)).collect(),
            qps: qps.to_vec(),
        })
    }

    /// 360p..2160p by QP 17..47, the 42-rung ladder used throughout.
    pub fn default_ladder() -> Self {
        Self::new(&[360, 540, 720, 1080, 1440, 2160], &[17, 22, 27, 32, 37, 42, 47]).unwrap()
    }

    pub fn resolutions(&self) -> &[Resolution] {
        &self.resolutions
    }

    pub fn heights(&self) -> Vec<u32> {
        self.resolutions.iter().map(|r| r.height).collect()
    }

    pub fn qps(&self) -> &[u8] {
        &self.qps
    }

    pub fn min_resolution(&self) -> Resolution {
        self.resolutions[0]
    }

    pub fn max_resolution(&self) -> Resolution {
        *self.resolutions.last().unwrap()
    }

    pub fn min_qp(&self) -> u8 {
        self.qps[0]
    }

    pub fn max_qp(&self) -> u8 {
        *self.qps.last().unwrap()
    }

    /// Lowest resolution at the highest QP: the cheapest encode.
    pub fn anchor(&self) -> Representation {
        Representation { resolution: self.min_resolution(), qp: self.max_qp() }
    }

    /// All representations, resolution-major.
    pub fn representations(&self) -> impl Iterator<Item = Representation> + '_ {
        self.resolutions
            .iter()
            .flat_map(move |&resolution| self.qps.iter().map(move |&qp| Representation { resolution, qp }))
    }

    pub fn len(&self) -> usize {
        self.resolutions.len() * self.qps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, rep: &Representation) -> bool {
        self.resolutions.iter().any(|r| r.height == rep.height()) && self.qps.contains(&rep.qp)
    }
}

/// Which perceptual score drives quality prediction and selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QualityMetric {
    #[default]
    Vmaf,
    Psnr,
}

impl std::str::FromStr for QualityMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vmaf" => Ok(Self::Vmaf),
            "psnr" => Ok(Self::Psnr),
            other => Err(format!("unknown quality metric `{other}` (expected vmaf or psnr)")),
        }
    }
}

impl fmt::Display for QualityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Vmaf => "vmaf",
            Self::Psnr => "psnr",
        })
    }
}

/// One (video, resolution, QP) observation. Times in seconds, energies in
/// watt-hours, bitrate in kbit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub video_id: String,
    pub rep: Representation,
    pub enc_time: f64,
    pub enc_energy: f64,
    pub dec_time: f64,
    pub dec_energy: f64,
    pub bitrate: f64,
    pub psnr: f64,
    pub vmaf: f64,
}

impl MeasurementRecord {
    /// Checks field bounds, returning the first offending field.
    pub fn validate(&self) -> Result<(), &'static str> {
        let non_negative = [
            ("enc_time_s", self.enc_time),
            ("enc_energy_wh", self.enc_energy),
            ("dec_time_s", self.dec_time),
            ("dec_energy_wh", self.dec_energy),
            ("bitrate_kbps", self.bitrate),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(name);
            }
        }
        if !(self.psnr.is_finite() && self.psnr > 0.0) {
            return Err("psnr_db");
        }
        if !(self.vmaf.is_finite() && (0.0..=100.0).contains(&self.vmaf)) {
            return Err("vmaf");
        }
        if self.rep.qp > MAX_QP {
            return Err("qp");
        }
        if self.rep.resolution.height == 0 {
            return Err("height");
        }
        if self.video_id.is_empty() || self.video_id.contains([',', '"', '\n', '\r']) {
            return Err("video_id");
        }
        Ok(())
    }

    pub fn quality(&self, metric: QualityMetric) -> f64 {
        match metric {
            QualityMetric::Vmaf => self.vmaf,
            QualityMetric::Psnr => self.psnr,
        }
    }
}

/// What the anchor encode tells us about a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMeasurement {
    pub video_id: String,
    pub enc_time: f64,
    pub dec_time: f64,
    pub psnr: f64,
    pub vmaf: f64,
}

impl AnchorMeasurement {
    pub fn from_record(rec: &MeasurementRecord) -> Self {
        Self {
            video_id: rec.video_id.clone(),
            enc_time: rec.enc_time,
            dec_time: rec.dec_time,
            psnr: rec.psnr,
            vmaf: rec.vmaf,
        }
    }

    pub fn quality(&self, metric: QualityMetric) -> f64 {
        match metric {
            QualityMetric::Vmaf => self.vmaf,
            QualityMetric::Psnr => self.psnr,
        }
    }
}

/// Immutable collection of measurement records, kept sorted by
/// `(video_id, height, qp)` with unique keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<MeasurementRecord>,
    schema_version: u32,
}

fn record_key(r: &MeasurementRecord) -> (&str, u32, u8) {
    (r.video_id.as_str(), r.rep.resolution.height, r.rep.qp)
}

impl Dataset {
    pub fn new(mut records: Vec<MeasurementRecord>) -> Result<Self, DatasetError> {
        for r in &records {
            r.validate().map_err(|field| DatasetError::InvariantViolation { field, line: None })?;
        }
        records.sort_by(|a, b| record_key(a).cmp(&record_key(b)));
        if let Some(w) = records.windows(2).find(|w| record_key(&w[0]) == record_key(&w[1])) {
            return Err(DatasetError::DuplicateKey {
                video_id: w[0].video_id.clone(),
                height: w[0].rep.height(),
                qp: w[0].rep.qp,
            });
        }
        Ok(Self { records, schema_version: SCHEMA_VERSION })
    }

    pub fn empty() -> Self {
        Self { records: Vec::new(), schema_version: SCHEMA_VERSION }
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct video ids in ascending order.
    pub fn video_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.records {
            if ids.last() != Some(&r.video_id) {
                ids.push(r.video_id.clone());
            }
        }
        ids
    }

    pub fn records_for<'a>(&'a self, video_id: &'a str) -> impl Iterator<Item = &'a MeasurementRecord> + 'a {
        let start = self.records.partition_point(|r| r.video_id.as_str() < video_id);
        self.records[start..].iter().take_while(move |r| r.video_id == video_id)
    }

    pub fn get(&self, video_id: &str, rep: &Representation) -> Option<&MeasurementRecord> {
        let key = (video_id, rep.resolution.height, rep.qp);
        self.records
            .binary_search_by(|r| record_key(r).cmp(&key))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Keeps only the records of the given videos.
    pub fn subset(&self, videos: &BTreeSet<String>) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| videos.contains(&r.video_id)).cloned().collect(),
            schema_version: self.schema_version,
        }
    }

    /// Anchor measurement of one video: its `(min resolution, max QP)` record.
    pub fn anchor_of(&self, video_id: &str, space: &ConfigSpace) -> Result<AnchorMeasurement, DatasetError> {
        let rep = space.anchor();
        self.get(video_id, &rep)
            .map(AnchorMeasurement::from_record)
            .ok_or_else(|| DatasetError::MissingAnchorRecord { video_id: video_id.to_string(), rep })
    }

    /// Video-level train/test split. Ids are shuffled with a seeded
    /// Fisher-Yates pass; the first `floor(n * train_fraction)` go to train.
    pub fn split_by_video(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::BadFraction(train_fraction));
        }
        let mut ids = self.video_ids();
        if ids.len() < 2 {
            return Err(DatasetError::TooFewVideos { found: ids.len() });
        }
        seed::shuffle(&mut seed::rng_from_seed(seed), &mut ids);
        let n_train = (ids.len() as f64 * train_fraction).floor() as usize;
        let test_ids: BTreeSet<String> = ids.split_off(n_train).into_iter().collect();
        let train_ids: BTreeSet<String> = ids.into_iter().collect();
        Ok((self.subset(&train_ids), self.subset(&test_ids)))
    }
}

pub fn anchor_of(ds: &Dataset, video_id: &str, space: &ConfigSpace) -> Result<AnchorMeasurement, DatasetError> {
    ds.anchor_of(video_id, space)
}

pub fn split_by_video(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    ds.split_by_video(train_fraction, seed)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn record(video: &str, height: u32, qp: u8, t: f64) -> MeasurementRecord {
        MeasurementRecord {
            video_id: video.to_string(),
            rep: Representation::new(height, qp),
            enc_time: t,
            enc_energy: t * 0.02,
            dec_time: t / 10.0,
            dec_energy: t * 0.001,
            bitrate: 1000.0,
            psnr: 40.0,
            vmaf: 90.0,
        }
    }

    pub fn full_dataset(videos: usize, space: &ConfigSpace) -> Dataset {
        let mut out = Vec::new();
        for v in 0..videos {
            for rep in space.representations() {
                out.push(record(&format!("v{v:03}"), rep.height(), rep.qp, 1.0 + v as f64));
            }
        }
        Dataset::new(out).unwrap()
    }
}

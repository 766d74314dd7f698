//! Closed-form synthetic measurement world.
//!
//! Every video `v` gets a content complexity `c_v = 0.5 + 1.5 u`, with `u`
//! uniform in `[0, 1)` drawn from a stream keyed by `(seed, v)`. For a
//! representation `(r, qp)` in space `S`, with `P(r)` the pixel count,
//! `lo = P(r) / P(r_min)` and `hi = P(r) / P(r_max)`:
//!
//! ```text
//! enc_time   = base_enc_time * c_v * lo^pixel_exponent     * exp(-qp_decay * (qp - qp_max)) * m_enc
//! dec_time   = base_dec_time * c_v * lo^dec_pixel_exponent * exp(-qp_decay * (qp - qp_max)) * m_dec
//! enc_energy = power_enc * enc_time / 3600
//! dec_energy = power_dec * dec_time / 3600
//! vmaf       = clamp(quality_ceiling * (1 - 0.9 (qp/63)^2) * (1 - 0.25 (1 - hi)), 0, 100)
//! psnr       = max(58 - 0.45 qp - 1.5 log2(1/hi) - 3 ln(c_v), 1)
//! bitrate    = 20000 * c_v * hi^0.75 * exp(-0.11 (qp - qp_min))
//! ```
//!
//! `m = max(1 + e, 0.05)` with `e ~ Normal(0, noise_sd)` drawn by Box-Muller
//! from a stream keyed by `(seed, v, height, qp)`; the first draw feeds the
//! encoder, the second the decoder. Quality and bitrate are noise-free.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{HarnessError, MeasurementProvider};
use crate::model::{ConfigSpace, Dataset, MeasurementRecord, Representation};
use crate::seed;

pub const PSNR_BASE: f64 = 58.0;
pub const PSNR_PER_QP: f64 = 0.45;
pub const PSNR_PER_OCTAVE: f64 = 1.5;
pub const PSNR_PER_LOG_COMPLEXITY: f64 = 3.0;
pub const BITRATE_SCALE_KBPS: f64 = 20_000.0;
pub const BITRATE_PIXEL_EXPONENT: f64 = 0.75;
pub const BITRATE_QP_DECAY: f64 = 0.11;
const MIN_NOISE_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticWorldParams {
    pub n_videos: usize,
    /// Anchor encode time of a `c_v = 1` video, seconds.
    pub base_enc_time: f64,
    pub base_dec_time: f64,
    pub pixel_exponent: f64,
    pub dec_pixel_exponent: f64,
    pub qp_decay: f64,
    /// Watts.
    pub power_enc: f64,
    pub power_dec: f64,
    pub quality_ceiling: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticWorldParams {
    fn default() -> Self {
        Self {
            n_videos: 100,
            base_enc_time: 9.5,
            base_dec_time: 0.8,
            pixel_exponent: 0.6,
            dec_pixel_exponent: 0.45,
            qp_decay: 0.1,
            power_enc: 100.0,
            power_dec: 30.0,
            quality_ceiling: 100.0,
            noise_sd: 0.05,
            seed: 42,
        }
    }
}

impl SyntheticWorldParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = [
            ("base_enc_time", self.base_enc_time),
            ("base_dec_time", self.base_dec_time),
            ("pixel_exponent", self.pixel_exponent),
            ("dec_pixel_exponent", self.dec_pixel_exponent),
            ("qp_decay", self.qp_decay),
            ("power_enc", self.power_enc),
            ("power_dec", self.power_dec),
            ("quality_ceiling", self.quality_ceiling),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::InvalidParams(name));
            }
        }
        if self.n_videos == 0 {
            return Err(HarnessError::InvalidParams("n_videos"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd < 0.2) {
            return Err(HarnessError::InvalidParams("noise_sd"));
        }
        Ok(())
    }

    /// Ids `v000`, `v001`, ...; zero-padded so lexical order is numeric order.
    pub fn video_ids(&self) -> Vec<String> {
        let width = (self.n_videos.saturating_sub(1)).to_string().len().max(3);
        (0..self.n_videos).map(|i| format!("v{i:0width$}")).collect()
    }
}

/// The deterministic part of the world for one configuration space.
#[derive(Debug, Clone)]
pub struct SyntheticLaw {
    params: SyntheticWorldParams,
    min_pixels: f64,
    max_pixels: f64,
    min_qp: f64,
    max_qp: f64,
}

impl SyntheticLaw {
    pub fn new(params: &SyntheticWorldParams, space: &ConfigSpace) -> Self {
        Self {
            params: params.clone(),
            min_pixels: space.min_resolution().pixels() as f64,
            max_pixels: space.max_resolution().pixels() as f64,
            min_qp: space.min_qp() as f64,
            max_qp: space.max_qp() as f64,
        }
    }

    pub fn complexity(&self, video_id: &str) -> f64 {
        let mut rng = seed::rng_from_seed(seed::derive_seed(self.params.seed, &[b"complexity", video_id.as_bytes()]));
        0.5 + 1.5 * seed::unit_f64(&mut rng)
    }

    /// Multiplicative noise factors `(encode, decode)`.
    pub fn noise(&self, video_id: &str, rep: &Representation) -> (f64, f64) {
        if self.params.noise_sd == 0.0 {
            return (1.0, 1.0);
        }
        let key = seed::derive_seed(
            self.params.seed,
            &[b"noise", video_id.as_bytes(), &rep.height().to_le_bytes(), &[rep.qp]],
        );
        let mut rng = seed::rng_from_seed(key);
        let (a, b) = box_muller(&mut rng);
        let sd = self.params.noise_sd;
        ((1.0 + sd * a).max(MIN_NOISE_FACTOR), (1.0 + sd * b).max(MIN_NOISE_FACTOR))
    }

    pub fn record(&self, video_id: &str, rep: &Representation) -> MeasurementRecord {
        let p = &self.params;
        let c = self.complexity(video_id);
        let (m_enc, m_dec) = self.noise(video_id, rep);
        let pixels = rep.resolution.pixels() as f64;
        let lo = pixels / self.min_pixels;
        let hi = pixels / self.max_pixels;
        let qp = rep.qp as f64;
        let qp_term = (-p.qp_decay * (qp - self.max_qp)).exp();

        let enc_time = p.base_enc_time * c * lo.powf(p.pixel_exponent) * qp_term * m_enc;
        let dec_time = p.base_dec_time * c * lo.powf(p.dec_pixel_exponent) * qp_term * m_dec;
        let vmaf = (p.quality_ceiling * (1.0 - 0.9 * (qp / 63.0).powi(2)) * (1.0 - 0.25 * (1.0 - hi))).clamp(0.0, 100.0);
        let psnr = (PSNR_BASE - PSNR_PER_QP * qp - PSNR_PER_OCTAVE * (1.0 / hi).log2() - PSNR_PER_LOG_COMPLEXITY * c.ln())
            .max(1.0);
        let bitrate = BITRATE_SCALE_KBPS * c * hi.powf(BITRATE_PIXEL_EXPONENT) * (-BITRATE_QP_DECAY * (qp - self.min_qp)).exp();

        MeasurementRecord {
            video_id: video_id.to_string(),
            rep: *rep,
            enc_time,
            enc_energy: p.power_enc * enc_time / 3600.0,
            dec_time,
            dec_energy: p.power_dec * dec_time / 3600.0,
            bitrate,
            psnr,
            vmaf,
        }
    }
}

fn box_muller(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = 1.0 - seed::unit_f64(rng);
    let u2 = seed::unit_f64(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Pure, reentrant provider backed by [`SyntheticLaw`].
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    law: SyntheticLaw,
    space: ConfigSpace,
}

impl SyntheticProvider {
    pub fn new(params: SyntheticWorldParams, space: ConfigSpace) -> Self {
        Self { law: SyntheticLaw::new(&params, &space), space }
    }

    pub fn law(&self) -> &SyntheticLaw {
        &self.law
    }
}

impl MeasurementProvider for SyntheticProvider {
    fn measure(&self, video_id: &str, rep: &Representation) -> Result<MeasurementRecord, HarnessError> {
        if !self.space.contains(rep) {
            return Err(HarnessError::OutsideSpace(*rep));
        }
        Ok(self.law.record(video_id, rep))
    }
}

/// Full ladder for `params.n_videos` synthetic videos.
pub fn synth_generate(params: &SyntheticWorldParams, space: &ConfigSpace) -> Result<Dataset, HarnessError> {
    params.validate()?;
    let provider = SyntheticProvider::new(params.clone(), space.clone());
    let mut records = Vec::with_capacity(params.n_videos * space.len());
    for id in params.video_ids() {
        for rep in space.representations() {
            let rec = provider.measure(&id, &rep)?;
            rec.validate().map_err(HarnessError::InvalidRecord)?;
            records.push(rec);
        }
    }
    Dataset::new(records).map_err(|e| match e {
        crate::model::DatasetError::InvariantViolation { field, .. } => HarnessError::InvalidRecord(field),
        other => HarnessError::Io(std::io::Error::other(other.to_string())),
    })
}

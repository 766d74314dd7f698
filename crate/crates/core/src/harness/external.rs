//! Adapter for real encoder/decoder binaries.
//!
//! Commands are `sh -c` templates. The placeholders `{input}`, `{width}`,
//! `{height}`, `{qp}`, `{output}` and `{sidecar}` are substituted (paths are
//! shell-quoted). The encode command runs first, then the decode command;
//! each is wall-clock timed. Afterwards the sidecar JSON written by the
//! commands is parsed for bitrate, quality and optional energy readings.
//! Missing energies are derived from the measured times through the
//! provider's [`PowerModel`]s.
//!
//! Wall-clock timing is only meaningful when nothing else is being measured
//! on the host, so every measurement holds a process-wide token.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{energy_from_time, HarnessError, MeasurementProvider, PowerModel};
use crate::model::{MeasurementRecord, Representation};

static MEASUREMENT_TOKEN: Mutex<()> = Mutex::new(());

const ENCODE_PLACEHOLDERS: [&str; 5] = ["{input}", "{width}", "{height}", "{qp}", "{output}"];

/// Values the commands report through `{sidecar}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Sidecar {
    /// Encoder-reported times are accepted but the wall clock is authoritative.
    pub enc_time_s: Option<f64>,
    pub dec_time_s: Option<f64>,
    pub enc_energy_wh: Option<f64>,
    pub dec_energy_wh: Option<f64>,
    pub bitrate_kbps: Option<f64>,
    pub psnr_db: Option<f64>,
    pub vmaf: Option<f64>,
}

impl Sidecar {
    pub fn parse(text: &str, path: &Path) -> Result<Self, HarnessError> {
        let sidecar: Sidecar = serde_json::from_str(text).map_err(|e| HarnessError::ParseFailure {
            path: path.display().to_string(),
            field: None,
            reason: e.to_string(),
        })?;
        for (field, value) in [
            ("bitrate_kbps", sidecar.bitrate_kbps),
            ("psnr_db", sidecar.psnr_db),
            ("vmaf", sidecar.vmaf),
        ] {
            if value.is_none() {
                return Err(HarnessError::ParseFailure {
                    path: path.display().to_string(),
                    field: Some(field),
                    reason: format!("missing required field `{field}`"),
                });
            }
        }
        Ok(sidecar)
    }
}

#[derive(Debug, Clone)]
pub struct ExternalProvider {
    pub encode_template: String,
    pub decode_template: String,
    /// Where encoded bitstreams and sidecars are written.
    pub work_dir: PathBuf,
    pub timeout: Duration,
    pub enc_power: PowerModel,
    pub dec_power: PowerModel,
    /// Source file per video id. Ids not listed are treated as paths.
    pub videos: BTreeMap<String, PathBuf>,
}

impl ExternalProvider {
    pub fn new(encode_template: impl Into<String>, decode_template: impl Into<String>, work_dir: impl Into<PathBuf>) -> Self {
        Self {
            encode_template: encode_template.into(),
            decode_template: decode_template.into(),
            work_dir: work_dir.into(),
            timeout: Duration::from_secs(3600),
            enc_power: PowerModel::new(100.0),
            dec_power: PowerModel::new(30.0),
            videos: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for p in ENCODE_PLACEHOLDERS {
            if !self.encode_template.contains(p) {
                return Err(HarnessError::MissingPlaceholder(p));
            }
        }
        if !self.decode_template.contains("{output}") {
            return Err(HarnessError::MissingPlaceholder("{output}"));
        }
        Ok(())
    }

    fn video_path(&self, video_id: &str) -> PathBuf {
        self.videos.get(video_id).cloned().unwrap_or_else(|| PathBuf::from(video_id))
    }

    /// Runs encode + decode for one representation of the file at `video_path`.
    pub fn measure_path(&self, video_id: &str, video_path: &Path, rep: &Representation) -> Result<MeasurementRecord, HarnessError> {
        self.validate()?;
        std::fs::create_dir_all(&self.work_dir)?;
        let stem = sanitize(video_id);
        let output = self.work_dir.join(format!("{stem}_{}p_qp{}.bin", rep.height(), rep.qp));
        let sidecar_path = self.work_dir.join(format!("{stem}_{}p_qp{}.json", rep.height(), rep.qp));
        if sidecar_path.exists() {
            std::fs::remove_file(&sidecar_path)?;
        }
        let render = |template: &str| {
            template
                .replace("{input}", &shell_quote(video_path))
                .replace("{width}", &rep.resolution.width.to_string())
                .replace("{height}", &rep.height().to_string())
                .replace("{qp}", &rep.qp.to_string())
                .replace("{output}", &shell_quote(&output))
                .replace("{sidecar}", &shell_quote(&sidecar_path))
        };
        let encode = render(&self.encode_template);
        let decode = render(&self.decode_template);

        let (enc_time, dec_time) = {
            let _token = MEASUREMENT_TOKEN.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
            let enc = run_timed(&encode, self.timeout)?;
            let dec = run_timed(&decode, self.timeout)?;
            (enc, dec)
        };

        let text = std::fs::read_to_string(&sidecar_path).map_err(|e| HarnessError::ParseFailure {
            path: sidecar_path.display().to_string(),
            field: None,
            reason: e.to_string(),
        })?;
        let sidecar = Sidecar::parse(&text, &sidecar_path)?;
        let enc_energy = match sidecar.enc_energy_wh {
            Some(e) => e,
            None => energy_from_time(enc_time, &self.enc_power)?,
        };
        let dec_energy = match sidecar.dec_energy_wh {
            Some(e) => e,
            None => energy_from_time(dec_time, &self.dec_power)?,
        };
        let rec = MeasurementRecord {
            video_id: video_id.to_string(),
            rep: *rep,
            enc_time,
            enc_energy,
            dec_time,
            dec_energy,
            bitrate: sidecar.bitrate_kbps.unwrap_or_default(),
            psnr: sidecar.psnr_db.unwrap_or_default(),
            vmaf: sidecar.vmaf.unwrap_or_default(),
        };
        rec.validate().map_err(HarnessError::InvalidRecord)?;
        Ok(rec)
    }
}

impl MeasurementProvider for ExternalProvider {
    fn measure(&self, video_id: &str, rep: &Representation) -> Result<MeasurementRecord, HarnessError> {
        let path = self.video_path(video_id);
        self.measure_path(video_id, &path, rep)
    }
}

/// One-shot measurement with a provider whose encode and decode templates
/// are given; the video id is the file stem of `video_path`.
pub fn external_measure(provider: &ExternalProvider, video_path: &Path, rep: &Representation) -> Result<MeasurementRecord, HarnessError> {
    let id = video_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| HarnessError::UnknownVideo(video_path.display().to_string()))?;
    provider.measure_path(&id, video_path, rep)
}

fn run_timed(command: &str, timeout: Duration) -> Result<f64, HarnessError> {
    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::inherit())
        .spawn()?;
    loop {
        if let Some(status) = child.try_wait()? {
            let elapsed = start.elapsed().as_secs_f64();
            if !status.success() {
                return Err(HarnessError::CommandFailed { command: command.to_string(), code: status.code() });
            }
            return Ok(elapsed);
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(HarnessError::Timeout { command: command.to_string(), secs: timeout.as_secs_f64() });
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const WRITE_SIDECAR: &str =
        r#"printf '{"bitrate_kbps": 1200.5, "psnr_db": 41.25, "vmaf": 93.5}' > {sidecar}"#;

    fn provider(dir: &Path, encode: &str, decode: &str) -> ExternalProvider {
        ExternalProvider::new(encode, decode, dir)
    }

    fn encode_cmd(body: &str) -> String {
        format!("true {{input}} {{width}} {{height}} {{qp}} {{output}}; {body}")
    }

    #[test]
    fn sleeping_stub_is_timed() {
        let dir = tempfile::tempdir().unwrap();
        let p = provider(dir.path(), &encode_cmd("sleep 1"), &format!("true {{output}}; {WRITE_SIDECAR}"));
        let rec = external_measure(&p, Path::new("/videos/clip01.y4m"), &Representation::new(720, 32)).unwrap();
        assert!((1.0..=1.5).contains(&rec.enc_time), "enc_time {}", rec.enc_time);
        assert_eq!(rec.video_id, "clip01");
        assert_eq!(rec.vmaf, 93.5);
        // energy filled from time via the power model
        assert!((rec.enc_energy - 100.0 * rec.enc_time / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn sidecar_energy_takes_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let sidecar = r#"printf '{"enc_energy_wh": 2.5, "bitrate_kbps": 1, "psnr_db": 30, "vmaf": 50}' > {sidecar}"#;
        let p = provider(dir.path(), &encode_cmd(sidecar), "true {output}");
        let rec = external_measure(&p, Path::new("a.yuv"), &Representation::new(360, 47)).unwrap();
        assert_eq!(rec.enc_energy, 2.5);
        assert!((rec.dec_energy - 30.0 * rec.dec_time / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn placeholders_are_substituted() {
        let dir = tempfile::tempdir().unwrap();
        let check = r#"test {width} = 1280 && test {height} = 720 && test {qp} = 27 && test {input} = '/in put.y4m'"#;
        let p = provider(dir.path(), &format!("true {{output}}; {check}"), &format!("true {{output}}; {WRITE_SIDECAR}"));
        external_measure(&p, Path::new("/in put.y4m"), &Representation::new(720, 27)).unwrap();
    }

    #[test]
    fn non_zero_exit_is_command_failed() {
        let dir = tempfile::tempdir().unwrap();
        let p = provider(dir.path(), &encode_cmd("exit 3"), "true {output}");
        match external_measure(&p, Path::new("a.yuv"), &Representation::new(360, 47)) {
            Err(HarnessError::CommandFailed { code, .. }) => assert_eq!(code, Some(3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_vmaf_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"printf '{"bitrate_kbps": 1, "psnr_db": 30}' > {sidecar}"#;
        let p = provider(dir.path(), &encode_cmd(body), "true {output}");
        match external_measure(&p, Path::new("a.yuv"), &Representation::new(360, 47)) {
            Err(HarnessError::ParseFailure { field, .. }) => assert_eq!(field, Some("vmaf")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timeout_kills_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = provider(dir.path(), &encode_cmd("sleep 5"), "true {output}");
        p.timeout = Duration::from_millis(200);
        let start = Instant::now();
        assert!(matches!(
            external_measure(&p, Path::new("a.yuv"), &Representation::new(360, 47)),
            Err(HarnessError::Timeout { .. })
        ));
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn template_must_carry_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let p = provider(dir.path(), "encode {input} {output}", "true {output}");
        assert!(matches!(p.validate(), Err(HarnessError::MissingPlaceholder("{width}"))));
    }
}

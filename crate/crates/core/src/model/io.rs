use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, DatasetError, MeasurementRecord, Representation};

pub const CSV_HEADER: &str =
    "video_id,height,qp,enc_time_s,enc_energy_wh,dec_time_s,dec_energy_wh,bitrate_kbps,psnr_db,vmaf";

const N_COLUMNS: usize = 10;

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text)
}

/// Parses the canonical CSV text. The first line must equal [`CSV_HEADER`].
pub fn parse_dataset(text: &str) -> Result<Dataset, DatasetError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == CSV_HEADER => {}
        _ => return Err(DatasetError::MissingHeader { expected: CSV_HEADER }),
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DatasetError::MalformedRow { line, reason: e.to_string() })?;
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        let rec = parse_row(&row, line)?;
        rec.validate().map_err(|field| DatasetError::InvariantViolation { field, line: Some(line) })?;
        records.push(rec);
    }
    Dataset::new(records)
}

fn parse_row(row: &csv::StringRecord, line: usize) -> Result<MeasurementRecord, DatasetError> {
    if row.len() != N_COLUMNS {
        return Err(DatasetError::MalformedRow {
            line,
            reason: format!("expected {N_COLUMNS} fields, found {}", row.len()),
        });
    }
    let malformed = |col: &str, raw: &str| DatasetError::MalformedRow {
        line,
        reason: format!("cannot parse {col} from `{raw}`"),
    };
    let float = |idx: usize, col: &str| -> Result<f64, DatasetError> {
        row[idx].trim().parse::<f64>().map_err(|_| malformed(col, &row[idx]))
    };
    let height: u32 = row[1].trim().parse().map_err(|_| malformed("height", &row[1]))?;
    let qp: u8 = row[2].trim().parse().map_err(|_| malformed("qp", &row[2]))?;
    Ok(MeasurementRecord {
        video_id: row[0].to_string(),
        rep: Representation::new(height, qp),
        enc_time: float(3, "enc_time_s")?,
        enc_energy: float(4, "enc_energy_wh")?,
        dec_time: float(5, "dec_time_s")?,
        dec_energy: float(6, "dec_energy_wh")?,
        bitrate: float(7, "bitrate_kbps")?,
        psnr: float(8, "psnr_db")?,
        vmaf: float(9, "vmaf")?,
    })
}

/// Writes the canonical CSV. Floats use the shortest representation that
/// parses back to the same value, so equal datasets give equal bytes.
pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in ds.records() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.video_id,
            r.rep.resolution.height,
            r.rep.qp,
            r.enc_time,
            r.enc_energy,
            r.dec_time,
            r.dec_energy,
            r.bitrate,
            r.psnr,
            r.vmaf
        )?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

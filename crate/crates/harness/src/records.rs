//! CSV records. The column order is the field order and is relied upon by the
//! plotting scripts; every file starts with a header row.

use std::fs::OpenOptions;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Bit error rate at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub receiver: String,
    /// Cooperation protocol, or `none`.
    pub coop: String,
    pub ebn0_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    /// 95 % Wilson interval.
    pub ber_ci_low: f64,
    pub ber_ci_high: f64,
    pub wall_time_s: f64,
}

impl BerRecord {
    pub fn new(receiver: &str, coop: &str, ebn0_db: f64, trials: u64, bit_errors: u64, bits: u64, wall_time_s: f64) -> Self {
        let (lo, hi) = wilson_interval(bit_errors, bits, 1.96);
        BerRecord {
            receiver: receiver.to_owned(),
            coop: coop.to_owned(),
            ebn0_db,
            trials,
            bit_errors,
            bits,
            ber: if bits == 0 { 0.0 } else { bit_errors as f64 / bits as f64 },
            ber_ci_low: lo,
            ber_ci_high: hi,
            wall_time_s,
        }
    }

    /// Identifies the operating point for resuming.
    pub fn key(&self) -> (String, String, u64) {
        (self.receiver.clone(), self.coop.clone(), self.ebn0_db.to_bits())
    }
}

/// Bit error rate after each outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub receiver: String,
    pub coop: String,
    pub ebn0_db: f64,
    pub iteration: usize,
    pub trials: u64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
}

/// Disagreement between users after a number of cooperation rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub protocol: String,
    /// Empty for noiseless links.
    pub link_snr_db: Option<f64>,
    pub round: usize,
    pub mse: f64,
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Appends records, writing the header only to a new or empty file.
pub fn append_csv<T: Serialize>(path: &Path, records: &[T]) -> csv::Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces the file with the given records.
pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads every record; a missing file reads as empty.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> csv::Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    csv::Reader::from_path(path)?.deserialize().collect()
}

//! Strain time series and its on-disk format.
//!
//! `.gwst` files are little-endian: magic `"GWST"`, version `u32 = 1`,
//! sample rate `f64` (Hz), GPS start time `f64` (s), sample count `u64`,
//! then the samples as `f64`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;

const MAGIC: &[u8; 4] = b"GWST";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

/// Uniformly sampled detector strain.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainSeries {
    samples: Vec<f64>,
    sample_rate: f64,
    t0: f64,
}

impl StrainSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid("sample rate", format!("{sample_rate} Hz")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("start time", t0.to_string()));
        }
        if samples.is_empty() {
            return Err(Error::invalid("strain", "series has no samples"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("strain", format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// GPS time of the first sample.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.duration()
    }

    /// Same timing, new samples (used by filters that preserve length).
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            t0: self.t0,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_samples(self.samples.iter().map(|v| v * c).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.samples.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.sample_rate.to_le_bytes());
        buf.extend_from_slice(&self.t0.to_le_bytes());
        buf.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for v in &self.samples {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(origin, "truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(origin, "bad magic, expected \"GWST\""));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::format(origin, format!("unsupported version {version}")));
        }
        let sample_rate = f64_at(8);
        let t0 = f64_at(16);
        let n = u64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::format(origin, format!("invalid sample rate {sample_rate}")));
        }
        if !t0.is_finite() {
            return Err(Error::format(origin, "non-finite start time"));
        }
        let expected = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(8))
            .and_then(|b| b.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(Error::format(
                origin,
                format!(
                    "header declares {n} samples but file holds {} payload bytes",
                    bytes.len() - HEADER_LEN
                ),
            ));
        }
        if n == 0 {
            return Err(Error::format(origin, "no samples"));
        }
        let mut samples = Vec::with_capacity(n as usize);
        for (i, c) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    path: origin.to_path_buf(),
                    index: i,
                });
            }
            samples.push(v);
        }
        Ok(Self { samples, sample_rate, t0 })
    }
}

pub fn save_strain(s: &StrainSeries, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &s.encode())
}

pub fn load_strain(path: &Path) -> Result<StrainSeries> {
    StrainSeries::decode(&fsutil::read_bytes(path)?, path)
}

//! Synthetic strain with injected glitch-like transients.
//!
//! Backgrounds are unit-variance white noise, so a template scaled to
//! `sqrt(Σ h²) = snr` has matched-filter SNR `snr`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::qscan::{qscan, QScanConfig, StrainSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlitchKind {
    /// Short sine-Gaussian burst.
    Blip,
    /// Upward frequency sweep.
    Chirp,
    /// Long narrowband tone.
    Line,
    /// Background only.
    Noise,
}

impl GlitchKind {
    pub const ALL: [GlitchKind; 4] = [GlitchKind::Blip, GlitchKind::Chirp, GlitchKind::Line, GlitchKind::Noise];

    pub fn label(self) -> &'static str {
        match self {
            GlitchKind::Blip => "Blip",
            GlitchKind::Chirp => "Chirp",
            GlitchKind::Line => "Line",
            GlitchKind::Noise => "No_Glitch",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s) || format!("{k:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("glitch kind", format!("`{s}` (expected Blip, Chirp, Line or No_Glitch)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub sample_rate: f64,
    pub duration: f64,
    pub t0: f64,
    pub snr: (f64, f64),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: 4096.0,
            duration: 4.0,
            t0: 1_240_000_000.0,
            snr: (30.0, 60.0),
        }
    }
}

/// One synthetic segment with the glitch centred at `event_time`.
#[derive(Debug, Clone)]
pub struct Injection {
    pub strain: StrainSeries,
    pub event_time: f64,
    pub kind: GlitchKind,
}

/// Noise-free template, unit peak amplitude, centred at `center` seconds.
pub fn template(kind: GlitchKind, fs: f64, n: usize, center: f64, rng: &mut impl Rng) -> Vec<f64> {
    let t = |i: usize| i as f64 / fs - center;
    match kind {
        GlitchKind::Blip => {
            let f0 = rng.gen_range(80.0..250.0);
            let q = rng.gen_range(4.0..8.0);
            let tau = q / (2.0 * PI * f0);
            (0..n)
                .map(|i| {
                    let x = t(i);
                    (-(x / tau).powi(2)).exp() * (2.0 * PI * f0 * x).sin()
                })
                .collect()
        }
        GlitchKind::Chirp => {
            let len = rng.gen_range(0.25..0.4);
            let f_lo = rng.gen_range(30.0..50.0);
            let f_hi = rng.gen_range(250.0..400.0);
            // Sweep over [center - len, center]; phase is the integral of a linear ramp.
            let k = (f_hi - f_lo) / len;
            (0..n)
                .map(|i| {
                    let s = t(i) + len;
                    if !(0.0..=len).contains(&s) {
                        return 0.0;
                    }
                    let phase = 2.0 * PI * (f_lo * s + 0.5 * k * s * s);
                    tukey(s / len, 0.2) * phase.sin()
                })
                .collect()
        }
        GlitchKind::Line => {
            let len = rng.gen_range(0.6..0.9);
            let f0 = rng.gen_range(40.0..400.0);
            (0..n)
                .map(|i| {
                    let s = t(i) + 0.5 * len;
                    if !(0.0..=len).contains(&s) {
                        return 0.0;
                    }
                    tukey(s / len, 0.1) * (2.0 * PI * f0 * s).sin()
                })
                .collect()
        }
        GlitchKind::Noise => vec![0.0; n],
    }
}

/// Tapered-cosine window on `u` in [0,1].
fn tukey(u: f64, alpha: f64) -> f64 {
    let edge = 0.5 * alpha;
    if u < edge {
        0.5 * (1.0 - (PI * u / edge).cos())
    } else if u > 1.0 - edge {
        0.5 * (1.0 - (PI * (1.0 - u) / edge).cos())
    } else {
        1.0
    }
}

/// Template scaled to matched-filter SNR drawn from `p.snr`, and its centre
/// in seconds from the segment start.
pub fn scaled_template(kind: GlitchKind, p: &SynthParams, rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
    let n = (p.duration * p.sample_rate).round() as usize;
    if n == 0 || !(p.snr.0 > 0.0 && p.snr.0 <= p.snr.1) {
        return Err(Error::invalid(
            "synthesis parameters",
            format!("{n} samples, snr range {:?}", p.snr),
        ));
    }
    let center = 0.5 * p.duration + rng.gen_range(-0.05..0.05);
    let mut h = template(kind, p.sample_rate, n, center, rng);
    let snr = if p.snr.0 < p.snr.1 {
        rng.gen_range(p.snr.0..p.snr.1)
    } else {
        p.snr.0
    };
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > 0.0 { snr / norm } else { 0.0 };
    h.iter_mut().for_each(|v| *v *= scale);
    Ok((h, center))
}

pub fn inject(kind: GlitchKind, p: &SynthParams, rng: &mut impl Rng) -> Result<Injection> {
    let (h, center) = scaled_template(kind, p, rng)?;
    let samples = h
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            z + v
        })
        .collect();
    Ok(Injection {
        strain: StrainSeries::new(samples, p.sample_rate, p.t0)?,
        event_time: p.t0 + center,
        kind,
    })
}

/// Generator for item `index` of `kind`; independent of generation order.
pub fn item_rng(seed: u64, kind: GlitchKind, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 32) | index as u64);
    rng
}

/// Renders `per_class` images of every kind into `<root>/<label>/<label>_<i>.png`.
/// Returns the written paths in (kind, index) order.
pub fn write_image_dataset(
    root: &Path,
    per_class: usize,
    seed: u64,
    params: &SynthParams,
    qcfg: &QScanConfig,
) -> Result<Vec<(PathBuf, GlitchKind)>> {
    let jobs: Vec<(GlitchKind, usize)> = GlitchKind::ALL
        .into_iter()
        .flat_map(|k| (0..per_class).map(move |i| (k, i)))
        .collect();
    for k in GlitchKind::ALL {
        fsutil::create_dir_all(&root.join(k.label()))?;
    }
    jobs.par_iter()
        .map(|&(kind, i)| {
            let mut rng = item_rng(seed, kind, i);
            let inj = inject(kind, params, &mut rng)?;
            let img = qscan(&inj.strain, inj.event_time, qcfg)?;
            let path = root.join(kind.label()).join(format!("{}_{i:05}.png", kind.label()));
            img.save_png(&path)?;
            Ok((path, kind))
        })
        .collect()
}

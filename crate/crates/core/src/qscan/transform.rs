//! Single-Q constant-Q transform.
//!
//! Each frequency row `f` filters the series with a Gaussian window of
//! bandwidth `σ_f = f/q` (time width `q/(2πf)`), so the time-frequency tiles
//! keep a constant quality factor. The filter is applied in the frequency
//! domain: the band `f ± 8σ_f` of the series' spectrum is weighted, shifted
//! to baseband and inverse-transformed on a short grid, and the squared
//! magnitude is read off at each requested time by linear interpolation.
//! Energies are divided by the window's noise gain so that unit-variance white
//! noise has mean energy 1.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::strain::StrainSeries;
use crate::error::{Error, Result};

/// Band half-width in units of `σ_f`.
const BAND_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QTransformParams {
    pub q: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub time_bins: usize,
    pub freq_bins: usize,
    /// Output time range in GPS seconds; the whole series when `None`.
    pub span: Option<(f64, f64)>,
}

impl Default for QTransformParams {
    fn default() -> Self {
        Self {
            q: 12.0,
            f_min: 10.0,
            f_max: 2048.0,
            time_bins: 224,
            freq_bins: 224,
            span: None,
        }
    }
}

/// Energy on a uniform time grid × logarithmic frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Time-major: `energy[t * freqs.len() + f]`.
    energy: Vec<f64>,
    /// Bin centres, GPS seconds.
    times: Vec<f64>,
    freqs: Vec<f64>,
    q: f64,
}

impl Spectrogram {
    /// Builds a spectrogram from explicit grids. Frequencies must increase
    /// strictly and energies must be finite and non-negative.
    pub fn new(energy: Vec<f64>, times: Vec<f64>, freqs: Vec<f64>, q: f64) -> Result<Self> {
        if energy.len() != times.len() * freqs.len() || times.is_empty() || freqs.is_empty() {
            return Err(Error::shape(
                "Spectrogram::new",
                format!("{} times x {} freqs", times.len(), freqs.len()),
                format!("{} energies", energy.len()),
            ));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("spectrogram grid", "axes must increase strictly"));
        }
        if energy.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::invalid("spectrogram", "energies must be finite and non-negative"));
        }
        Ok(Self { energy, times, freqs, q })
    }

    pub fn energy(&self, t: usize, f: usize) -> f64 {
        self.energy[t * self.freqs.len() + f]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energy
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Spacing of the time grid (0 for a single bin).
    pub fn time_step(&self) -> f64 {
        if self.times.len() > 1 {
            (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
        } else {
            0.0
        }
    }

    /// `(time index, freq index)` of the largest energy.
    pub fn peak(&self) -> (usize, usize) {
        let i = crate::vit::argmax(&self.energy);
        (i / self.freqs.len(), i % self.freqs.len())
    }

    /// Mean energy of each frequency row over time.
    pub fn frequency_profile(&self) -> Vec<f64> {
        let nf = self.freqs.len();
        let mut out = vec![0.0; nf];
        for row in self.energy.chunks(nf) {
            for (o, e) in out.iter_mut().zip(row) {
                *o += e;
            }
        }
        out.iter().map(|v| v / self.times.len() as f64).collect()
    }

    pub fn mean_energy(&self) -> f64 {
        self.energy.iter().sum::<f64>() / self.energy.len() as f64
    }
}

/// `n` frequencies spaced geometrically from `f_min` to `f_max` inclusive.
pub fn log_frequencies(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![f_min];
    }
    let ratio = (f_max / f_min).ln();
    (0..n).map(|i| f_min * (ratio * i as f64 / (n - 1) as f64).exp()).collect()
}

fn validate(s: &StrainSeries, p: &QTransformParams) -> Result<(f64, f64)> {
    let nyquist = s.sample_rate() / 2.0;
    if !(p.f_min > 0.0 && p.f_min < p.f_max && p.f_max <= nyquist) {
        return Err(Error::invalid(
            "frequency band",
            format!("need 0 < f_min < f_max <= {nyquist} Hz (Nyquist), got {}..{} Hz", p.f_min, p.f_max),
        ));
    }
    if !(p.q >= 3.0) {
        return Err(Error::invalid("q", format!("{} is below 3; the window degenerates", p.q)));
    }
    if p.time_bins == 0 || p.freq_bins == 0 {
        return Err(Error::invalid("grid", "time_bins and freq_bins must be positive"));
    }
    let (a, b) = p.span.unwrap_or((s.t0(), s.end_time()));
    let tol = 1e-9 * s.duration().max(1.0);
    if !(a < b && a >= s.t0() - tol && b <= s.end_time() + tol) {
        return Err(Error::invalid(
            "time span",
            format!("[{a}, {b}] is not inside the series [{}, {}]", s.t0(), s.end_time()),
        ));
    }
    Ok((a, b))
}

pub fn q_transform(s: &StrainSeries, p: &QTransformParams) -> Result<Spectrogram> {
    let (a, b) = validate(s, p)?;
    let n = s.len();
    let fs = s.sample_rate();
    let duration = s.duration();

    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex64> = s.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);

    let freqs = log_frequencies(p.f_min, p.f_max, p.freq_bins);
    let dt = (b - a) / p.time_bins as f64;
    let times: Vec<f64> = (0..p.time_bins).map(|j| a + (j as f64 + 0.5) * dt).collect();

    let bands: Vec<Band> = freqs.iter().map(|&f| Band::new(f, p.q, n, fs)).collect();
    let mut plans: HashMap<usize, Arc<dyn Fft<f64>>> = HashMap::new();
    for band in &bands {
        plans.entry(band.len).or_insert_with(|| planner.plan_fft_inverse(band.len));
    }

    let rows: Vec<Vec<f64>> = bands
        .par_iter()
        .map(|band| {
            let z = band.baseband(&spectrum, &plans[&band.len]);
            let gain = n as f64 * band.noise_gain;
            times
                .iter()
                .map(|&t| {
                    if gain == 0.0 {
                        return 0.0;
                    }
                    let u = (t - s.t0()) / duration * band.len as f64;
                    let p0 = u.floor();
                    let frac = u - p0;
                    let i0 = (p0 as i64).rem_euclid(band.len as i64) as usize;
                    let i1 = (i0 + 1) % band.len;
                    let v = z[i0] * (1.0 - frac) + z[i1] * frac;
                    v.norm_sqr() / gain
                })
                .collect()
        })
        .collect();

    let nf = freqs.len();
    let mut energy = vec![0.0; times.len() * nf];
    for (fi, row) in rows.iter().enumerate() {
        for (ti, e) in row.iter().enumerate() {
            energy[ti * nf + fi] = *e;
        }
    }
    Ok(Spectrogram {
        energy,
        times,
        freqs,
        q: p.q,
    })
}

/// Spectral support of one frequency row.
struct Band {
    center: f64,
    sigma: f64,
    k_lo: usize,
    k_hi: usize,
    k0: usize,
    len: usize,
    df: f64,
    noise_gain: f64,
}

impl Band {
    fn new(f: f64, q: f64, n: usize, fs: f64) -> Self {
        let df = fs / n as f64;
        let sigma = f / q;
        let half = n / 2;
        let k_lo = (((f - BAND_SIGMAS * sigma) / df).ceil().max(0.0) as usize).min(half);
        let k_hi = (((f + BAND_SIGMAS * sigma) / df).floor().max(0.0) as usize).min(half);
        let k0 = ((f / df).round() as usize).clamp(k_lo, k_hi.max(k_lo));
        let reach = (k0 - k_lo).max(k_hi.saturating_sub(k0));
        // Oversampling the baseband grid 2x keeps linear interpolation accurate.
        let len = (4 * reach + 2).next_power_of_two().max(16);
        let noise_gain = (k_lo..=k_hi)
            .map(|k| {
                let w = window(k as f64 * df, f, sigma);
                w * w
            })
            .sum::<f64>();
        Self {
            center: f,
            sigma,
            k_lo,
            k_hi,
            k0,
            len,
            df,
            noise_gain,
        }
    }

    fn baseband(&self, spectrum: &[Complex64], plan: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (k, &s) in spectrum.iter().enumerate().take(self.k_hi + 1).skip(self.k_lo) {
            let j = k as i64 - self.k0 as i64;
            let slot = j.rem_euclid(self.len as i64) as usize;
            buf[slot] = s * window(k as f64 * self.df, self.center, self.sigma);
        }
        plan.process(&mut buf);
        buf
    }
}

fn window(nu: f64, f: f64, sigma: f64) -> f64 {
    let x = (nu - f) / sigma;
    (-0.5 * x * x).exp()
}

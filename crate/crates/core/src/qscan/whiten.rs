//! Spectral whitening against a median-averaged power spectral density.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::strain::StrainSeries;
use crate::error::{Error, Result};

/// One-sided PSD on a uniform grid, normalized so unit-variance white noise
/// has density 1 in every bin.
#[derive(Debug, Clone)]
pub struct Psd {
    pub df: f64,
    pub values: Vec<f64>,
}

impl Psd {
    /// Linear interpolation at `freq`, clamped to the grid ends.
    pub fn at(&self, freq: f64) -> f64 {
        let x = (freq / self.df).max(0.0);
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().expect("non-empty PSD");
        }
        let a = x - i as f64;
        self.values[i] * (1.0 - a) + self.values[i + 1] * a
    }
}

fn segment_samples(s: &StrainSeries, segment_length: f64) -> Result<usize> {
    if !(segment_length > 0.0) {
        return Err(Error::invalid("whitening segment", format!("{segment_length} s")));
    }
    let m = (segment_length * s.sample_rate()).round() as usize;
    if m < 4 || s.duration() + 1e-12 < 2.0 * segment_length {
        return Err(Error::invalid(
            "strain duration",
            format!(
                "{:.3} s is too short to whiten; need at least {:.3} s (two {segment_length} s segments)",
                s.duration(),
                2.0 * segment_length
            ),
        ));
    }
    Ok(m)
}

/// Median of Hann-windowed periodograms over half-overlapping segments.
pub fn median_psd(s: &StrainSeries, segment_length: f64) -> Result<Psd> {
    let m = segment_samples(s, segment_length)?;
    let x = s.samples();
    let window: Vec<f64> = (0..m)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / m as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let step = m / 2;
    let starts: Vec<usize> = (0..).map(|k| k * step).take_while(|&st| st + m <= x.len()).collect();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let bins = m / 2 + 1;
    let mut periodograms = vec![Vec::with_capacity(starts.len()); bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for &st in &starts {
        for (b, (v, w)) in buf.iter_mut().zip(x[st..st + m].iter().zip(&window)) {
            *b = Complex64::new(v * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in periodograms.iter_mut().enumerate() {
            p.push(buf[k].norm_sqr() / wss);
        }
    }
    // The median of an exponential variate is ln 2 times its mean.
    let values = periodograms
        .into_iter()
        .map(|mut p| median(&mut p) / std::f64::consts::LN_2)
        .collect();
    Ok(Psd {
        df: s.sample_rate() / m as f64,
        values,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Divides the series' spectrum by the square root of its median PSD so that
/// stationary noise comes out with unit variance per sample. Bins where the
/// PSD vanishes are zeroed.
pub fn whiten(s: &StrainSeries, segment_length: f64) -> Result<StrainSeries> {
    let psd = median_psd(s, segment_length)?;
    let n = s.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = s.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = s.sample_rate() / n as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k } else { n - k };
        let p = psd.at(kk as f64 * df);
        *b = if p > 0.0 { *b / p.sqrt() } else { Complex64::new(0.0, 0.0) };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    Ok(s.with_samples(buf.iter().map(|c| c.re * inv).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect::<Vec<f64>>()
    }

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn white_noise_comes_out_near_unit_variance() {
        for sigma in [1.0, 3e-3, 40.0] {
            let s = StrainSeries::new(noise(16 * 4096, sigma, 7), 4096.0, 0.0).unwrap();
            let w = whiten(&s, 1.0).unwrap();
            let v = variance(w.samples());
            assert!((0.5..=2.0).contains(&v), "sigma {sigma}: variance {v}");
        }
    }

    #[test]
    fn sinusoid_stays_the_dominant_line() {
        let fs = 4096.0;
        let mut x = noise(16 * 4096, 1.0, 8);
        for (i, v) in x.iter_mut().enumerate() {
            *v += (2.0 * std::f64::consts::PI * 100.0 * i as f64 / fs).sin();
        }
        let w = whiten(&StrainSeries::new(x, fs, 0.0).unwrap(), 1.0).unwrap();
        let n = w.len();
        let mut buf: Vec<Complex64> = w.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak = (1..n / 2).max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr())).unwrap();
        assert!((peak as f64 * fs / n as f64 - 100.0).abs() < 0.5);
    }

    #[test]
    fn deterministic_and_rejects_short_input() {
        let s = StrainSeries::new(noise(4 * 1024, 1.0, 9), 1024.0, 0.0).unwrap();
        assert_eq!(whiten(&s, 1.0).unwrap(), whiten(&s, 1.0).unwrap());
        let err = whiten(&s, 2.5).unwrap_err();
        assert!(err.to_string().contains("need at least 5.000 s"), "{err}");
    }

    #[test]
    fn zero_input_stays_zero() {
        let s = StrainSeries::new(vec![0.0; 4096], 1024.0, 0.0).unwrap();
        assert!(whiten(&s, 1.0).unwrap().samples().iter().all(|&v| v == 0.0));
    }
}

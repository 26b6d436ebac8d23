//! Strain → whitened series → constant-Q spectrogram → rendered image.

pub mod render;
pub mod strain;
pub mod transform;
pub mod whiten;

pub use render::{image_to_input, input_to_image, render, render_with, Ceiling, GlitchImage, Normalization, RenderParams, IMAGE_SIZE};
pub use strain::{load_strain, save_strain, StrainSeries};
pub use transform::{log_frequencies, q_transform, QTransformParams, Spectrogram};
pub use whiten::{median_psd, whiten, Psd};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QScanConfig {
    /// Whitening segment length, seconds.
    pub segment_length: f64,
    pub q: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub time_bins: usize,
    pub freq_bins: usize,
    pub render: RenderParams,
}

impl Default for QScanConfig {
    fn default() -> Self {
        let t = QTransformParams::default();
        Self {
            segment_length: 1.0,
            q: t.q,
            f_min: t.f_min,
            f_max: t.f_max,
            time_bins: t.time_bins,
            freq_bins: t.freq_bins,
            render: RenderParams::default(),
        }
    }
}

/// Spectrogram of the whitened series over `event_time ± crop_half_width`.
pub fn event_spectrogram(s: &StrainSeries, event_time: f64, cfg: &QScanConfig) -> Result<Spectrogram> {
    let half = cfg.render.crop_half_width;
    let (a, b) = (event_time - half, event_time + half);
    if !(half > 0.0) || a < s.t0() || b > s.end_time() {
        return Err(Error::invalid(
            "event time",
            format!("window [{a}, {b}] is outside the strain span [{}, {}]", s.t0(), s.end_time()),
        ));
    }
    let white = whiten(s, cfg.segment_length)?;
    q_transform(
        &white,
        &QTransformParams {
            q: cfg.q,
            f_min: cfg.f_min,
            f_max: cfg.f_max,
            time_bins: cfg.time_bins,
            freq_bins: cfg.freq_bins,
            span: Some((a, b)),
        },
    )
}

/// The full image-preparation step for one event.
pub fn qscan(s: &StrainSeries, event_time: f64, cfg: &QScanConfig) -> Result<GlitchImage> {
    let sp = event_spectrogram(s, event_time, cfg)?;
    render_with(&sp, event_time, &cfg.render)
}

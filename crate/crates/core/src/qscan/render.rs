//! Spectrogram rendering and image normalization.

use std::path::Path;
use std::sync::OnceLock;

use super::transform::Spectrogram;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::Planes;

pub const IMAGE_SIZE: usize = 224;

static VIRIDIS_CSV: &str = include_str!("../../data/viridis.csv");

/// The 256-entry viridis table.
pub fn viridis() -> &'static [[f64; 3]; 256] {
    static TABLE: OnceLock<[[f64; 3]; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0.0; 3]; 256];
        let rows = VIRIDIS_CSV.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut n = 0;
        for (slot, line) in table.iter_mut().zip(rows) {
            for (c, field) in slot.iter_mut().zip(line.split(',')) {
                *c = field.trim().parse().expect("colormap table is well formed");
            }
            n += 1;
        }
        assert_eq!(n, 256, "colormap table must have 256 rows");
        table
    })
}

/// Maps an intensity in [0,1] to RGB.
pub fn colormap(v: f64) -> [f64; 3] {
    let i = (v.clamp(0.0, 1.0) * 255.0).round() as usize;
    viridis()[i]
}

/// Energy at which the colormap saturates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ceiling {
    /// Percentile of the cropped grid, in [0, 100].
    Percentile(f64),
    Fixed(f64),
}

impl Default for Ceiling {
    fn default() -> Self {
        Ceiling::Percentile(99.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderParams {
    pub crop_half_width: f64,
    pub ceiling: Ceiling,
    pub size: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            crop_half_width: 0.5,
            ceiling: Ceiling::default(),
            size: IMAGE_SIZE,
        }
    }
}

/// A 3-channel image with every value in [0,1]. Rendered images are
/// 224 × 224; smaller square sizes are allowed for reduced models.
#[derive(Debug, Clone, PartialEq)]
pub struct GlitchImage(Planes);

impl GlitchImage {
    pub fn new(planes: Planes) -> Result<Self> {
        if planes.channels() != 3 {
            return Err(Error::invalid("image", format!("{} channels, expected 3", planes.channels())));
        }
        if planes.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("image", "values must lie in [0, 1]"));
        }
        Ok(Self(planes))
    }

    pub fn planes(&self) -> &Planes {
        &self.0
    }

    pub fn into_planes(self) -> Planes {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn resized(&self, height: usize, width: usize) -> GlitchImage {
        if (height, width) == (self.height(), self.width()) {
            return self.clone();
        }
        let mut p = self.0.resize(height, width);
        p.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        GlitchImage(p)
    }

    /// 8-bit RGB, row-major, interleaved.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let (h, w) = (self.height(), self.width());
        let mut out = Vec::with_capacity(3 * h * w);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out.push((self.0.get(c, y, x) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn from_rgb8(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * height * width {
            return Err(Error::shape(
                "GlitchImage::from_rgb8",
                format!("{height}x{width}x3"),
                format!("{} bytes", rgb.len()),
            ));
        }
        let mut p = Planes::filled(3, height, width, 0.0);
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for (c, &b) in px.iter().enumerate() {
                p.set(c, i / width, i % width, b as f64 / 255.0);
            }
        }
        Ok(GlitchImage(p))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf =
            image::RgbImage::from_raw(self.width() as u32, self.height() as u32, self.to_rgb8()).expect("buffer length matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::Image {
            path: "<memory>".into(),
            reason: e.to_string(),
        })?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.encode_png()?)
    }

    /// Decodes any raster format the `image` crate knows, converting to RGB.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsutil::read_bytes(path)?;
        let img = image::load_from_memory(&bytes)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        Self::from_rgb8(img.height() as usize, img.width() as usize, img.as_raw())
    }
}

/// Renders `sp` around `event_time` with the default ceiling and size.
pub fn render(sp: &Spectrogram, crop_half_width: f64, event_time: f64) -> Result<GlitchImage> {
    render_with(
        sp,
        event_time,
        &RenderParams {
            crop_half_width,
            ..Default::default()
        },
    )
}

pub fn render_with(sp: &Spectrogram, event_time: f64, p: &RenderParams) -> Result<GlitchImage> {
    let times = sp.times();
    let half_step = 0.5 * sp.time_step();
    let span = (times[0] - half_step, times[times.len() - 1] + half_step);
    let window = (event_time - p.crop_half_width, event_time + p.crop_half_width);
    let tol = 1e-9 * (span.1 - span.0).abs().max(1.0);
    if !(p.crop_half_width > 0.0) || window.0 < span.0 - tol || window.1 > span.1 + tol {
        return Err(Error::invalid(
            "crop window",
            format!(
                "[{:.4}, {:.4}] does not fit inside spectrogram span [{:.4}, {:.4}]",
                window.0, window.1, span.0, span.1
            ),
        ));
    }
    if p.size == 0 {
        return Err(Error::invalid("image size", "must be positive"));
    }
    let cols: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window.0 - tol && times[i] <= window.1 + tol)
        .collect();
    if cols.is_empty() {
        return Err(Error::invalid("crop window", "contains no time bins"));
    }

    let nf = sp.freqs().len();
    let mut cropped = Vec::with_capacity(cols.len() * nf);
    for &t in &cols {
        cropped.extend((0..nf).map(|f| sp.energy(t, f)));
    }
    let ceiling = match p.ceiling {
        Ceiling::Fixed(v) if v > 0.0 => v,
        Ceiling::Fixed(v) => return Err(Error::invalid("intensity ceiling", format!("{v} must be positive"))),
        Ceiling::Percentile(q) => {
            let c = percentile(&cropped, q)?;
            if c > 0.0 {
                c
            } else {
                cropped.iter().cloned().fold(0.0, f64::max)
            }
        }
    };

    let (w, h) = (cols.len(), nf);
    let mut planes = Planes::filled(3, h, w, 0.0);
    for (x, column) in cropped.chunks(nf).enumerate() {
        for (fi, &e) in column.iter().enumerate() {
            let v = if ceiling > 0.0 { (e / ceiling).clamp(0.0, 1.0) } else { 0.0 };
            let rgb = colormap(v);
            for (c, val) in rgb.iter().enumerate() {
                planes.set(c, h - 1 - fi, x, *val);
            }
        }
    }
    let mut out = planes.resize(p.size, p.size);
    out.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    GlitchImage::new(out)
}

/// Linear-interpolation percentile (`q` in [0, 100]).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&q) {
        return Err(Error::invalid("percentile", format!("q = {q} over {} values", values.len())));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    Ok(if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    })
}

/// Per-channel normalization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Normalization {
    /// The ImageNet statistics the pretrained encoder expects.
    pub const IMAGENET: Normalization = Normalization {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    pub fn apply(&self, img: &GlitchImage) -> Result<Planes> {
        image_to_input(img, self.mean, self.std)
    }

    /// `norm_mean_r`..`norm_std_b` lines, the keys used by weight manifests.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (kind, v) in [("mean", self.mean), ("std", self.std)] {
            for (ch, x) in ["r", "g", "b"].iter().zip(v) {
                out.push_str(&format!("norm_{kind}_{ch}={x}\n"));
            }
        }
        out
    }

    /// Reads the six `norm_*` keys; `None` when none are present.
    pub fn from_key_values(kv: &std::collections::BTreeMap<String, String>, origin: &Path) -> Result<Option<Self>> {
        let keys = [
            "norm_mean_r",
            "norm_mean_g",
            "norm_mean_b",
            "norm_std_r",
            "norm_std_g",
            "norm_std_b",
        ];
        if keys.iter().all(|k| !kv.contains_key(*k)) {
            return Ok(None);
        }
        let mut v = [0.0; 6];
        for (slot, k) in v.iter_mut().zip(keys) {
            let raw = kv.get(k).ok_or_else(|| Error::format(origin, format!("missing key `{k}`")))?;
            *slot = raw.parse().map_err(|_| Error::format(origin, format!("`{k}` is not a number")))?;
        }
        let n = Normalization {
            mean: [v[0], v[1], v[2]],
            std: [v[3], v[4], v[5]],
        };
        check_std(n.std)?;
        Ok(Some(n))
    }
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IMAGENET
    }
}

/// Per-channel `(value - mean) / std`.
pub fn image_to_input(img: &GlitchImage, mean: [f64; 3], std: [f64; 3]) -> Result<Planes> {
    check_std(std)?;
    let mut p = img.planes().clone();
    let hw = p.height() * p.width();
    for (i, v) in p.data_mut().iter_mut().enumerate() {
        let c = i / hw;
        *v = (*v - mean[c]) / std[c];
    }
    Ok(p)
}

/// Inverse of [`image_to_input`]; values are clamped back into [0,1].
pub fn input_to_image(input: &Planes, mean: [f64; 3], std: [f64; 3]) -> Result<GlitchImage> {
    check_std(std)?;
    let mut p = input.clone();
    let hw = p.height() * p.width();
    for (i, v) in p.data_mut().iter_mut().enumerate() {
        let c = i / hw;
        *v = (*v * std[c] + mean[c]).clamp(0.0, 1.0);
    }
    GlitchImage::new(p)
}

fn check_std(std: [f64; 3]) -> Result<()> {
    if std.iter().all(|s| *s > 0.0 && s.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("normalization std", format!("{std:?} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nt: usize, nf: usize, f: impl Fn(usize, usize) -> f64) -> Spectrogram {
        let mut e = Vec::new();
        for t in 0..nt {
            for fi in 0..nf {
                e.push(f(t, fi));
            }
        }
        let times = (0..nt).map(|t| 100.0 + (t as f64 + 0.5) * 0.01).collect();
        let freqs = (0..nf).map(|f| 10.0 + f as f64).collect();
        Spectrogram::new(e, times, freqs, 12.0).unwrap()
    }

    #[test]
    fn colormap_table_loads() {
        let t = viridis();
        assert!((t[0][0] - 0.267004).abs() < 1e-9);
        assert!(t[255][1] > 0.9);
        assert_eq!(colormap(2.0), t[255]);
    }

    #[test]
    fn constant_field_renders_uniform() {
        let sp = grid(200, 50, |_, _| 3.0);
        let img = render(&sp, 0.5, 101.0).unwrap();
        assert_eq!((img.height(), img.width()), (224, 224));
        for c in 0..3 {
            let plane = img.planes().plane(c);
            assert!(plane.iter().all(|v| (v - plane[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn single_spike_maps_to_its_pixel() {
        let (nt, nf) = (100, 40);
        let (ts, fs) = (37, 29);
        let sp = grid(nt, nf, |t, f| if (t, f) == (ts, fs) { 50.0 } else { 0.0 });
        let img = render(&sp, 0.5, 100.5).unwrap();
        let g = img.planes().plane(1);
        let best = crate::vit::argmax(g);
        let (y, x) = ((best / 224) as f64, (best % 224) as f64);
        let ex = (ts as f64 + 0.5) * 224.0 / nt as f64 - 0.5;
        let ey = ((nf - 1 - fs) as f64 + 0.5) * 224.0 / nf as f64 - 0.5;
        assert!((x - ex).abs() <= 1.0 && (y - ey).abs() <= 1.0, "({x},{y}) vs ({ex},{ey})");
    }

    #[test]
    fn zero_grid_renders_valid_image() {
        let img = render(&grid(10, 10, |_, _| 0.0), 0.04, 100.05).unwrap();
        assert!(img.planes().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn crop_outside_span_names_both_intervals() {
        let err = render(&grid(100, 10, |_, _| 1.0), 0.5, 100.9).unwrap_err().to_string();
        assert!(
            err.contains("[100.4000, 101.4000]") && err.contains("[100.0000, 101.0000]"),
            "{err}"
        );
    }

    #[test]
    fn normalization_round_trips() {
        let img = render(&grid(50, 20, |t, f| (t * f) as f64), 0.2, 100.25).unwrap();
        let id = image_to_input(&img, [0.0; 3], [1.0; 3]).unwrap();
        assert_eq!(id.data(), img.planes().data());
        let (m, s) = ([0.485, 0.456, 0.406], [0.229, 0.224, 0.225]);
        let back = input_to_image(&image_to_input(&img, m, s).unwrap(), m, s).unwrap();
        for (a, b) in back.planes().data().iter().zip(img.planes().data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let half = GlitchImage::new(Planes::filled(3, 4, 4, 0.5)).unwrap();
        assert!(image_to_input(&half, [0.5; 3], [0.5; 3]).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(image_to_input(&half, [0.5; 3], [0.5, 0.0, 1.0]).is_err());
    }

    #[test]
    fn normalization_text_round_trips() {
        let n = Normalization {
            mean: [0.1, 0.2, 0.3],
            std: [0.4, 0.5, 0.625],
        };
        let kv = fsutil::parse_key_values(&n.to_text(), Path::new("n")).unwrap();
        assert_eq!(Normalization::from_key_values(&kv, Path::new("n")).unwrap(), Some(n));
        assert_eq!(Normalization::from_key_values(&Default::default(), Path::new("n")).unwrap(), None);
    }

    #[test]
    fn png_round_trip_is_exact_at_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = render(&grid(30, 30, |t, f| (t + f) as f64), 0.1, 100.15).unwrap();
        img.save_png(&path).unwrap();
        let back = GlitchImage::load(&path).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());
        assert!(matches!(GlitchImage::load(&dir.path().join("missing.png")), Err(e) if e.is_io()));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 5.0);
        assert!((percentile(&v, 12.5).unwrap() - 1.5).abs() < 1e-12);
    }
}

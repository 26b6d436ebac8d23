//! Minimal dense kernel: row-major 2-D tensors with the handful of operations
//! the encoder and classifier head need.
//!
//! Values are held in `f64`; weight files store `f32` and are widened on load.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Work size (multiply-adds) above which a matmul splits its output rows across threads.
const PAR_THRESHOLD: usize = 1 << 18;

/// A 2-D row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Tensor2::new",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// A single-row tensor holding `values`.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Tensor2 {
        Tensor2::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Copies columns `start..end` into a new tensor.
    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor2 {
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Tensor2 {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// A stack of equally sized planes in channel-major (CHW) order; used for
/// images both before and after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Planes {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Planes {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "Planes::new",
                format!("{channels}x{height}x{width}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Separable triangle-filter resampling. Upsampling is plain bilinear
    /// interpolation with half-pixel centers; downsampling widens the filter
    /// support by the scale factor so thin features are averaged rather than
    /// skipped.
    pub fn resize(&self, height: usize, width: usize) -> Planes {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let wx = resample_weights(self.width, width);
        let wy = resample_weights(self.height, height);
        let mut out = Vec::with_capacity(self.channels * height * width);
        let mut tmp = vec![0.0; self.height * width];
        for c in 0..self.channels {
            let src = self.plane(c);
            for y in 0..self.height {
                let row = &src[y * self.width..(y + 1) * self.width];
                for (x, (first, ws)) in wx.iter().enumerate() {
                    tmp[y * width + x] = ws.iter().enumerate().map(|(i, w)| w * row[first + i]).sum();
                }
            }
            for (first, ws) in &wy {
                for x in 0..width {
                    let v = ws.iter().enumerate().map(|(i, w)| w * tmp[(first + i) * width + x]).sum();
                    out.push(v);
                }
            }
        }
        Planes {
            channels: self.channels,
            height,
            width,
            data: out,
        }
    }
}

/// Per output index: first contributing source index and normalized weights.
fn resample_weights(src: usize, dst: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    let support = scale.max(1.0);
    (0..dst)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(src);
            let mut ws: Vec<f64> = (lo..hi)
                .map(|i| {
                    let d = ((i as f64 + 0.5 - center) / support).abs();
                    (1.0 - d).max(0.0)
                })
                .collect();
            let total: f64 = ws.iter().sum();
            for w in &mut ws {
                *w /= total;
            }
            (lo, ws)
        })
        .collect()
}

/// Matrix product `a · b`.
pub fn matmul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols != b.rows {
        return Err(Error::shape("matmul", a.shape_str(), b.shape_str()));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    let kernel = |(i, orow): (usize, &mut [f64])| {
        let arow = &a.data[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    if n > 0 && m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(kernel);
    } else if n > 0 {
        out.chunks_mut(n).enumerate().for_each(kernel);
    }
    Ok(Tensor2 {
        rows: m,
        cols: n,
        data: out,
    })
}

/// Matrix product `a · bᵀ`.
pub fn matmul_transposed(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols != b.cols {
        return Err(Error::shape("matmul_transposed", a.shape_str(), b.shape_str()));
    }
    Ok(Tensor2::from_fn(a.rows, b.rows, |i, j| {
        a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum()
    }))
}

/// Elementwise sum.
pub fn add(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.shape() != b.shape() {
        return Err(Error::shape("add", a.shape_str(), b.shape_str()));
    }
    Ok(Tensor2 {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

/// Adds `bias` to every row.
pub fn add_row(x: &Tensor2, bias: &[f64]) -> Result<Tensor2> {
    if bias.len() != x.cols {
        return Err(Error::shape("add_row", x.shape_str(), format!("bias[{}]", bias.len())));
    }
    let mut out = x.clone();
    for r in 0..out.rows {
        for (v, b) in out.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(out)
}

/// `x · w + bias`, the affine map used by every linear layer.
pub fn linear(x: &Tensor2, w: &Tensor2, bias: &[f64]) -> Result<Tensor2> {
    let mut out = matmul(x, w)?;
    if bias.len() != out.cols {
        return Err(Error::shape("linear", w.shape_str(), format!("bias[{}]", bias.len())));
    }
    for r in 0..out.rows {
        for (v, b) in out.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(out)
}

/// Row-wise layer normalization with population variance.
pub fn layer_norm(x: &Tensor2, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Tensor2> {
    if gamma.len() != x.cols || beta.len() != x.cols {
        return Err(Error::shape(
            "layer_norm",
            x.shape_str(),
            format!("gamma[{}], beta[{}]", gamma.len(), beta.len()),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("layer_norm eps", format!("{eps} is not positive")));
    }
    let n = x.cols as f64;
    let mut out = x.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// Softmax of a single slice, in place, with max-subtraction.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Elementwise exact GELU, `x·Φ(x)`.
pub fn gelu(x: &Tensor2) -> Tensor2 {
    x.map(gelu_scalar)
}

pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// d/dx [x·Φ(x)] = Φ(x) + x·φ(x).
pub fn gelu_derivative(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    normal_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Error function (rational approximations after fdlibm's `s_erf.c`,
/// accurate to about one ulp).
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    let r = if ax < 0.84375 {
        if ax < 2.0_f64.powi(-28) {
            return x + EFX * x;
        }
        let z = x * x;
        return x + x * (erf_small_p(z) / erf_small_q(z));
    } else if ax < 1.25 {
        let s = ax - 1.0;
        ERX + erf_mid_p(s) / erf_mid_q(s)
    } else if ax < 6.0 {
        1.0 - erfc_tail(ax)
    } else {
        1.0 - f64::MIN_POSITIVE
    };
    if x < 0.0 {
        -r
    } else {
        r
    }
}

/// Complementary error function, accurate in the far tail where `1 - erf` cancels.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax < 0.84375 {
        if ax < 2.0_f64.powi(-56) {
            return 1.0 - x;
        }
        let z = x * x;
        let y = erf_small_p(z) / erf_small_q(z);
        return if x < 0.25 { 1.0 - (x + x * y) } else { 0.5 - (x - 0.5 + x * y) };
    }
    if ax < 1.25 {
        let s = ax - 1.0;
        let p = erf_mid_p(s) / erf_mid_q(s);
        return if x >= 0.0 { 1.0 - ERX - p } else { 1.0 + ERX + p };
    }
    if ax < 28.0 {
        let t = erfc_tail(ax);
        return if x > 0.0 { t } else { 2.0 - t };
    }
    if x > 0.0 {
        0.0
    } else {
        2.0
    }
}

const ERX: f64 = 8.450_629_115_104_675_292_97e-01;
const EFX: f64 = 1.283_791_670_955_125_863_16e-01;

fn erf_small_p(z: f64) -> f64 {
    const PP: [f64; 5] = [
        1.283_791_670_955_125_585_61e-01,
        -3.250_421_072_470_014_993_70e-01,
        -2.848_174_957_559_851_047_66e-02,
        -5.770_270_296_489_441_591_57e-03,
        -2.376_301_665_665_016_260_84e-05,
    ];
    poly(&PP, z)
}

fn erf_small_q(z: f64) -> f64 {
    const QQ: [f64; 6] = [
        1.0,
        3.979_172_239_591_553_528_19e-01,
        6.502_224_998_876_729_444_85e-02,
        5.081_306_281_875_765_627_76e-03,
        1.324_947_380_043_216_445_26e-04,
        -3.960_228_278_775_368_123_20e-06,
    ];
    poly(&QQ, z)
}

fn erf_mid_p(s: f64) -> f64 {
    const PA: [f64; 7] = [
        -2.362_118_560_752_659_440_77e-03,
        4.148_561_186_837_483_316_66e-01,
        -3.722_078_760_357_013_238_47e-01,
        3.183_466_199_011_617_536_74e-01,
        -1.108_946_942_823_966_774_76e-01,
        3.547_830_432_561_823_593_71e-02,
        -2.166_375_594_868_790_843_00e-03,
    ];
    poly(&PA, s)
}

fn erf_mid_q(s: f64) -> f64 {
    const QA: [f64; 7] = [
        1.0,
        1.064_208_804_008_442_282_86e-01,
        5.403_979_177_021_710_489_37e-01,
        7.182_865_441_419_626_628_68e-02,
        1.261_712_198_087_616_421_12e-01,
        1.363_708_391_202_905_073_62e-02,
        1.198_449_984_679_910_741_70e-02,
    ];
    poly(&QA, s)
}

/// erfc(x) for 1.25 <= x < 28.
fn erfc_tail(x: f64) -> f64 {
    const RA: [f64; 8] = [
        -9.864_944_034_847_148_227_05e-03,
        -6.938_585_727_071_817_643_72e-01,
        -1.055_862_622_532_329_098_14e+01,
        -6.237_533_245_032_600_603_96e+01,
        -1.623_966_694_625_734_703_55e+02,
        -1.846_050_929_067_110_359_94e+02,
        -8.128_743_550_630_659_342_46e+01,
        -9.814_329_344_169_145_485_92e+00,
    ];
    const SA: [f64; 9] = [
        1.0,
        1.965_127_166_743_925_712_92e+01,
        1.376_577_541_435_190_426_00e+02,
        4.345_658_774_752_292_288_21e+02,
        6.453_872_717_332_678_803_36e+02,
        4.290_081_400_275_678_333_86e+02,
        1.086_350_055_417_794_351_34e+02,
        6.570_249_770_319_281_701_35e+00,
        -6.042_441_521_485_809_874_38e-02,
    ];
    const RB: [f64; 7] = [
        -9.864_942_924_700_099_285_97e-03,
        -7.992_832_376_805_230_065_74e-01,
        -1.775_795_491_775_475_198_89e+01,
        -1.606_363_848_558_219_160_62e+02,
        -6.375_664_433_683_896_277_22e+02,
        -1.025_095_131_611_077_249_54e+03,
        -4.835_191_916_086_513_970_19e+02,
    ];
    const SB: [f64; 8] = [
        1.0,
        3.033_806_074_348_245_829_24e+01,
        3.257_925_129_965_739_188_26e+02,
        1.536_729_586_084_436_959_94e+03,
        3.199_858_219_508_595_539_08e+03,
        2.553_050_406_433_164_425_83e+03,
        4.745_285_412_069_553_672_15e+02,
        -2.244_095_244_658_581_833_62e+01,
    ];
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (poly(&RA, s), poly(&SA, s))
    } else {
        (poly(&RB, s), poly(&SB, s))
    };
    // Split x so that exp(-x²) is evaluated without losing the low bits.
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp() / x
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
        Tensor2::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// Maclaurin series evaluated with enough terms for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn matmul_identity_and_small_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(3, 4, &mut rng);
        assert_eq!(matmul(&Tensor2::identity(3), &m).unwrap(), m);

        let a = Tensor2::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor2::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(50, 768, &mut rng);
        let b = random(768, 768, &mut rng);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        let diff = fast.data().iter().zip(slow.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "max abs diff {diff}");
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let err = matmul(&Tensor2::zeros(2, 3), &Tensor2::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn transposed_product_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(5, 7, &mut rng);
        let b = random(6, 7, &mut rng);
        let x = matmul_transposed(&a, &b).unwrap();
        let y = matmul(&a, &b.transpose()).unwrap();
        for (p, q) in x.data().iter().zip(y.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_cases() {
        let ones = [1.0; 3];
        let zeros = [0.0; 3];
        let x = Tensor2::new(1, 3, vec![5.0; 3]).unwrap();
        assert_eq!(layer_norm(&x, &ones, &zeros, 1e-6).unwrap().data(), &[0.0; 3]);

        let x = Tensor2::new(1, 2, vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, &[1.0; 2], &[0.0; 2], 1e-300).unwrap();
        assert!((y.get(0, 0) + 1.0).abs() < 1e-12 && (y.get(0, 1) - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(4, 64, &mut rng);
        let y = layer_norm(&x, &[1.0; 64], &[0.0; 64], 1e-12).unwrap();
        for r in 0..4 {
            let mean = y.row(r).iter().sum::<f64>() / 64.0;
            let var = y.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
        }

        assert!(layer_norm(&x, &[1.0; 3], &[0.0; 64], 1e-6).is_err());
        assert!(layer_norm(&x, &[1.0; 64], &[0.0; 64], 0.0).is_err());
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&Tensor2::new(1, 2, vec![0.0, 0.0]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);

        let s = softmax_rows(&Tensor2::new(1, 2, vec![1000.0, 0.0]).unwrap());
        assert!(s.is_finite());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12 && s.get(0, 1) < 1e-300);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(50, 50, &mut rng).map(|v| v * 20.0);
        let s = softmax_rows(&x);
        for r in 0..50 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        let oracle = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
        assert!((gelu_scalar(1.0) - oracle).abs() < 1e-14);
        assert!((gelu_scalar(1.0) - 0.841345).abs() < 1e-6);
        assert!(gelu_scalar(-10.0).abs() < 1e-6);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn erf_matches_series() {
        for i in -300..=300 {
            let x = i as f64 / 100.0;
            let err = (erf(x) - erf_series(x)).abs();
            assert!(err < 1e-13, "erf({x}) off by {err}");
            assert!((erfc(x) - (1.0 - erf_series(x))).abs() < 1e-13);
        }
        // Far tail: erfc(5) = 1.5374597944280348e-12.
        assert!((erfc(5.0) / 1.537_459_794_428_034_8e-12 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for i in -40..=40 {
            let x = i as f64 / 5.0;
            let h = 1e-5;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((gelu_derivative(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn resize_preserves_constants_and_upsamples_bilinearly() {
        let p = Planes::filled(3, 5, 7, 0.25);
        let r = p.resize(11, 3);
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        // 2 -> 4 pixels: interior outputs interpolate at half-pixel centres.
        let p = Planes::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let r = p.resize(1, 4);
        assert_eq!(r.data(), &[0.0, 0.25, 0.75, 1.0]);
    }
}

//! ViT-B/32 forward pass: patchify, embed, prepend the class token, add
//! positional embeddings, run the pre-norm encoder stack, then classify the
//! class-token row with a two-layer GELU head.
//!
//! Linear weights are stored `(in × out)` and applied as `x · W + b`.
//! Patches are flattened in (row within patch, column within patch, channel)
//! order, which fixes the row order of `embed/patch_proj/weight`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{self, Planes, Tensor2};
use crate::weights::WeightSet;

/// Tensor names inside a [`WeightSet`].
pub mod names {
    pub const PATCH_WEIGHT: &str = "embed/patch_proj/weight";
    pub const PATCH_BIAS: &str = "embed/patch_proj/bias";
    pub const CLS_TOKEN: &str = "embed/cls_token";
    pub const POS_EMBED: &str = "embed/pos_embed";
    pub const FINAL_LN_GAMMA: &str = "encoder/final_ln/gamma";
    pub const FINAL_LN_BETA: &str = "encoder/final_ln/beta";
    pub const HEAD_W1: &str = "head/w1";
    pub const HEAD_B1: &str = "head/b1";
    pub const HEAD_W2: &str = "head/w2";
    pub const HEAD_B2: &str = "head/b2";
    pub const HEAD_PREFIX: &str = "head/";

    pub fn layer(index: usize, suffix: &str) -> String {
        format!("encoder/layer_{index:02}/{suffix}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub head_hidden: usize,
    pub num_classes: usize,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::vit_b32()
    }
}

impl ModelConfig {
    /// ViT-B/32 at 224 px with a 24-way two-layer head.
    pub fn vit_b32() -> Self {
        Self {
            image_size: 224,
            channels: 3,
            patch_size: 32,
            hidden_dim: 768,
            layers: 12,
            heads: 12,
            mlp_dim: 3072,
            head_hidden: 768,
            num_classes: 24,
            ln_eps: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("channels", self.channels),
            ("patch_size", self.patch_size),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("mlp_dim", self.mlp_dim),
            ("head_hidden", self.head_hidden),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid("model config", format!("{name} must be positive")));
            }
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::invalid(
                "model config",
                format!("image_size {} is not a multiple of patch_size {}", self.image_size, self.patch_size),
            ));
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(
                "model config",
                format!("hidden_dim {} is not divisible by heads {}", self.hidden_dim, self.heads),
            ));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::invalid("model config", "ln_eps must be positive"));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    /// Every encoder tensor name with its required shape.
    pub fn encoder_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.hidden_dim;
        let mut out = vec![
            (names::PATCH_WEIGHT.to_string(), vec![self.patch_dim(), d]),
            (names::PATCH_BIAS.to_string(), vec![d]),
            (names::CLS_TOKEN.to_string(), vec![1, d]),
            (names::POS_EMBED.to_string(), vec![self.tokens(), d]),
        ];
        for i in 0..self.layers {
            for (suffix, dims) in [
                ("ln1/gamma", vec![d]),
                ("ln1/beta", vec![d]),
                ("attn/wq", vec![d, d]),
                ("attn/bq", vec![d]),
                ("attn/wk", vec![d, d]),
                ("attn/bk", vec![d]),
                ("attn/wv", vec![d, d]),
                ("attn/bv", vec![d]),
                ("attn/wo", vec![d, d]),
                ("attn/bo", vec![d]),
                ("ln2/gamma", vec![d]),
                ("ln2/beta", vec![d]),
                ("mlp/w1", vec![d, self.mlp_dim]),
                ("mlp/b1", vec![self.mlp_dim]),
                ("mlp/w2", vec![self.mlp_dim, d]),
                ("mlp/b2", vec![d]),
            ] {
                out.push((names::layer(i, suffix), dims));
            }
        }
        out.push((names::FINAL_LN_GAMMA.to_string(), vec![d]));
        out.push((names::FINAL_LN_BETA.to_string(), vec![d]));
        out
    }

    pub fn head_shapes(&self) -> Vec<(String, Vec<usize>)> {
        vec![
            (names::HEAD_W1.to_string(), vec![self.hidden_dim, self.head_hidden]),
            (names::HEAD_B1.to_string(), vec![self.head_hidden]),
            (names::HEAD_W2.to_string(), vec![self.head_hidden, self.num_classes]),
            (names::HEAD_B2.to_string(), vec![self.num_classes]),
        ]
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder_shapes().iter().map(|(_, d)| d.iter().product::<usize>()).sum()
    }

    pub fn head_param_count(&self) -> usize {
        self.head_shapes().iter().map(|(_, d)| d.iter().product::<usize>()).sum()
    }

    /// Recovers the geometry from tensor shapes. The attention head count is
    /// not recorded in any shape, so it is taken from `heads` or defaults to
    /// a head width of 64. Head dimensions come from `head/*` tensors when
    /// present and otherwise keep the values in `fallback`.
    pub fn infer(w: &WeightSet, heads: Option<usize>, fallback: &ModelConfig) -> Result<Self> {
        let dims = |name: &str| -> Result<Vec<usize>> {
            w.get(name)
                .map(|t| t.dims().to_vec())
                .ok_or_else(|| Error::MissingTensor(name.to_string()))
        };
        let proj = dims(names::PATCH_WEIGHT)?;
        let pos = dims(names::POS_EMBED)?;
        let (patch_dim, hidden_dim) = match proj[..] {
            [a, b] => (a, b),
            _ => {
                return Err(Error::invalid(
                    "weights",
                    format!("{} has rank {}", names::PATCH_WEIGHT, proj.len()),
                ))
            }
        };
        let n = pos.first().copied().unwrap_or(0).saturating_sub(1);
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || n == 0 {
            return Err(Error::invalid(
                "weights",
                format!("{} rows {} do not form a square patch grid plus one", names::POS_EMBED, n + 1),
            ));
        }
        let channels = fallback.channels;
        let patch_size = ((patch_dim / channels) as f64).sqrt().round() as usize;
        if patch_size * patch_size * channels != patch_dim {
            return Err(Error::invalid(
                "weights",
                format!("patch dimension {patch_dim} is not P²·{channels}"),
            ));
        }
        let layers = (0..).take_while(|&i| w.contains(&names::layer(i, "attn/wq"))).count();
        let mlp_dim = if layers > 0 {
            dims(&names::layer(0, "mlp/w1"))?[1]
        } else {
            fallback.mlp_dim
        };
        let (head_hidden, num_classes) = match (w.get(names::HEAD_W1), w.get(names::HEAD_W2)) {
            (Some(a), Some(b)) if a.dims().len() == 2 && b.dims().len() == 2 => (a.dims()[1], b.dims()[1]),
            _ => (fallback.head_hidden, fallback.num_classes),
        };
        let cfg = ModelConfig {
            image_size: side * patch_size,
            channels,
            patch_size,
            hidden_dim,
            layers,
            heads: heads.unwrap_or((hidden_dim / 64).max(1)),
            mlp_dim,
            head_hidden,
            num_classes,
            ln_eps: fallback.ln_eps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Splits a CHW image into `N × (P²·C)` flattened patches in row-major patch order.
pub fn patchify(img: &Planes, patch: usize) -> Result<Tensor2> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::shape("patchify", format!("{h}x{w} image"), format!("patch {patch}")));
    }
    let per_row = w / patch;
    let n = (h / patch) * per_row;
    let dim = patch * patch * c;
    let mut data = Vec::with_capacity(n * dim);
    for k in 0..n {
        let (py, px) = ((k / per_row) * patch, (k % per_row) * patch);
        for r in 0..patch {
            for col in 0..patch {
                for ch in 0..c {
                    data.push(img.get(ch, py + r, px + col));
                }
            }
        }
    }
    Tensor2::new(n, dim, data)
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &Tensor2, channels: usize, height: usize, width: usize, patch: usize) -> Result<Planes> {
    if patch == 0 || !height.is_multiple_of(patch) || !width.is_multiple_of(patch) {
        return Err(Error::shape(
            "unpatchify",
            format!("{height}x{width} image"),
            format!("patch {patch}"),
        ));
    }
    let per_row = width / patch;
    let n = (height / patch) * per_row;
    if patches.shape() != (n, patch * patch * channels) {
        return Err(Error::shape(
            "unpatchify",
            format!("{}x{}", patches.rows(), patches.cols()),
            format!("{n}x{}", patch * patch * channels),
        ));
    }
    let mut img = Planes::filled(channels, height, width, 0.0);
    for k in 0..n {
        let (py, px) = ((k / per_row) * patch, (k % per_row) * patch);
        let row = patches.row(k);
        for r in 0..patch {
            for col in 0..patch {
                for ch in 0..channels {
                    img.set(ch, py + r, px + col, row[(r * patch + col) * channels + ch]);
                }
            }
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub wq: Tensor2,
    pub bq: Vec<f64>,
    pub wk: Tensor2,
    pub bk: Vec<f64>,
    pub wv: Tensor2,
    pub bv: Vec<f64>,
    pub wo: Tensor2,
    pub bo: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub mlp_w1: Tensor2,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Tensor2,
    pub mlp_b2: Vec<f64>,
}

impl EncoderLayer {
    fn from_weights(w: &WeightSet, i: usize, cfg: &ModelConfig) -> Result<Self> {
        let d = cfg.hidden_dim;
        let m = |s: &str, r, c| w.matrix(&names::layer(i, s), r, c);
        let v = |s: &str, n| w.vector(&names::layer(i, s), n);
        Ok(Self {
            ln1_gamma: v("ln1/gamma", d)?,
            ln1_beta: v("ln1/beta", d)?,
            wq: m("attn/wq", d, d)?,
            bq: v("attn/bq", d)?,
            wk: m("attn/wk", d, d)?,
            bk: v("attn/bk", d)?,
            wv: m("attn/wv", d, d)?,
            bv: v("attn/bv", d)?,
            wo: m("attn/wo", d, d)?,
            bo: v("attn/bo", d)?,
            ln2_gamma: v("ln2/gamma", d)?,
            ln2_beta: v("ln2/beta", d)?,
            mlp_w1: m("mlp/w1", d, cfg.mlp_dim)?,
            mlp_b1: v("mlp/b1", cfg.mlp_dim)?,
            mlp_w2: m("mlp/w2", cfg.mlp_dim, d)?,
            mlp_b2: v("mlp/b2", d)?,
        })
    }

    fn write_weights(&self, w: &mut WeightSet, i: usize) {
        let n = |s: &str| names::layer(i, s);
        w.insert_vector(n("ln1/gamma"), &self.ln1_gamma);
        w.insert_vector(n("ln1/beta"), &self.ln1_beta);
        w.insert_matrix(n("attn/wq"), &self.wq);
        w.insert_vector(n("attn/bq"), &self.bq);
        w.insert_matrix(n("attn/wk"), &self.wk);
        w.insert_vector(n("attn/bk"), &self.bk);
        w.insert_matrix(n("attn/wv"), &self.wv);
        w.insert_vector(n("attn/bv"), &self.bv);
        w.insert_matrix(n("attn/wo"), &self.wo);
        w.insert_vector(n("attn/bo"), &self.bo);
        w.insert_vector(n("ln2/gamma"), &self.ln2_gamma);
        w.insert_vector(n("ln2/beta"), &self.ln2_beta);
        w.insert_matrix(n("mlp/w1"), &self.mlp_w1);
        w.insert_vector(n("mlp/b1"), &self.mlp_b1);
        w.insert_matrix(n("mlp/w2"), &self.mlp_w2);
        w.insert_vector(n("mlp/b2"), &self.mlp_b2);
    }

    /// `x ← x + MHSA(LN(x)); x ← x + MLP(LN(x))`.
    pub fn forward(&self, x: &Tensor2, heads: usize, eps: f64) -> Result<Tensor2> {
        self.forward_impl(x, heads, eps, None)
    }

    /// As [`forward`](Self::forward), also returning each head's attention matrix.
    pub fn forward_traced(&self, x: &Tensor2, heads: usize, eps: f64) -> Result<(Tensor2, Vec<Tensor2>)> {
        let mut attn = Vec::with_capacity(heads);
        let y = self.forward_impl(x, heads, eps, Some(&mut attn))?;
        Ok((y, attn))
    }

    fn forward_impl(&self, x: &Tensor2, heads: usize, eps: f64, mut trace: Option<&mut Vec<Tensor2>>) -> Result<Tensor2> {
        let (t, d) = x.shape();
        if d != self.wq.rows() || heads == 0 || d % heads != 0 {
            return Err(Error::shape(
                "encoder_layer",
                format!("{t}x{d}"),
                format!("{} heads over width {}", heads, self.wq.rows()),
            ));
        }
        let hd = d / heads;
        let scale = 1.0 / (hd as f64).sqrt();

        let h = tensor::layer_norm(x, &self.ln1_gamma, &self.ln1_beta, eps)?;
        let q = tensor::linear(&h, &self.wq, &self.bq)?;
        let k = tensor::linear(&h, &self.wk, &self.bk)?;
        let v = tensor::linear(&h, &self.wv, &self.bv)?;
        let mut context = Tensor2::zeros(t, d);
        for head in 0..heads {
            let cols = head * hd..(head + 1) * hd;
            let qh = q.slice_cols(cols.start, cols.end);
            let kh = k.slice_cols(cols.start, cols.end);
            let vh = v.slice_cols(cols.start, cols.end);
            let scores = tensor::matmul_transposed(&qh, &kh)?.map(|s| s * scale);
            let probs = tensor::softmax_rows(&scores);
            let out = tensor::matmul(&probs, &vh)?;
            for r in 0..t {
                context.row_mut(r)[cols.clone()].copy_from_slice(out.row(r));
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(probs);
            }
        }
        let attn = tensor::linear(&context, &self.wo, &self.bo)?;
        let x = tensor::add(x, &attn)?;

        let h = tensor::layer_norm(&x, &self.ln2_gamma, &self.ln2_beta, eps)?;
        let m = tensor::gelu(&tensor::linear(&h, &self.mlp_w1, &self.mlp_b1)?);
        let m = tensor::linear(&m, &self.mlp_w2, &self.mlp_b2)?;
        tensor::add(&x, &m)
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub embedding: Tensor2,
    /// Output of each encoder layer, before the final layer norm.
    pub layers: Vec<Tensor2>,
    pub features: Vec<f64>,
}

/// The frozen part of the model: everything up to the class-token features.
#[derive(Debug, Clone, PartialEq)]
pub struct VitEncoder {
    cfg: ModelConfig,
    patch_w: Tensor2,
    patch_b: Vec<f64>,
    cls_token: Vec<f64>,
    pos_embed: Tensor2,
    layers: Vec<EncoderLayer>,
    final_gamma: Vec<f64>,
    final_beta: Vec<f64>,
}

impl VitEncoder {
    pub fn from_weights(cfg: &ModelConfig, w: &WeightSet) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.hidden_dim;
        Ok(Self {
            cfg: *cfg,
            patch_w: w.matrix(names::PATCH_WEIGHT, cfg.patch_dim(), d)?,
            patch_b: w.vector(names::PATCH_BIAS, d)?,
            cls_token: w.matrix(names::CLS_TOKEN, 1, d)?.into_data(),
            pos_embed: w.matrix(names::POS_EMBED, cfg.tokens(), d)?,
            layers: (0..cfg.layers)
                .map(|i| EncoderLayer::from_weights(w, i, cfg))
                .collect::<Result<_>>()?,
            final_gamma: w.vector(names::FINAL_LN_GAMMA, d)?,
            final_beta: w.vector(names::FINAL_LN_BETA, d)?,
        })
    }

    /// Seeded random encoder, for reduced test models and smoke runs.
    /// Linear weights are N(0, 1/fan_in); embeddings N(0, 0.02²); norms identity.
    /// Values are rounded through `f32` so saving and reloading is lossless.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden_dim;
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            Tensor2::from_fn(rows, cols, |_, _| dist.sample(&mut rng) as f32 as f64)
        };
        let lecun = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let patch_w = normal(cfg.patch_dim(), d, lecun(cfg.patch_dim()));
        let cls_token = normal(1, d, 0.02).into_data();
        let pos_embed = normal(cfg.tokens(), d, 0.02);
        let layers = (0..cfg.layers)
            .map(|_| EncoderLayer {
                ln1_gamma: vec![1.0; d],
                ln1_beta: vec![0.0; d],
                wq: normal(d, d, lecun(d)),
                bq: vec![0.0; d],
                wk: normal(d, d, lecun(d)),
                bk: vec![0.0; d],
                wv: normal(d, d, lecun(d)),
                bv: vec![0.0; d],
                wo: normal(d, d, lecun(d)),
                bo: vec![0.0; d],
                ln2_gamma: vec![1.0; d],
                ln2_beta: vec![0.0; d],
                mlp_w1: normal(d, cfg.mlp_dim, lecun(d)),
                mlp_b1: vec![0.0; cfg.mlp_dim],
                mlp_w2: normal(cfg.mlp_dim, d, lecun(cfg.mlp_dim)),
                mlp_b2: vec![0.0; d],
            })
            .collect();
        Ok(Self {
            cfg: *cfg,
            patch_w,
            patch_b: vec![0.0; d],
            cls_token,
            pos_embed,
            layers,
            final_gamma: vec![1.0; d],
            final_beta: vec![0.0; d],
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[EncoderLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [EncoderLayer] {
        &mut self.layers
    }

    pub fn to_weights(&self) -> WeightSet {
        let mut w = WeightSet::new();
        w.insert_matrix(names::PATCH_WEIGHT, &self.patch_w);
        w.insert_vector(names::PATCH_BIAS, &self.patch_b);
        w.insert_matrix(names::CLS_TOKEN, &Tensor2::row_vector(&self.cls_token));
        w.insert_matrix(names::POS_EMBED, &self.pos_embed);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.write_weights(&mut w, i);
        }
        w.insert_vector(names::FINAL_LN_GAMMA, &self.final_gamma);
        w.insert_vector(names::FINAL_LN_BETA, &self.final_beta);
        w
    }

    /// Replaces the embedding parameters; used to probe embedding behaviour.
    pub fn set_embedding(&mut self, patch_w: Tensor2, patch_b: Vec<f64>, cls_token: Vec<f64>, pos_embed: Tensor2) -> Result<()> {
        let d = self.cfg.hidden_dim;
        if patch_w.shape() != (self.cfg.patch_dim(), d)
            || patch_b.len() != d
            || cls_token.len() != d
            || pos_embed.shape() != (self.cfg.tokens(), d)
        {
            return Err(Error::shape("set_embedding", format!("hidden width {d}"), "replacement tensors"));
        }
        self.patch_w = patch_w;
        self.patch_b = patch_b;
        self.cls_token = cls_token;
        self.pos_embed = pos_embed;
        Ok(())
    }

    /// `concat(cls, patches · W + b) + pos`.
    pub fn embed(&self, patches: &Tensor2) -> Result<Tensor2> {
        let n = self.cfg.num_patches();
        if patches.shape() != (n, self.cfg.patch_dim()) {
            return Err(Error::shape(
                "embed",
                format!("{}x{}", patches.rows(), patches.cols()),
                format!("{n}x{}", self.cfg.patch_dim()),
            ));
        }
        let projected = tensor::linear(patches, &self.patch_w, &self.patch_b)?;
        let d = self.cfg.hidden_dim;
        let mut tokens = Tensor2::zeros(n + 1, d);
        tokens.row_mut(0).copy_from_slice(&self.cls_token);
        for r in 0..n {
            tokens.row_mut(r + 1).copy_from_slice(projected.row(r));
        }
        tensor::add(&tokens, &self.pos_embed)
    }

    fn check_input(&self, img: &Planes) -> Result<()> {
        let s = self.cfg.image_size;
        if (img.channels(), img.height(), img.width()) != (self.cfg.channels, s, s) {
            return Err(Error::shape(
                "forward",
                format!("{}x{}x{} input", img.channels(), img.height(), img.width()),
                format!("{}x{s}x{s} expected", self.cfg.channels),
            ));
        }
        Ok(())
    }

    pub fn trace(&self, img: &Planes) -> Result<Trace> {
        self.check_input(img)?;
        let embedding = self.embed(&patchify(img, self.cfg.patch_size)?)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut x = embedding.clone();
        for layer in &self.layers {
            x = layer.forward(&x, self.cfg.heads, self.cfg.ln_eps)?;
            layers.push(x.clone());
        }
        let features = self.final_features(&x)?;
        Ok(Trace {
            embedding,
            layers,
            features,
        })
    }

    /// The post-final-layernorm class-token row: the head's input.
    pub fn extract_features(&self, img: &Planes) -> Result<Vec<f64>> {
        self.check_input(img)?;
        let mut x = self.embed(&patchify(img, self.cfg.patch_size)?)?;
        for layer in &self.layers {
            x = layer.forward(&x, self.cfg.heads, self.cfg.ln_eps)?;
        }
        self.final_features(&x)
    }

    fn final_features(&self, x: &Tensor2) -> Result<Vec<f64>> {
        let cls = Tensor2::row_vector(x.row(0));
        Ok(tensor::layer_norm(&cls, &self.final_gamma, &self.final_beta, self.cfg.ln_eps)?.into_data())
    }
}

/// The trainable two-layer classifier: `W2 · gelu(W1 · x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w2: Tensor2,
    pub b2: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Tensor2::zeros(input, hidden),
            b1: vec![0.0; hidden],
            w2: Tensor2::zeros(hidden, classes),
            b2: vec![0.0; classes],
        }
    }

    /// W1, W2 uniform in ±1/√fan_in; biases zero.
    pub fn init_uniform(input: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            Tensor2::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
        };
        let w1 = uniform(input, hidden);
        let w2 = uniform(hidden, classes);
        Self {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
        }
    }

    pub fn from_weights(w: &WeightSet, input: usize, hidden: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            w1: w.matrix(names::HEAD_W1, input, hidden)?,
            b1: w.vector(names::HEAD_B1, hidden)?,
            w2: w.matrix(names::HEAD_W2, hidden, classes)?,
            b2: w.vector(names::HEAD_B2, classes)?,
        })
    }

    /// The four head tensors, suitable for an overlay checkpoint.
    pub fn to_weights(&self) -> WeightSet {
        let mut w = WeightSet::new();
        w.insert_matrix(names::HEAD_W1, &self.w1);
        w.insert_vector(names::HEAD_B1, &self.b1);
        w.insert_matrix(names::HEAD_W2, &self.w2);
        w.insert_vector(names::HEAD_B2, &self.b2);
        w
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w1.data().len() + self.b1.len() + self.w2.data().len() + self.b2.len()
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_parts(features)?.2)
    }

    /// Returns (pre-activation, activation, logits).
    pub fn forward_parts(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if features.len() != self.input_dim() {
            return Err(Error::shape(
                "head",
                format!("{} features", features.len()),
                format!("{} inputs", self.input_dim()),
            ));
        }
        let x = Tensor2::row_vector(features);
        let z1 = tensor::linear(&x, &self.w1, &self.b1)?;
        let a1 = tensor::gelu(&z1);
        let logits = tensor::linear(&a1, &self.w2, &self.b2)?;
        Ok((z1.into_data(), a1.into_data(), logits.into_data()))
    }
}

/// Encoder plus head.
#[derive(Debug, Clone, PartialEq)]
pub struct VitModel {
    pub encoder: VitEncoder,
    pub head: HeadParams,
}

impl VitModel {
    /// Builds the full model; every tensor named by `cfg` must be present.
    pub fn from_weights(cfg: &ModelConfig, w: &WeightSet) -> Result<Self> {
        let encoder = VitEncoder::from_weights(cfg, w)?;
        let head = HeadParams::from_weights(w, cfg.hidden_dim, cfg.head_hidden, cfg.num_classes)?;
        Ok(Self { encoder, head })
    }

    pub fn to_weights(&self) -> WeightSet {
        let mut w = self.encoder.to_weights();
        w.overlay(&self.head.to_weights());
        w
    }

    pub fn forward(&self, img: &Planes) -> Result<Vec<f64>> {
        self.head.forward(&self.encoder.extract_features(img)?)
    }

    pub fn extract_features(&self, img: &Planes) -> Result<Vec<f64>> {
        self.encoder.extract_features(img)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Indices of the `k` most probable classes, most probable first; ties
    /// keep the lower index first.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.probabilities.len()).collect();
        idx.sort_by(|&a, &b| self.probabilities[b].total_cmp(&self.probabilities[a]).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i, self.probabilities[i])).collect()
    }
}

/// Softmax probabilities and the arg-max class (lowest index on ties).
pub fn predict(logits: &[f64]) -> Prediction {
    let mut probabilities = logits.to_vec();
    tensor::softmax_in_place(&mut probabilities);
    Prediction {
        class: argmax(logits),
        probabilities,
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

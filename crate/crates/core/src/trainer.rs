//! Head-only transfer training with Adam and cross-entropy.
//!
//! The encoder is borrowed immutably, so it cannot change. Features are
//! either extracted once up front or recomputed whenever they are needed;
//! the two paths feed identical numbers into identical arithmetic.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::SampleSource;
use crate::error::{Error, Result};
use crate::evaluator::{accuracy, confusion, ConfusionMatrix};
use crate::fsutil;
use crate::qscan::Normalization;
use crate::tensor::{self, gelu_derivative, Tensor2};
use crate::vit::{argmax, HeadParams, VitEncoder};
use crate::weights::{save_weights, WeightSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInit {
    /// W1, W2 uniform in ±1/√fan_in, biases zero.
    Uniform,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub feature_cache: bool,
    pub head_init: HeadInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 15,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            feature_cache: true,
            head_init: HeadInit::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", format!("{} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::invalid(
                "adam",
                format!("betas ({}, {}) must lie in [0,1), eps {} > 0", self.beta1, self.beta2, self.eps),
            ));
        }
        Ok(())
    }
}

/// `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::invalid(
            "label",
            format!("{label} out of range for {} classes", logits.len()),
        ));
    }
    Ok(log_sum_exp(logits) - logits[label])
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Loss and its exact gradient with respect to every head tensor.
pub fn head_backward(features: &[f64], label: usize, h: &HeadParams) -> Result<(f64, HeadParams)> {
    let (z1, a1, logits) = h.forward_parts(features)?;
    let loss = cross_entropy(&logits, label)?;
    let mut dl = logits;
    tensor::softmax_in_place(&mut dl);
    dl[label] -= 1.0;

    let (hid, k) = (h.hidden_dim(), h.num_classes());
    let w2 = Tensor2::from_fn(hid, k, |i, j| a1[i] * dl[j]);
    let dz: Vec<f64> = (0..hid)
        .map(|i| {
            let da: f64 = h.w2.row(i).iter().zip(&dl).map(|(w, d)| w * d).sum();
            da * gelu_derivative(z1[i])
        })
        .collect();
    let w1 = Tensor2::from_fn(features.len(), hid, |i, j| features[i] * dz[j]);
    Ok((loss, HeadParams { w1, b1: dz, w2, b2: dl }))
}

/// Mean loss and mean gradient over a batch. Equivalent to averaging
/// [`head_backward`] but expressed as matrix products; the reduction order
/// over samples is fixed, so results do not depend on thread count.
pub fn batch_backward(features: &[&[f64]], labels: &[usize], h: &HeadParams) -> Result<(f64, HeadParams)> {
    let b = features.len();
    if b == 0 || labels.len() != b {
        return Err(Error::shape(
            "batch_backward",
            format!("{b} feature rows"),
            format!("{} labels", labels.len()),
        ));
    }
    let d = h.input_dim();
    let mut xd = Vec::with_capacity(b * d);
    for f in features {
        if f.len() != d {
            return Err(Error::shape(
                "batch_backward",
                format!("{} features", f.len()),
                format!("{d} inputs"),
            ));
        }
        xd.extend_from_slice(f);
    }
    let x = Tensor2::new(b, d, xd)?;
    let z1 = tensor::linear(&x, &h.w1, &h.b1)?;
    let a1 = tensor::gelu(&z1);
    let mut dl = tensor::linear(&a1, &h.w2, &h.b2)?;
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = dl.row_mut(r);
        loss += cross_entropy(row, y)?;
        tensor::softmax_in_place(row);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    let w2 = tensor::matmul(&a1.transpose(), &dl)?;
    let b2 = column_sums(&dl);
    let mut dz = tensor::matmul_transposed(&dl, &h.w2)?;
    for (g, z) in dz.data_mut().iter_mut().zip(z1.data()) {
        *g *= gelu_derivative(*z);
    }
    let w1 = tensor::matmul(&x.transpose(), &dz)?;
    let b1 = column_sums(&dz);
    Ok((loss * scale, HeadParams { w1, b1, w2, b2 }))
}

fn column_sums(t: &Tensor2) -> Vec<f64> {
    let mut out = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        for (o, v) in out.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}

fn parts(h: &HeadParams) -> [&[f64]; 4] {
    [h.w1.data(), &h.b1, h.w2.data(), &h.b2]
}

fn parts_mut(h: &mut HeadParams) -> [&mut [f64]; 4] {
    [h.w1.data_mut(), &mut h.b1, h.w2.data_mut(), &mut h.b2]
}

/// First and second moment estimates for every head parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: HeadParams,
    pub v: HeadParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(h: &HeadParams) -> Self {
        let z = HeadParams::zeros(h.input_dim(), h.hidden_dim(), h.num_classes());
        Self { m: z.clone(), v: z, t: 0 }
    }

    /// One bias-corrected Adam update of `h` in place.
    pub fn step(&mut self, h: &mut HeadParams, g: &HeadParams, cfg: &TrainConfig) -> Result<()> {
        let shape = |p: &HeadParams| (p.input_dim(), p.hidden_dim(), p.num_classes());
        if shape(h) != shape(g) || shape(h) != shape(&self.m) {
            return Err(Error::shape("adam_step", format!("{:?}", shape(h)), format!("{:?}", shape(g))));
        }
        self.t += 1;
        let (c1, c2) = bias_corrections(cfg, self.t);
        for (((p, g), m), v) in parts_mut(h)
            .into_iter()
            .zip(parts(g))
            .zip(parts_mut(&mut self.m))
            .zip(parts_mut(&mut self.v))
        {
            adam_update(p, g, m, v, c1, c2, cfg);
        }
        Ok(())
    }
}

fn bias_corrections(cfg: &TrainConfig, t: u64) -> (f64, f64) {
    let t = t as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], c1: f64, c2: f64, cfg: &TrainConfig) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
    }
}

/// Pure form of [`AdamState::step`].
pub fn adam_step(h: &HeadParams, g: &HeadParams, state: &AdamState, cfg: &TrainConfig) -> Result<(HeadParams, AdamState)> {
    let (mut h, mut s) = (h.clone(), state.clone());
    s.step(&mut h, g, cfg)?;
    Ok((h, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Mean of the per-batch losses seen while updating.
    pub batch_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainReport {
    /// `epoch,train_loss,train_acc,val_loss,val_acc`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            writeln!(s, "{},{},{},{},{}", e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc).unwrap();
        }
        s
    }
}

/// Full-pass metrics of a head on precomputed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

pub fn evaluate_head(h: &HeadParams, features: &[Vec<f64>], labels: &[usize], class_labels: &[String]) -> Result<Evaluation> {
    let out: Vec<(f64, usize)> = features
        .par_iter()
        .zip(labels)
        .map(|(f, &y)| {
            let logits = h.forward(f)?;
            Ok((cross_entropy(&logits, y)?, argmax(&logits)))
        })
        .collect::<Result<_>>()?;
    let loss = out.iter().map(|o| o.0).sum::<f64>() / out.len().max(1) as f64;
    let predictions: Vec<usize> = out.iter().map(|o| o.1).collect();
    let confusion = confusion(&predictions, labels, class_labels)?;
    let accuracy = accuracy(&confusion)?;
    Ok(Evaluation {
        loss,
        predictions,
        confusion,
        accuracy,
    })
}

/// Encodes every sample of `src`, in order.
pub fn extract_all(encoder: &VitEncoder, src: &dyn SampleSource) -> Result<Vec<Vec<f64>>> {
    (0..src.len())
        .into_par_iter()
        .map(|i| encoder.extract_features(&src.load(i)?))
        .collect()
}

fn labels_of(src: &dyn SampleSource) -> Vec<usize> {
    (0..src.len()).map(|i| src.label(i)).collect()
}

pub fn init_head(input: usize, hidden: usize, classes: usize, cfg: &TrainConfig) -> HeadParams {
    match cfg.head_init {
        HeadInit::Zeros => HeadParams::zeros(input, hidden, classes),
        HeadInit::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u64::MAX);
            HeadParams::init_uniform(input, hidden, classes, &mut rng)
        }
    }
}

/// Sample order for `epoch` (0-based).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub best_head: HeadParams,
    pub final_head: HeadParams,
}

/// Trains a fresh head on `train`, selecting the epoch with the highest
/// validation accuracy (earliest on ties).
pub fn train(
    encoder: &VitEncoder,
    train_set: &dyn SampleSource,
    val_set: &dyn SampleSource,
    class_labels: &[String],
    head_hidden: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(
            "dataset",
            format!("empty split (train {}, val {})", train_set.len(), val_set.len()),
        ));
    }
    let k = class_labels.len();
    let (train_labels, val_labels) = (labels_of(train_set), labels_of(val_set));
    if let Some(&bad) = train_labels.iter().chain(&val_labels).find(|&&l| l >= k) {
        return Err(Error::invalid("label", format!("{bad} out of range for {k} classes")));
    }

    let cache = if cfg.feature_cache {
        log::info!("extracting features for {} + {} samples", train_set.len(), val_set.len());
        Some((extract_all(encoder, train_set)?, extract_all(encoder, val_set)?))
    } else {
        None
    };
    let fetch = |src: &dyn SampleSource, idx: &[usize]| -> Result<Vec<Vec<f64>>> {
        idx.par_iter().map(|&i| encoder.extract_features(&src.load(i)?)).collect()
    };
    let all = |src: &dyn SampleSource, cached: Option<&Vec<Vec<f64>>>| -> Result<Vec<Vec<f64>>> {
        match cached {
            Some(c) => Ok(c.clone()),
            None => extract_all(encoder, src),
        }
    };

    let d = encoder.config().hidden_dim;
    let mut head = init_head(d, head_hidden, k, cfg);
    let mut adam = AdamState::new(&head);
    let mut best: Option<(usize, f64, HeadParams)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = epoch_order(train_set.len(), cfg.seed, epoch);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            let owned;
            let feats: Vec<&[f64]> = match &cache {
                Some((tf, _)) => batch.iter().map(|&i| tf[i].as_slice()).collect(),
                None => {
                    owned = fetch(train_set, batch)?;
                    owned.iter().map(Vec::as_slice).collect()
                }
            };
            let labels: Vec<usize> = batch.iter().map(|&i| train_labels[i]).collect();
            let (loss, grads) = batch_backward(&feats, &labels, &head)?;
            adam.step(&mut head, &grads, cfg)?;
            batch_losses.push(loss);
        }

        let tr = evaluate_head(&head, &all(train_set, cache.as_ref().map(|c| &c.0))?, &train_labels, class_labels)?;
        let va = evaluate_head(&head, &all(val_set, cache.as_ref().map(|c| &c.1))?, &val_labels, class_labels)?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: va.loss,
            val_acc: va.accuracy,
            batch_loss: batch_losses.iter().sum::<f64>() / batch_losses.len() as f64,
        };
        log::info!(
            "epoch {:>2}: train loss {:.4} acc {:.4} | val loss {:.4} acc {:.4}",
            rec.epoch,
            rec.train_loss,
            rec.train_acc,
            rec.val_loss,
            rec.val_acc
        );
        if best.as_ref().is_none_or(|b| rec.val_acc > b.1) {
            best = Some((rec.epoch, rec.val_acc, head.clone()));
        }
        records.push(rec);
    }

    let (best_epoch, best_val_acc, best_head) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        report: TrainReport {
            epochs: records,
            best_epoch,
            best_val_acc,
        },
        best_head,
        final_head: head,
    })
}

pub const HEAD_FILE: &str = "head.vitw";
pub const CLASSES_FILE: &str = "head.classes";
pub const NORM_FILE: &str = "head.norm";
pub const REPORT_FILE: &str = "train_report.csv";

/// Writes the head overlay, its class list (one label per line) and the
/// input normalization it was trained with to `dir`.
pub fn save_checkpoint(dir: &Path, head: &HeadParams, class_labels: &[String], norm: &Normalization) -> Result<()> {
    fsutil::create_dir_all(dir)?;
    save_weights(&head.to_weights(), &dir.join(HEAD_FILE))?;
    let mut text = class_labels.join("\n");
    text.push('\n');
    fsutil::write_atomic(&dir.join(CLASSES_FILE), text.as_bytes())?;
    fsutil::write_atomic(&dir.join(NORM_FILE), norm.to_text().as_bytes())
}

/// Normalization saved next to a head overlay, if present.
pub fn read_head_normalization(head_path: &Path) -> Result<Option<Normalization>> {
    let path = head_path.with_extension("norm");
    if !path.exists() {
        return Ok(None);
    }
    let kv = fsutil::parse_key_values(&fsutil::read_text(&path)?, &path)?;
    Normalization::from_key_values(&kv, &path)
}

/// Class labels saved next to a head overlay, if present.
pub fn read_class_labels(head_path: &Path) -> Result<Option<Vec<String>>> {
    let path = head_path.with_extension("classes");
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(
        fsutil::read_text(&path)?
            .lines()
            .map(str::to_string)
            .filter(|l| !l.is_empty())
            .collect(),
    ))
}

pub fn head_from_overlay(w: &WeightSet) -> Result<HeadParams> {
    use crate::vit::names;
    let w1 = w.get(names::HEAD_W1).ok_or_else(|| Error::MissingTensor(names::HEAD_W1.into()))?;
    let w2 = w.get(names::HEAD_W2).ok_or_else(|| Error::MissingTensor(names::HEAD_W2.into()))?;
    match (w1.dims(), w2.dims()) {
        ([d, h], [h2, k]) if h == h2 => HeadParams::from_weights(w, *d, *h, *k),
        (a, b) => Err(Error::invalid("head overlay", format!("inconsistent shapes {a:?} and {b:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_head(d: usize, hid: usize, k: usize, seed: u64) -> HeadParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = HeadParams::init_uniform(d, hid, k, &mut rng);
        h.b1.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        h.b2.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        h
    }

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy(&[0.0; 24], 3).unwrap() - 24f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[1000.0, 0.0], 0).unwrap() < 1e-12);
        assert!(cross_entropy(&[0.0; 3], 3).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let l: Vec<f64> = (0..24).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y = rng.gen_range(0..24);
            let z: f64 = l.iter().map(|v| v.exp()).sum();
            let brute = -(l[y].exp() / z).ln();
            let ce = cross_entropy(&l, y).unwrap();
            assert!(ce >= 0.0 && (ce - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_output_gradient_is_softmax_minus_onehot() {
        let h = HeadParams::zeros(8, 5, 24);
        let (loss, g) = head_backward(&[0.3; 8], 7, &h).unwrap();
        assert!((loss - 24f64.ln()).abs() < 1e-12);
        for (j, v) in g.b2.iter().enumerate() {
            let want = 1.0 / 24.0 - if j == 7 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-15);
        }
        assert!(g.w1.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let h = random_head(12, 7, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let feats: Vec<Vec<f64>> = (0..9).map(|_| (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<usize> = (0..9).map(|i| i % 5).collect();
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let (loss, g) = batch_backward(&refs, &labels, &h).unwrap();
        let mut mean_loss = 0.0;
        let mut acc = HeadParams::zeros(12, 7, 5);
        for (f, &y) in feats.iter().zip(&labels) {
            let (l, gi) = head_backward(f, y, &h).unwrap();
            mean_loss += l / 9.0;
            for (a, b) in parts_mut(&mut acc).into_iter().zip(parts(&gi)) {
                a.iter_mut().zip(b).for_each(|(a, b)| *a += b / 9.0);
            }
        }
        assert!((loss - mean_loss).abs() < 1e-12);
        for (a, b) in parts(&acc).into_iter().zip(parts(&g)) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_examples() {
        let cfg = TrainConfig::default();
        let h = random_head(4, 3, 2, 5);
        let zero = HeadParams::zeros(4, 3, 2);
        let (h1, s1) = adam_step(&h, &zero, &AdamState::new(&h), &cfg).unwrap();
        assert_eq!(h1, h);
        assert_eq!(s1.t, 1);

        let mut g = zero.clone();
        g.b2 = vec![0.3, -2.0];
        let (h2, _) = adam_step(&h, &g, &AdamState::new(&h), &cfg).unwrap();
        for j in 0..2 {
            let step = h.b2[j] - h2.b2[j];
            assert!((step.abs() - cfg.learning_rate).abs() < 1e-7, "{step}");
            assert_eq!(step.signum(), g.b2[j].signum());
        }

        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        let (mut x, mut m, mut v) = ([1.0], [0.0], [0.0]);
        for t in 1..=100 {
            let g = [2.0 * x[0]];
            let (c1, c2) = bias_corrections(&cfg, t);
            adam_update(&mut x, &g, &mut m, &mut v, c1, c2, &cfg);
        }
        assert!(x[0].abs() < 0.5, "{}", x[0]);
        assert!(v[0] >= 0.0);
    }

    #[test]
    fn epoch_orders_are_seeded_permutations() {
        let a = epoch_order(50, 1, 0);
        assert_eq!(a, epoch_order(50, 1, 0));
        assert_ne!(a, epoch_order(50, 1, 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let rec = |e| EpochRecord {
            epoch: e,
            train_loss: 0.5,
            train_acc: 0.75,
            val_loss: 0.25,
            val_acc: 1.0,
            batch_loss: 0.5,
        };
        let r = TrainReport {
            epochs: vec![rec(1), rec(2)],
            best_epoch: 1,
            best_val_acc: 1.0,
        };
        assert_eq!(
            r.to_csv(),
            "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.75,0.25,1\n2,0.5,0.75,0.25,1\n"
        );
    }

    #[test]
    fn checkpoint_round_trips_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let h = random_head(6, 4, 3, 8);
        let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        save_checkpoint(dir.path(), &h, &labels, &Normalization::IMAGENET).unwrap();
        let w = crate::weights::load_weights(&dir.path().join(HEAD_FILE)).unwrap();
        assert_eq!(w.len(), 4);
        let back = head_from_overlay(&w).unwrap();
        assert_eq!(back.to_weights(), h.to_weights());
        assert_eq!(read_class_labels(&dir.path().join(HEAD_FILE)).unwrap().unwrap(), labels);
        assert_eq!(
            read_head_normalization(&dir.path().join(HEAD_FILE)).unwrap(),
            Some(Normalization::IMAGENET)
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                beta2: 1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}

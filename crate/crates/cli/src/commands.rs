use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glitchvit::dataset::{self, DatasetManifest, ManifestSplit, SampleSource, Split};
use glitchvit::evaluator;
use glitchvit::fsutil;
use glitchvit::goldens::{self, TOLERANCE};
use glitchvit::qscan::{self, Ceiling, GlitchImage, Normalization, QScanConfig, RenderParams};
use glitchvit::synth::{self, GlitchKind, SynthParams};
use glitchvit::trainer::{self, HeadInit, TrainConfig};
use glitchvit::vit::{self, HeadParams, ModelConfig, VitEncoder};
use glitchvit::weights::{self, ExportManifest, WeightSet};
use glitchvit::Error;

use crate::config::Settings;
use crate::Command;

/// 1 for I/O failures, 2 for everything the user can fix by changing input.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return if err.is_io() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

pub fn run(cmd: Command, config: Option<&Path>) -> Result<()> {
    let mut s = Settings::load(config)?;
    match cmd {
        Command::Qscan { strain, event_gps, q, out } => {
            s.flag("q", q);
            cmd_qscan(&s, &strain, event_gps, &out)
        }
        Command::Ingest { root, out } => cmd_ingest(&s, &root, &out),
        Command::Split {
            manifest,
            seed,
            out,
            balance,
        } => {
            s.flag("seed", seed);
            cmd_split(&s, &manifest, out.as_deref(), &balance)
        }
        Command::Train {
            manifest,
            weights,
            out_dir,
            seed,
            epochs,
            learning_rate,
            batch_size,
        } => {
            s.flag("seed", seed);
            s.flag("epochs", epochs);
            s.flag("learning_rate", learning_rate);
            s.flag("batch_size", batch_size);
            cmd_train(&s, &manifest, &weights, &out_dir)
        }
        Command::Eval {
            manifest,
            weights,
            head,
            out_dir,
        } => cmd_eval(&s, &manifest, &weights, &head, &out_dir),
        Command::Predict { image, weights, head } => cmd_predict(&s, &image, &weights, &head),
        Command::Synth { kind, out, seed } => {
            s.flag("seed", seed);
            cmd_synth(&s, &kind, &out)
        }
        Command::SynthDataset { root, per_class, seed } => {
            s.flag("seed", seed);
            cmd_synth_dataset(&s, &root, per_class)
        }
        Command::InitWeights { out, seed } => {
            s.flag("seed", seed);
            cmd_init_weights(&s, &out)
        }
        Command::CheckGoldens { weights, goldens, head } => cmd_check_goldens(&s, &weights, &goldens, head.as_deref()),
    }
}

fn start(s: &Settings, name: &str) -> Result<()> {
    s.reject_unknown()?;
    s.echo(name);
    Ok(())
}

fn reproducibility(s: &Settings, seed: Option<u64>, weights_crc: Option<u32>) {
    let seed = seed.map_or("-".to_string(), |v| v.to_string());
    let crc = weights_crc.map_or("-".to_string(), |c| format!("{c:08x}"));
    eprintln!("reproducibility: seed={seed} config_sha256={} weights_crc32={crc}", s.digest());
}

fn qscan_config(s: &Settings) -> Result<QScanConfig> {
    let d = QScanConfig::default();
    Ok(QScanConfig {
        segment_length: s.get("segment_length", d.segment_length)?,
        q: s.get("q", d.q)?,
        f_min: s.get("f_min", d.f_min)?,
        f_max: s.get("f_max", d.f_max)?,
        time_bins: s.get("time_bins", d.time_bins)?,
        freq_bins: s.get("freq_bins", d.freq_bins)?,
        render: RenderParams {
            crop_half_width: s.get("crop_half_width", d.render.crop_half_width)?,
            ceiling: match s.get_opt::<f64>("ceiling_fixed")? {
                Some(v) => Ceiling::Fixed(v),
                None => Ceiling::Percentile(s.get("ceiling_percentile", 99.5)?),
            },
            size: qscan::IMAGE_SIZE,
        },
    })
}

fn cmd_qscan(s: &Settings, strain: &Path, event: f64, out: &Path) -> Result<()> {
    let cfg = qscan_config(s)?;
    start(s, "qscan")?;
    let series = qscan::load_strain(strain)?;
    let img = qscan::qscan(&series, event, &cfg)?;
    img.save_png(out)?;
    log::info!("wrote {} ({}x{})", out.display(), img.width(), img.height());
    reproducibility(s, None, None);
    Ok(())
}

fn cmd_ingest(s: &Settings, root: &Path, out: &Path) -> Result<()> {
    start(s, "ingest")?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fsutil::create_dir_all(dir)?;
    let m = dataset::ingest(root, dir)?;
    m.save(out)?;
    log::info!("wrote {} entries over {} classes to {}", m.len(), m.num_classes(), out.display());
    reproducibility(s, None, None);
    Ok(())
}

fn cmd_split(s: &Settings, manifest: &Path, out: Option<&Path>, balance: &[String]) -> Result<()> {
    let seed: u64 = s.get("seed", 0)?;
    let ratios = [s.get("ratio_train", 7.0)?, s.get("ratio_val", 1.5)?, s.get("ratio_test", 1.5)?];
    start(s, "split")?;
    let mut m = DatasetManifest::load(manifest)?;
    for item in balance {
        let (label, cap) = item
            .rsplit_once(':')
            .and_then(|(l, c)| c.parse::<usize>().ok().map(|c| (l, c)))
            .ok_or_else(|| Error::Invalid {
                what: "--balance",
                reason: format!("`{item}` is not LABEL:CAP"),
            })?;
        m = dataset::balance_class(&m, label, cap, seed)?;
    }
    let m = dataset::split_dataset(&m, ratios, seed)?;
    m.save(out.unwrap_or(manifest))?;
    println!("label,train,val,test");
    let mut totals = [0usize; 3];
    for (label, c) in m.classes().iter().zip(m.split_counts()) {
        println!("{label},{},{},{}", c[0], c[1], c[2]);
        for i in 0..3 {
            totals[i] += c[i];
        }
    }
    println!("total,{},{},{}", totals[0], totals[1], totals[2]);
    reproducibility(s, Some(seed), None);
    Ok(())
}

struct LoadedWeights {
    set: WeightSet,
    crc: u32,
    manifest: Option<ExportManifest>,
}

fn manifest_path(weights: &Path) -> PathBuf {
    weights.with_extension("manifest")
}

fn load_base_weights(path: &Path) -> Result<LoadedWeights> {
    let (set, crc) = weights::read_weight_file(path)?;
    let mp = manifest_path(path);
    let manifest = if mp.exists() { Some(ExportManifest::read(&mp)?) } else { None };
    if let Some(m) = &manifest {
        if m.param_count != set.param_count() {
            bail!(Error::Invalid {
                what: "weights",
                reason: format!(
                    "{} declares {} parameters but {} holds {}",
                    mp.display(),
                    m.param_count,
                    path.display(),
                    set.param_count()
                ),
            });
        }
    }
    Ok(LoadedWeights { set, crc, manifest })
}

fn model_config(s: &Settings, w: &WeightSet, num_classes: usize) -> Result<ModelConfig> {
    let fallback = ModelConfig {
        head_hidden: s.get("head_hidden", ModelConfig::vit_b32().head_hidden)?,
        num_classes,
        ..ModelConfig::vit_b32()
    };
    let heads = s.get_opt::<usize>("heads")?;
    let mut cfg = ModelConfig::infer(w, heads, &fallback)?;
    cfg.head_hidden = fallback.head_hidden;
    cfg.num_classes = num_classes;
    s.record("heads", &cfg.heads);
    s.record("image_size", &cfg.image_size);
    Ok(cfg)
}

/// Explicit `norm_*` keys, then the head's sidecar, then `normalization`
/// (`auto` uses the weight manifest when present, else ImageNet).
fn normalization(
    s: &Settings,
    head_norm: Option<Normalization>,
    base: &LoadedWeights,
    from_data: impl FnOnce() -> Result<Normalization>,
) -> Result<Normalization> {
    let keys = [
        "norm_mean_r",
        "norm_mean_g",
        "norm_mean_b",
        "norm_std_r",
        "norm_std_g",
        "norm_std_b",
    ];
    let mode: String = s.get("normalization", "auto".to_string())?;
    let mut explicit = std::collections::BTreeMap::new();
    for k in keys {
        if let Some(v) = s.get_opt::<String>(k)? {
            explicit.insert(k.to_string(), v);
        }
    }
    let norm = if let Some(n) = Normalization::from_key_values(&explicit, Path::new("config"))? {
        n
    } else if let Some(n) = head_norm {
        n
    } else {
        match mode.as_str() {
            "dataset" => from_data()?,
            "imagenet" => Normalization::IMAGENET,
            "auto" => base.manifest.as_ref().map_or(Normalization::IMAGENET, |m| Normalization {
                mean: m.norm_mean,
                std: m.norm_std,
            }),
            other => bail!(Error::Invalid {
                what: "normalization",
                reason: format!("`{other}` (expected auto, imagenet or dataset)"),
            }),
        }
    };
    for (k, v) in keys.iter().zip(norm.mean.iter().chain(&norm.std)) {
        s.record(k, v);
    }
    Ok(norm)
}

fn train_config(s: &Settings) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let head_init = match s.get("head_init", "uniform".to_string())?.as_str() {
        "uniform" => HeadInit::Uniform,
        "zeros" => HeadInit::Zeros,
        other => bail!(Error::Invalid {
            what: "head_init",
            reason: format!("`{other}` (expected uniform or zeros)"),
        }),
    };
    let cfg = TrainConfig {
        learning_rate: s.get("learning_rate", d.learning_rate)?,
        batch_size: s.get("batch_size", d.batch_size)?,
        epochs: s.get("epochs", d.epochs)?,
        seed: s.get("seed", d.seed)?,
        beta1: s.get("beta1", d.beta1)?,
        beta2: s.get("beta2", d.beta2)?,
        eps: s.get("eps", d.eps)?,
        feature_cache: s.get("feature_cache", d.feature_cache)?,
        head_init,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(s: &Settings, manifest: &Path, weights_path: &Path, out_dir: &Path) -> Result<()> {
    let m = DatasetManifest::load(manifest)?;
    let base = load_base_weights(weights_path)?;
    let cfg = train_config(s)?;
    let model = model_config(s, &base.set, m.num_classes())?;
    let norm = normalization(s, None, &base, || Ok(dataset::channel_stats(&m, Split::Train, model.image_size)?))?;
    start(s, "train")?;

    let encoder = VitEncoder::from_weights(&model, &base.set).context("building encoder")?;
    let train_set = ManifestSplit::new(&m, Split::Train, model.image_size, norm);
    let val_set = ManifestSplit::new(&m, Split::Val, model.image_size, norm);
    log::info!("training on {} samples, validating on {}", train_set.len(), val_set.len());
    let out = trainer::train(&encoder, &train_set, &val_set, m.classes(), model.head_hidden, &cfg)?;

    trainer::save_checkpoint(out_dir, &out.best_head, m.classes(), &norm)?;
    fsutil::write_atomic(&out_dir.join(trainer::REPORT_FILE), out.report.to_csv().as_bytes())?;
    log::info!(
        "best epoch {} with validation accuracy {:.4}; head written to {}",
        out.report.best_epoch,
        out.report.best_val_acc,
        out_dir.join(trainer::HEAD_FILE).display()
    );
    reproducibility(s, Some(cfg.seed), Some(base.crc));
    Ok(())
}

struct Classifier {
    encoder: VitEncoder,
    head: HeadParams,
    labels: Vec<String>,
    image_size: usize,
    norm: Normalization,
    crc: u32,
}

fn load_classifier(s: &Settings, weights_path: &Path, head_path: &Path, expected: Option<&[String]>) -> Result<Classifier> {
    let base = load_base_weights(weights_path)?;
    let overlay = weights::load_weights(head_path)?;
    let head = trainer::head_from_overlay(&overlay)?;
    let labels = match (trainer::read_class_labels(head_path)?, expected) {
        (Some(saved), Some(exp)) if saved != exp => bail!(Error::Invalid {
            what: "head",
            reason: format!("trained on classes {saved:?}, manifest has {exp:?}"),
        }),
        (Some(saved), _) => saved,
        (None, Some(exp)) => exp.to_vec(),
        (None, None) => (0..head.num_classes()).map(|i| format!("class_{i}")).collect(),
    };
    if labels.len() != head.num_classes() {
        bail!(Error::Invalid {
            what: "head",
            reason: format!("{} outputs but {} class labels", head.num_classes(), labels.len()),
        });
    }
    s.record("head_hidden", &head.hidden_dim());
    let model = model_config(s, &base.set, labels.len())?;
    let norm = normalization(s, trainer::read_head_normalization(head_path)?, &base, || {
        bail!(Error::Invalid {
            what: "normalization",
            reason: "`dataset` needs a head trained with it; its constants are read from the head".into(),
        })
    })?;
    let mut cfg = model;
    cfg.head_hidden = head.hidden_dim();
    let encoder = VitEncoder::from_weights(&cfg, &base.set)?;
    Ok(Classifier {
        encoder,
        head,
        labels,
        image_size: cfg.image_size,
        norm,
        crc: base.crc,
    })
}

fn cmd_eval(s: &Settings, manifest: &Path, weights_path: &Path, head_path: &Path, out_dir: &Path) -> Result<()> {
    let m = DatasetManifest::load(manifest)?;
    let split = Split::parse(&s.get("split", "test".to_string())?)?;
    let c = load_classifier(s, weights_path, head_path, Some(m.classes()))?;
    start(s, "eval")?;
    let src = ManifestSplit::new(&m, split, c.image_size, c.norm);
    if src.is_empty() {
        bail!(Error::Invalid {
            what: "dataset",
            reason: format!("{split} split is empty"),
        });
    }
    let feats = trainer::extract_all(&c.encoder, &src)?;
    let labels: Vec<usize> = (0..src.len()).map(|i| src.label(i)).collect();
    let ev = trainer::evaluate_head(&c.head, &feats, &labels, &c.labels)?;
    evaluator::emit_report(&ev.confusion, out_dir)?;

    let mut w = String::from("path,label,predicted\n");
    for (i, &p) in ev.predictions.iter().enumerate() {
        w.push_str(&format!("{},{},{}\n", src.path(i).display(), c.labels[labels[i]], c.labels[p]));
    }
    fsutil::write_atomic(&out_dir.join("predictions.csv"), w.as_bytes())?;

    let f = evaluator::f1(&ev.confusion);
    println!("accuracy={}", ev.accuracy);
    println!("macro_f1={}", f.macro_f1);
    println!("weighted_f1={}", f.weighted_f1);
    println!("samples={}", ev.confusion.total());
    reproducibility(s, None, Some(c.crc));
    Ok(())
}

fn cmd_predict(s: &Settings, image: &Path, weights_path: &Path, head_path: &Path) -> Result<()> {
    let c = load_classifier(s, weights_path, head_path, None)?;
    start(s, "predict")?;
    let img = GlitchImage::load(image)?.resized(c.image_size, c.image_size);
    let features = c.encoder.extract_features(&c.norm.apply(&img)?)?;
    let p = vit::predict(&c.head.forward(&features)?);
    for (i, prob) in p.top_k(5) {
        println!("{}\t{prob:.6}", c.labels[i]);
    }
    reproducibility(s, None, Some(c.crc));
    Ok(())
}

fn synth_params(s: &Settings) -> Result<SynthParams> {
    let d = SynthParams::default();
    Ok(SynthParams {
        sample_rate: s.get("sample_rate", d.sample_rate)?,
        duration: s.get("duration", d.duration)?,
        t0: s.get("t0", d.t0)?,
        snr: (s.get("snr_min", d.snr.0)?, s.get("snr_max", d.snr.1)?),
    })
}

fn cmd_synth(s: &Settings, kind: &str, out: &Path) -> Result<()> {
    let kind = GlitchKind::from_label(kind)?;
    let p = synth_params(s)?;
    let seed: u64 = s.get("seed", 0)?;
    start(s, "synth")?;
    let inj = synth::inject(kind, &p, &mut synth::item_rng(seed, kind, 0))?;
    qscan::save_strain(&inj.strain, out)?;
    println!("{}", inj.event_time);
    reproducibility(s, Some(seed), None);
    Ok(())
}

fn cmd_synth_dataset(s: &Settings, root: &Path, per_class: usize) -> Result<()> {
    let p = synth_params(s)?;
    let q = qscan_config(s)?;
    let seed: u64 = s.get("seed", 0)?;
    start(s, "synth-dataset")?;
    let written = synth::write_image_dataset(root, per_class, seed, &p, &q)?;
    log::info!("wrote {} images under {}", written.len(), root.display());
    reproducibility(s, Some(seed), None);
    Ok(())
}

fn cmd_init_weights(s: &Settings, out: &Path) -> Result<()> {
    let d = ModelConfig::vit_b32();
    let cfg = ModelConfig {
        image_size: s.get("image_size", d.image_size)?,
        patch_size: s.get("patch_size", d.patch_size)?,
        hidden_dim: s.get("hidden_dim", d.hidden_dim)?,
        layers: s.get("layers", d.layers)?,
        heads: s.get("heads", d.heads)?,
        mlp_dim: s.get("mlp_dim", d.mlp_dim)?,
        ..d
    };
    let seed: u64 = s.get("seed", 0)?;
    start(s, "init-weights")?;
    let w = VitEncoder::random(&cfg, seed)?.to_weights();
    weights::save_weights(&w, out)?;
    let manifest = ExportManifest {
        param_count: w.param_count(),
        norm_mean: Normalization::IMAGENET.mean,
        norm_std: Normalization::IMAGENET.std,
        source_id: format!("random-init-seed-{seed}"),
    };
    fsutil::write_atomic(&manifest_path(out), manifest.to_text().as_bytes())?;
    log::info!("wrote {} parameters to {}", w.param_count(), out.display());
    let (_, crc) = weights::read_weight_file(out)?;
    reproducibility(s, Some(seed), Some(crc));
    Ok(())
}

fn cmd_check_goldens(s: &Settings, weights_path: &Path, goldens_path: &Path, head_path: Option<&Path>) -> Result<()> {
    let base = load_base_weights(weights_path)?;
    let head = head_path
        .map(|p| trainer::head_from_overlay(&weights::load_weights(p)?))
        .transpose()?;
    let classes = head.as_ref().map_or(ModelConfig::vit_b32().num_classes, HeadParams::num_classes);
    let model = model_config(s, &base.set, classes)?;
    start(s, "check-goldens")?;
    let encoder = VitEncoder::from_weights(&model, &base.set)?;
    let g = weights::load_weights(goldens_path)?;
    let checks = goldens::verify_goldens(&encoder, head.as_ref(), &g)?;
    let mut failed = 0;
    for c in &checks {
        let ok = c.max_abs_diff < TOLERANCE;
        failed += usize::from(!ok);
        println!("{}\t{:.3e}\t{}", c.name, c.max_abs_diff, if ok { "ok" } else { "FAIL" });
    }
    if let Some(m) = &base.manifest {
        println!("param_count\t{}\tok", m.param_count);
    }
    reproducibility(s, None, Some(base.crc));
    if failed > 0 {
        bail!(Error::Invalid {
            what: "goldens",
            reason: format!("{failed} tensor(s) exceed max abs diff {TOLERANCE}"),
        });
    }
    Ok(())
}

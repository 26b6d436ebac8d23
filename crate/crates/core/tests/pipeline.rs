use glitchvit::dataset::{self, DatasetManifest, Split};
use glitchvit::qscan::{self, GlitchImage, Normalization, QScanConfig};
use glitchvit::synth::{self, GlitchKind, SynthParams};
use glitchvit::trainer;
use glitchvit::vit::{self, HeadParams, ModelConfig, VitEncoder, VitModel};
use glitchvit::weights::{self, WeightSet};
use proptest::prelude::*;

fn small() -> ModelConfig {
    ModelConfig {
        image_size: 64,
        patch_size: 32,
        hidden_dim: 32,
        layers: 2,
        heads: 4,
        mlp_dim: 64,
        head_hidden: 16,
        num_classes: 4,
        ..ModelConfig::vit_b32()
    }
}

#[test]
fn strain_file_to_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let inj = synth::inject(
        GlitchKind::Chirp,
        &SynthParams::default(),
        &mut synth::item_rng(3, GlitchKind::Chirp, 0),
    )
    .unwrap();
    let strain = dir.path().join("event.gwst");
    qscan::save_strain(&inj.strain, &strain).unwrap();

    let loaded = qscan::load_strain(&strain).unwrap();
    assert_eq!(loaded.samples(), inj.strain.samples());
    let img = qscan::qscan(&loaded, inj.event_time, &QScanConfig::default()).unwrap();
    assert_eq!((img.height(), img.width()), (224, 224));
    let png = dir.path().join("event.png");
    img.save_png(&png).unwrap();
    let back = GlitchImage::load(&png).unwrap();
    assert_eq!(back.to_rgb8(), img.to_rgb8());

    let cfg = small();
    let model = VitModel {
        encoder: VitEncoder::random(&cfg, 1).unwrap(),
        head: HeadParams::zeros(32, 16, 4),
    };
    let input = Normalization::IMAGENET.apply(&back.resized(64, 64)).unwrap();
    let logits = model.forward(&input).unwrap();
    let p = vit::predict(&logits);
    assert_eq!(p.top_k(5).len(), 4);
    assert!(p.top_k(4).iter().all(|(_, q)| (q - 0.25).abs() < 1e-12));
}

#[test]
fn encoder_file_plus_head_overlay_is_the_full_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let encoder = VitEncoder::random(&cfg, 9).unwrap();
    let head = trainer::init_head(32, 16, 4, &trainer::TrainConfig::default());
    let enc_path = dir.path().join("encoder.vitw");
    let head_path = dir.path().join("head.vitw");
    weights::save_weights(&encoder.to_weights(), &enc_path).unwrap();
    weights::save_weights(&head.to_weights(), &head_path).unwrap();

    let mut w: WeightSet = weights::load_weights(&enc_path).unwrap();
    w.overlay(&weights::load_weights(&head_path).unwrap());
    let model = VitModel::from_weights(&cfg, &w).unwrap();
    assert_eq!(w.param_count(), cfg.encoder_param_count() + cfg.head_param_count());

    // Everything is f32 on disk, so compare against the reloaded parts.
    let enc2 = VitEncoder::from_weights(&cfg, &weights::load_weights(&enc_path).unwrap()).unwrap();
    let head2 = trainer::head_from_overlay(&weights::load_weights(&head_path).unwrap()).unwrap();
    let input = glitchvit::tensor::Planes::filled(3, 64, 64, 0.3);
    assert_eq!(
        model.forward(&input).unwrap(),
        head2.forward(&enc2.extract_features(&input).unwrap()).unwrap()
    );

    let again = dir.path().join("again.vitw");
    weights::save_weights(&model.to_weights(), &again).unwrap();
    let full = dir.path().join("full.vitw");
    weights::save_weights(&w, &full).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&full).unwrap());
}

#[test]
fn manifest_paths_resolve_relative_to_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("images");
    synth::write_image_dataset(&root, 3, 4, &SynthParams::default(), &QScanConfig::default()).unwrap();
    let sub = dir.path().join("lists");
    std::fs::create_dir_all(&sub).unwrap();
    let outside = dataset::ingest(&root, &sub).unwrap();
    assert!(outside.entries().iter().all(|e| e.path.is_absolute()));

    let sub = dir.path().to_path_buf();
    let m = dataset::ingest(&root, &sub).unwrap();
    assert_eq!(m.len(), 12);
    assert_eq!(m.classes(), ["Blip", "Chirp", "Line", "No_Glitch"]);
    let m = dataset::split_dataset(&m, [1.0, 1.0, 1.0], 0).unwrap();
    let path = sub.join("manifest.csv");
    m.save(&path).unwrap();

    let loaded = DatasetManifest::load(&path).unwrap();
    assert_eq!(loaded.entries(), m.entries());
    for e in loaded.entries() {
        assert!(e.path.is_relative());
        assert!(loaded.resolve(e).exists(), "{}", e.path.display());
    }
    let members = loaded.indices(Split::Test);
    let (inputs, labels) = dataset::load_batch(&loaded, Split::Test, &[0, 1, 2, 3], 32, &Normalization::IMAGENET).unwrap();
    assert_eq!(inputs.len(), 4);
    assert!(inputs.iter().all(|p| p.height() == 32 && p.width() == 32));
    assert_eq!(labels, members.iter().map(|&i| loaded.label_index(i)).collect::<Vec<_>>());
    assert!(dataset::load_batch(&loaded, Split::Test, &[4], 32, &Normalization::IMAGENET).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_files_round_trip_bitwise(
        tensors in prop::collection::btree_map("[a-z]{1,6}(/[a-z0-9_]{1,6}){0,2}", prop::collection::vec(-1e6f32..1e6f32, 1..40), 0..6)
    ) {
        let mut w = WeightSet::new();
        for (name, data) in &tensors {
            w.insert(name.clone(), weights::WeightTensor::new(vec![data.len()], data.clone()).unwrap());
        }
        let bytes = weights::encode(&w);
        let (back, crc) = weights::decode(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
        prop_assert_eq!(weights::encode(&back), bytes);
        for (name, data) in &tensors {
            prop_assert_eq!(back.get(name).unwrap().data(), data.as_slice());
        }
    }
}

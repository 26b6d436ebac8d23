use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn glitchvit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glitchvit"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = glitchvit(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TOY_MODEL: &str = "image_size=64\npatch_size=32\nhidden_dim=64\nlayers=2\nheads=4\nmlp_dim=256\n";

#[test]
fn split_of_3334_single_class_entries() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let mut csv = String::from("path,label,split\n");
    for i in 0..3334 {
        csv.push_str(&format!("img/{i:05}.png,Blip,\n"));
    }
    fs::write(&m, csv).unwrap();
    let out = ok(&["split", "--manifest", s(&m), "--seed", "7"]);
    assert!(stdout(&out).contains("Blip,2334,500,500"), "{}", stdout(&out));
    assert!(stderr(&out).contains("reproducibility: seed=7"));

    let first = fs::read(&m).unwrap();
    let again = dir.path().join("again.csv");
    fs::write(
        &m,
        fs::read_to_string(&m)
            .unwrap()
            .replace(",train\n", ",\n")
            .replace(",val\n", ",\n")
            .replace(",test\n", ",\n"),
    )
    .unwrap();
    ok(&["split", "--manifest", s(&m), "--seed", "7", "--out", s(&again)]);
    assert_eq!(first, fs::read(&again).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let out = glitchvit(&["qscan", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));
    assert_eq!(glitchvit(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("q.png");
    let out = glitchvit(&[
        "qscan",
        "--strain",
        s(&dir.path().join("absent.gwst")),
        "--event-gps",
        "2",
        "--out",
        s(&png),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.gwst"));
    assert!(!png.exists());
}

#[test]
fn unknown_config_keys_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    let strain = dir.path().join("s.gwst");
    ok(&["synth", "--kind", "Line", "--out", s(&strain)]);
    fs::write(&cfg, "learning_rte=0.1\n").unwrap();
    let out = glitchvit(&[
        "--config",
        s(&cfg),
        "qscan",
        "--strain",
        s(&strain),
        "--event-gps",
        "1240000002",
        "--out",
        "x.png",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("learning_rte"));
    fs::write(&cfg, "q=abc\n").unwrap();
    let out = glitchvit(&[
        "--config",
        s(&cfg),
        "qscan",
        "--strain",
        s(&strain),
        "--event-gps",
        "1240000002",
        "--out",
        "x.png",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qscan_writes_deterministic_image_and_rejects_outside_event() {
    let dir = tempfile::tempdir().unwrap();
    let strain = dir.path().join("s.gwst");
    let out = ok(&["synth", "--kind", "Blip", "--seed", "5", "--out", s(&strain)]);
    let event = stdout(&out).trim().to_string();

    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    ok(&["qscan", "--strain", s(&strain), "--event-gps", &event, "--out", s(&a)]);
    ok(&[
        "--threads",
        "1",
        "qscan",
        "--strain",
        s(&strain),
        "--event-gps",
        &event,
        "--out",
        s(&b),
    ]);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let img = image::load_from_memory(&bytes).unwrap();
    assert_eq!((img.width(), img.height()), (224, 224));

    let c = dir.path().join("c.png");
    let out = glitchvit(&["qscan", "--strain", s(&strain), "--event-gps", "1240000100", "--out", s(&c)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("outside"), "{}", stderr(&out));
    assert!(!c.exists());
    assert!(fs::read_dir(dir.path())
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().contains(".tmp")));
}

struct Toy {
    _dir: tempfile::TempDir,
    root: PathBuf,
    weights: PathBuf,
    manifest: PathBuf,
    cfg: PathBuf,
}

fn toy() -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let model_cfg = root.join("model.cfg");
    fs::write(&model_cfg, TOY_MODEL).unwrap();
    let weights = root.join("w.vitw");
    ok(&["--config", s(&model_cfg), "init-weights", "--out", s(&weights), "--seed", "1"]);
    ok(&["synth-dataset", "--root", s(&root.join("data")), "--per-class", "40", "--seed", "2"]);
    let manifest = root.join("m.csv");
    ok(&["ingest", "--root", s(&root.join("data")), "--out", s(&manifest)]);
    ok(&["split", "--manifest", s(&manifest), "--seed", "3"]);
    let cfg = root.join("train.cfg");
    fs::write(&cfg, "heads=4\nnormalization=dataset\n").unwrap();
    Toy {
        _dir: dir,
        root,
        weights,
        manifest,
        cfg,
    }
}

#[test]
fn toy_pipeline_train_eval_predict() {
    let t = toy();
    let run = t.root.join("run");
    let out = ok(&[
        "--config",
        s(&t.cfg),
        "train",
        "--manifest",
        s(&t.manifest),
        "--weights",
        s(&t.weights),
        "--out-dir",
        s(&run),
    ]);
    let log = stderr(&out);
    for echoed in ["learning_rate=0.001", "batch_size=32", "epochs=15", "seed=0"] {
        assert!(log.contains(echoed), "missing {echoed} in\n{log}");
    }
    let crc = format!(
        "{:08x}",
        crc32fast::hash(&fs::read(&t.weights).unwrap()[..fs::metadata(&t.weights).unwrap().len() as usize - 4])
    );
    assert!(log.contains(&format!("weights_crc32={crc}")), "{log}");
    for f in ["head.vitw", "head.classes", "head.norm", "train_report.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report = fs::read_to_string(run.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 16);

    // Same seed, different thread count: byte-identical artifacts.
    let rerun = t.root.join("rerun");
    ok(&[
        "--threads",
        "1",
        "--config",
        s(&t.cfg),
        "train",
        "--manifest",
        s(&t.manifest),
        "--weights",
        s(&t.weights),
        "--out-dir",
        s(&rerun),
    ]);
    for f in ["head.vitw", "head.classes", "head.norm", "train_report.csv"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(rerun.join(f)).unwrap(), "{f}");
    }

    let head = run.join("head.vitw");
    let ev = t.root.join("eval");
    let h_cfg = t.root.join("h.cfg");
    fs::write(&h_cfg, "heads=4\n").unwrap();
    let out = ok(&[
        "--config",
        s(&h_cfg),
        "eval",
        "--manifest",
        s(&t.manifest),
        "--weights",
        s(&t.weights),
        "--head",
        s(&head),
        "--out-dir",
        s(&ev),
    ]);
    assert!(stdout(&out).contains("accuracy="));
    assert!(stdout(&out).contains("samples=24"));
    for f in ["confusion.csv", "confusion.png", "metrics.txt", "predictions.csv"] {
        assert!(ev.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(ev.join("predictions.csv")).unwrap().lines().count(), 25);

    let m = fs::read_to_string(&t.manifest).unwrap();
    let blips: Vec<&str> = m
        .lines()
        .filter(|l| l.ends_with(",Blip,train"))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert!(!blips.is_empty());
    let mut top1 = 0;
    for rel in blips.iter().take(5) {
        let img = t.root.join(rel);
        let out = ok(&[
            "--config",
            s(&h_cfg),
            "predict",
            "--image",
            s(&img),
            "--weights",
            s(&t.weights),
            "--head",
            s(&head),
        ]);
        let text = stdout(&out);
        let rows: Vec<(String, f64)> = text
            .lines()
            .map(|l| {
                let (label, p) = l.split_once('\t').unwrap();
                (label.to_string(), p.parse().unwrap())
            })
            .collect();
        assert!(rows.len() <= 5 && rows.iter().any(|(l, _)| l == "Blip"), "{text}");
        assert!(rows.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!((rows.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-4);
        top1 += usize::from(rows[0].0 == "Blip");
    }
    assert!(top1 >= 4, "Blip ranked first for only {top1}/5 training images");
}

#[test]
fn eval_rejects_head_trained_on_other_classes() {
    let t = toy();
    let run = t.root.join("run");
    ok(&[
        "--config",
        s(&t.cfg),
        "train",
        "--manifest",
        s(&t.manifest),
        "--weights",
        s(&t.weights),
        "--out-dir",
        s(&run),
        "--epochs",
        "1",
    ]);
    let other = t.root.join("other.csv");
    fs::write(&other, fs::read_to_string(&t.manifest).unwrap().replace(",Line,", ",Whistle,")).unwrap();
    let h_cfg = t.root.join("h.cfg");
    fs::write(&h_cfg, "heads=4\n").unwrap();
    let out = glitchvit(&[
        "--config",
        s(&h_cfg),
        "eval",
        "--manifest",
        s(&other),
        "--weights",
        s(&t.weights),
        "--head",
        s(&run.join("head.vitw")),
        "--out-dir",
        s(&t.root.join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Whistle"));
}

#[test]
fn weight_manifest_mismatch_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let model_cfg = dir.path().join("model.cfg");
    fs::write(&model_cfg, TOY_MODEL).unwrap();
    let w = dir.path().join("w.vitw");
    ok(&["--config", s(&model_cfg), "init-weights", "--out", s(&w), "--seed", "9"]);
    let again = dir.path().join("w2.vitw");
    ok(&["--config", s(&model_cfg), "init-weights", "--out", s(&again), "--seed", "9"]);
    assert_eq!(fs::read(&w).unwrap(), fs::read(&again).unwrap());

    let manifest = dir.path().join("w.manifest");
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, text.replace("param_count=", "param_count=1")).unwrap();
    let data = dir.path().join("m.csv");
    fs::write(&data, "path,label,split\n").unwrap();
    let out = glitchvit(&[
        "train",
        "--manifest",
        s(&data),
        "--weights",
        s(&w),
        "--out-dir",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("parameters"), "{}", stderr(&out));
}

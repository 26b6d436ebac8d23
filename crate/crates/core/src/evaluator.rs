//! Confusion matrices and the metrics derived from them.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::qscan::render::colormap;
use crate::qscan::GlitchImage;
use crate::tensor::Planes;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let k = labels.len();
        Self {
            labels,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let k = labels.len();
        if counts.len() != k * k {
            return Err(Error::shape(
                "ConfusionMatrix",
                format!("{k}x{k}"),
                format!("{} cells", counts.len()),
            ));
        }
        Ok(Self { labels, counts })
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k() + pred]
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        let k = self.k();
        self.counts[truth * k + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.k()).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k()).map(|i| self.get(i, j)).sum()
    }

    /// Cell-wise sum; labels must agree.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::invalid("confusion merge", "label sets differ"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Reorders classes so that new class `i` is old class `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ConfusionMatrix {
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        let k = self.k();
        let mut counts = vec![0; k * k];
        for i in 0..k {
            for j in 0..k {
                counts[i * k + j] = self.get(perm[i], perm[j]);
            }
        }
        ConfusionMatrix { labels, counts }
    }

    /// Header `,L1,...,Lk`, then one `label,c1,...,ck` row per true class.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::invalid("confusion csv", e.to_string());
        let header: Vec<&str> = std::iter::once("").chain(self.labels.iter().map(String::as_str)).collect();
        w.write_record(&header).map_err(err)?;
        for (i, l) in self.labels.iter().enumerate() {
            let row: Vec<String> = std::iter::once(l.clone())
                .chain((0..self.k()).map(|j| self.get(i, j).to_string()))
                .collect();
            w.write_record(&row).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::invalid("confusion csv", e.to_string()))
    }

    pub fn parse_csv(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| Error::format(origin, e.to_string()))?);
        }
        let header = rows.first().ok_or_else(|| Error::format(origin, "empty file"))?;
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let k = labels.len();
        if rows.len() != k + 1 {
            return Err(Error::format(origin, format!("{k} labels but {} rows", rows.len() - 1)));
        }
        let mut counts = Vec::with_capacity(k * k);
        for (i, row) in rows[1..].iter().enumerate() {
            if row.len() != k + 1 || row[0] != labels[i] {
                return Err(Error::format(origin, format!("row {} does not match header", i + 2)));
            }
            for cell in row.iter().skip(1) {
                counts.push(
                    cell.trim()
                        .parse()
                        .map_err(|_| Error::format(origin, format!("bad count `{cell}`")))?,
                );
            }
        }
        Self::from_counts(labels, counts)
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], class_labels: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predictions", preds.len()),
            format!("{} labels", labels.len()),
        ));
    }
    let k = class_labels.len();
    let mut cm = ConfusionMatrix::zeros(class_labels.to_vec());
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= k || t >= k {
            return Err(Error::invalid("class index", format!("({t}, {p}) out of range for {k} classes")));
        }
        cm.record(t, p);
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::invalid("confusion matrix", "no samples")),
        n => Ok(cm.trace() as f64 / n as f64),
    }
}

/// Recall of each true class; `None` where the class has no samples.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.k())
        .map(|i| match cm.row_sum(i) {
            0 => None,
            n => Some(cm.get(i, i) as f64 / n as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub per_class: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

/// Precision, recall and F1 take the value 0 where undefined. Macro F1
/// averages over all classes; weighted F1 weights by true-class support.
pub fn f1(cm: &ConfusionMatrix) -> F1Scores {
    let k = cm.k();
    let per_class: Vec<f64> = (0..k)
        .map(|i| {
            let tp = cm.get(i, i) as f64;
            let (pred, actual) = (cm.col_sum(i) as f64, cm.row_sum(i) as f64);
            let precision = if pred > 0.0 { tp / pred } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .collect();
    let macro_f1 = if k > 0 { per_class.iter().sum::<f64>() / k as f64 } else { 0.0 };
    let total = cm.total() as f64;
    let weighted_f1 = if total > 0.0 {
        (0..k).map(|i| per_class[i] * cm.row_sum(i) as f64).sum::<f64>() / total
    } else {
        0.0
    };
    F1Scores {
        per_class,
        macro_f1,
        weighted_f1,
    }
}

/// `key=value` lines: accuracy, F1 averages, sample count, then per-class
/// accuracy (`undefined` for empty classes) and F1.
pub fn metrics_text(cm: &ConfusionMatrix) -> Result<String> {
    let acc = accuracy(cm)?;
    let f = f1(cm);
    let mut out = String::new();
    writeln!(out, "accuracy={acc}").unwrap();
    writeln!(out, "macro_f1={}", f.macro_f1).unwrap();
    writeln!(out, "weighted_f1={}", f.weighted_f1).unwrap();
    writeln!(out, "samples={}", cm.total()).unwrap();
    for (l, a) in cm.labels().iter().zip(per_class_accuracy(cm)) {
        match a {
            Some(a) => writeln!(out, "acc/{l}={a}").unwrap(),
            None => writeln!(out, "acc/{l}=undefined").unwrap(),
        }
    }
    for (l, v) in cm.labels().iter().zip(&f.per_class) {
        writeln!(out, "f1/{l}={v}").unwrap();
    }
    Ok(out)
}

pub const CELL_PX: usize = 16;

/// Row-normalized matrix drawn with the spectrogram colormap, `CELL_PX`
/// pixels per class.
pub fn confusion_image(cm: &ConfusionMatrix) -> Result<GlitchImage> {
    let k = cm.k();
    if k == 0 {
        return Err(Error::invalid("confusion matrix", "no classes"));
    }
    let side = k * CELL_PX;
    let mut p = Planes::filled(3, side, side, 0.0);
    for i in 0..k {
        let row = cm.row_sum(i).max(1) as f64;
        for j in 0..k {
            let rgb = colormap(cm.get(i, j) as f64 / row);
            for y in i * CELL_PX..(i + 1) * CELL_PX {
                for x in j * CELL_PX..(j + 1) * CELL_PX {
                    for (c, v) in rgb.iter().enumerate() {
                        p.set(c, y, x, *v);
                    }
                }
            }
        }
    }
    GlitchImage::new(p)
}

/// Writes `confusion.csv`, `metrics.txt` and `confusion.png` into `out_dir`.
pub fn emit_report(cm: &ConfusionMatrix, out_dir: &Path) -> Result<()> {
    fsutil::create_dir_all(out_dir)?;
    let metrics = metrics_text(cm)?;
    fsutil::write_atomic(&out_dir.join("confusion.csv"), &cm.to_csv()?)?;
    fsutil::write_atomic(&out_dir.join("metrics.txt"), metrics.as_bytes())?;
    confusion_image(cm)?.save_png(&out_dir.join("confusion.png"))
}

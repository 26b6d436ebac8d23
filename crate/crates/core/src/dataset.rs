//! Labeled image manifest, stratified splitting and batch loading.
//!
//! The manifest is a UTF-8 CSV with header `path,label,split`. Relative paths
//! are resolved against the manifest's directory. Class indices follow the
//! sorted order of the distinct labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::qscan::{GlitchImage, Normalization};
use crate::tensor::Planes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "" | "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::invalid(
                "split tag",
                format!("`{other}` (expected train, val, test or unassigned)"),
            )),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// As written in the manifest; see [`DatasetManifest::resolve`].
    pub path: PathBuf,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<Entry>,
    classes: Vec<String>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Classes default to the sorted distinct labels. An explicit list must
    /// be sorted, unique, and cover every entry.
    pub fn new(entries: Vec<Entry>, classes: Option<Vec<String>>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(Error::invalid("manifest", format!("duplicate path {}", e.path.display())));
            }
            if e.label.is_empty() {
                return Err(Error::invalid("manifest", format!("{} has an empty label", e.path.display())));
            }
        }
        let present: BTreeSet<&str> = entries.iter().map(|e| e.label.as_str()).collect();
        let classes = match classes {
            None => present.iter().map(|s| s.to_string()).collect(),
            Some(c) => {
                if c.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("class list", "labels must be sorted and unique"));
                }
                if let Some(missing) = present.iter().find(|l| c.binary_search_by(|x| x.as_str().cmp(l)).is_err()) {
                    return Err(Error::invalid("manifest", format!("label `{missing}` is not in the class list")));
                }
                c
            }
        };
        Ok(Self {
            entries,
            classes,
            base_dir: base_dir.into(),
        })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    pub fn label_index(&self, entry: usize) -> usize {
        self.class_index(&self.entries[entry].label)
            .expect("labels validated at construction")
    }

    pub fn resolve(&self, entry: &Entry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Entry indices in `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].split == split).collect()
    }

    /// `counts[class][split]` for train, val, test, unassigned.
    pub fn split_counts(&self) -> Vec<[usize; 4]> {
        let mut out = vec![[0usize; 4]; self.classes.len()];
        for (i, e) in self.entries.iter().enumerate() {
            out[self.label_index(i)][e.split as usize] += 1;
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::invalid("manifest", e.to_string());
        w.write_record(["path", "label", "split"]).map_err(csv_err)?;
        for e in &self.entries {
            let path = e
                .path
                .to_str()
                .ok_or_else(|| Error::invalid("manifest", format!("non-UTF-8 path {}", e.path.display())))?;
            w.write_record([path, &e.label, e.split.as_str()]).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::invalid("manifest", e.to_string()))
    }

    pub fn parse(text: &[u8], base_dir: impl Into<PathBuf>, origin: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text);
        let headers = r.headers().map_err(|e| Error::format(origin, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
            return Err(Error::format(
                origin,
                format!(
                    "header must be `path,label,split`, found `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut entries = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
            let split = Split::parse(&rec[2]).map_err(|e| Error::format(origin, format!("row {}: {e}", line + 2)))?;
            entries.push(Entry {
                path: PathBuf::from(&rec[0]),
                label: rec[1].to_string(),
                split,
            });
        }
        Self::new(entries, None, base_dir).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsutil::read_bytes(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&bytes, base, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_csv()?)
    }

    fn with_entries(&self, entries: Vec<Entry>) -> Self {
        Self {
            entries,
            classes: self.classes.clone(),
            base_dir: self.base_dir.clone(),
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Scans `<root>/<label>/<file>` for images. Paths are stored relative to
/// `manifest_dir` when `root` lies beneath it, absolute otherwise. All entries
/// start unassigned.
pub fn ingest(root: &Path, manifest_dir: &Path) -> Result<DatasetManifest> {
    let root = root.canonicalize().map_err(|e| Error::io(root, e))?;
    let base = manifest_dir.canonicalize().map_err(|e| Error::io(manifest_dir, e))?;
    let mut entries = Vec::new();
    for label_dir in sorted_dir(&root)? {
        if !label_dir.is_dir() {
            continue;
        }
        let label = label_dir
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid("class directory", format!("non-UTF-8 name {}", label_dir.display())))?
            .to_string();
        for file in sorted_dir(&label_dir)? {
            let is_image = file
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if file.is_file() && is_image {
                let path = file.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(file);
                entries.push(Entry {
                    path,
                    label: label.clone(),
                    split: Split::Unassigned,
                });
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::invalid(
            "image root",
            format!("no images found under {}/<label>/", root.display()),
        ));
    }
    DatasetManifest::new(entries, None, base)
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for item in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(item.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Splits `n` items by `ratios` with largest-remainder rounding; ties in the
/// fractional part go to the earlier slot (train, then val, then test).
pub fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let quotas = ratios.map(|r| n as f64 * r / total);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    let frac = |i: usize| quotas[i] - quotas[i].floor();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (frac(a), frac(b));
        if (fa - fb).abs() <= 1e-9 {
            a.cmp(&b)
        } else {
            fb.total_cmp(&fa)
        }
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified per-class split of the unassigned entries. Each class is
/// shuffled by its own generator stream, so classes do not influence each
/// other.
pub fn split_dataset(m: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::invalid("split ratios", format!("{ratios:?} must all be positive")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut totals = vec![0usize; m.num_classes()];
    for (i, e) in m.entries.iter().enumerate() {
        let c = m.label_index(i);
        totals[c] += 1;
        if e.split == Split::Unassigned {
            by_class.entry(c).or_default().push(i);
        }
    }
    if let Some(c) = totals.iter().position(|&t| t == 0) {
        return Err(Error::invalid("split", format!("class `{}` has no entries", m.classes[c])));
    }
    let mut entries = m.entries.clone();
    for (c, mut idx) in by_class {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        idx.shuffle(&mut rng);
        let [train, val, _] = largest_remainder(idx.len(), ratios);
        for (k, &i) in idx.iter().enumerate() {
            entries[i].split = if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(m.with_entries(entries))
}

/// Keeps a seeded uniform subset of at most `cap` entries of `label`; other
/// entries and the relative order are untouched.
pub fn balance_class(m: &DatasetManifest, label: &str, cap: usize, seed: u64) -> Result<DatasetManifest> {
    let c = m
        .class_index(label)
        .ok_or_else(|| Error::invalid("label", format!("`{label}` is not a class of this manifest")))?;
    if cap == 0 {
        return Err(Error::invalid("cap", "must be at least 1"));
    }
    let members: Vec<usize> = (0..m.len()).filter(|&i| m.label_index(i) == c).collect();
    if members.len() <= cap {
        return Ok(m.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 63) | c as u64);
    let keep: BTreeSet<usize> = index::sample(&mut rng, members.len(), cap)
        .into_iter()
        .map(|k| members[k])
        .collect();
    let entries = m
        .entries
        .iter()
        .enumerate()
        .filter(|(i, _)| m.label_index(*i) != c || keep.contains(i))
        .map(|(_, e)| e.clone())
        .collect();
    Ok(m.with_entries(entries))
}

/// Decodes, resizes and normalizes one image.
pub fn load_input(path: &Path, image_size: usize, norm: &Normalization) -> Result<Planes> {
    let img = GlitchImage::load(path)?.resized(image_size, image_size);
    norm.apply(&img)
}

/// Inputs and class indices for `indices` (positions within `split`).
pub fn load_batch(
    m: &DatasetManifest,
    split: Split,
    indices: &[usize],
    image_size: usize,
    norm: &Normalization,
) -> Result<(Vec<Planes>, Vec<usize>)> {
    let members = m.indices(split);
    let picked: Vec<usize> = indices
        .iter()
        .map(|&k| {
            members.get(k).copied().ok_or_else(|| {
                Error::invalid(
                    "batch index",
                    format!("{k} out of range for {split} split of {} entries", members.len()),
                )
            })
        })
        .collect::<Result<_>>()?;
    let inputs = picked
        .par_iter()
        .map(|&i| load_input(&m.resolve(&m.entries[i]), image_size, norm))
        .collect::<Result<Vec<_>>>()?;
    Ok((inputs, picked.iter().map(|&i| m.label_index(i)).collect()))
}

/// Per-channel mean and standard deviation of the images in `split`, after
/// resizing to `image_size`.
pub fn channel_stats(m: &DatasetManifest, split: Split, image_size: usize) -> Result<Normalization> {
    let members = m.indices(split);
    if members.is_empty() {
        return Err(Error::invalid("split", format!("{split} split is empty")));
    }
    let partial = members
        .par_iter()
        .map(|&i| {
            let img = GlitchImage::load(&m.resolve(&m.entries[i]))?.resized(image_size, image_size);
            let mut acc = [[0.0f64; 2]; 3];
            for (c, a) in acc.iter_mut().enumerate() {
                for v in img.planes().plane(c) {
                    a[0] += v;
                    a[1] += v * v;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = [[0.0f64; 2]; 3];
    for acc in &partial {
        for c in 0..3 {
            total[c][0] += acc[c][0];
            total[c][1] += acc[c][1];
        }
    }
    let n = (members.len() * image_size * image_size) as f64;
    let mean = [0, 1, 2].map(|c| total[c][0] / n);
    let std = [0, 1, 2].map(|c| (total[c][1] / n - mean[c] * mean[c]).max(0.0).sqrt().max(1e-6));
    Ok(Normalization { mean, std })
}

/// Random access to labeled, ready-to-encode samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn label(&self, i: usize) -> usize;
    fn load(&self, i: usize) -> Result<Planes>;
}

/// One split of a manifest, decoded on demand.
pub struct ManifestSplit<'a> {
    manifest: &'a DatasetManifest,
    members: Vec<usize>,
    image_size: usize,
    norm: Normalization,
}

impl<'a> ManifestSplit<'a> {
    pub fn new(manifest: &'a DatasetManifest, split: Split, image_size: usize, norm: Normalization) -> Self {
        Self {
            manifest,
            members: manifest.indices(split),
            image_size,
            norm,
        }
    }

    pub fn path(&self, i: usize) -> PathBuf {
        self.manifest.resolve(&self.manifest.entries[self.members[i]])
    }
}

impl SampleSource for ManifestSplit<'_> {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn label(&self, i: usize) -> usize {
        self.manifest.label_index(self.members[i])
    }

    fn load(&self, i: usize) -> Result<Planes> {
        load_input(&self.path(i), self.image_size, &self.norm)
    }
}

/// In-memory samples, mostly for tests.
pub struct MemorySource {
    pub inputs: Vec<Planes>,
    pub labels: Vec<usize>,
}

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn load(&self, i: usize) -> Result<Planes> {
        Ok(self.inputs[i].clone())
    }
}

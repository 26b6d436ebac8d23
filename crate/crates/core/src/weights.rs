//! Binary weight container (`.vitw`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        "VITW"            4 bytes
//! version      u32 = 1
//! count        u32               number of tensors
//! per tensor, sorted by name:
//!   name_len   u32
//!   name       UTF-8, name_len bytes
//!   rank       u8
//!   dims       u64 × rank
//!   data       f32 × product(dims)
//! crc32        u32               IEEE CRC-32 of every preceding byte
//! ```
//!
//! The same container carries pretrained encoder weights, head-only
//! checkpoints (overlays) and reference activations (`golden/*`).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::Tensor2;

pub const MAGIC: &[u8; 4] = b"VITW";
pub const VERSION: u32 = 1;

/// One named parameter array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel = numel(&dims).ok_or_else(|| Error::invalid("tensor dims", format!("{dims:?} overflow")))?;
        if numel != data.len() {
            return Err(Error::shape(
                "WeightTensor::new",
                format!("{dims:?}"),
                format!("{} values", data.len()),
            ));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::invalid("tensor rank", dims.len().to_string()));
        }
        Ok(Self { dims, data })
    }

    /// Narrows a matrix to `f32`.
    pub fn from_tensor2(t: &Tensor2) -> Self {
        Self {
            dims: vec![t.rows(), t.cols()],
            data: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Self {
            dims: vec![v.len()],
            data: v.iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

fn numel(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// A set of uniquely named tensors, kept in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSet {
    tensors: BTreeMap<String, WeightTensor>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, tensor: WeightTensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn insert_matrix(&mut self, name: impl Into<String>, t: &Tensor2) {
        self.insert(name, WeightTensor::from_tensor2(t));
    }

    pub fn insert_vector(&mut self, name: impl Into<String>, v: &[f64]) {
        self.insert(name, WeightTensor::from_vector(v));
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Total scalar count, derived from the stored shapes.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(WeightTensor::numel).sum()
    }

    /// Keeps only tensors whose names start with `prefix`.
    pub fn filter_prefix(&self, prefix: &str) -> WeightSet {
        WeightSet {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Applies `other` on top of `self`: tensors in `other` replace same-named ones.
    pub fn overlay(&mut self, other: &WeightSet) {
        for (k, v) in &other.tensors {
            self.tensors.insert(k.clone(), v.clone());
        }
    }

    /// Looks up `name` and checks its shape.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<&WeightTensor> {
        let t = self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.dims != dims {
            return Err(Error::TensorShape {
                name: name.to_string(),
                expected: dims.to_vec(),
                actual: t.dims.clone(),
            });
        }
        Ok(t)
    }

    pub fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Tensor2> {
        let t = self.expect(name, &[rows, cols])?;
        Tensor2::new(rows, cols, t.to_f64())
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        Ok(self.expect(name, &[len])?.to_f64())
    }
}

/// Serializes `w` into the container byte stream.
pub fn encode(w: &WeightSet) -> Vec<u8> {
    let payload: usize = w
        .tensors
        .iter()
        .map(|(k, t)| 4 + k.len() + 1 + 8 * t.dims.len() + 4 * t.data.len())
        .sum();
    let mut buf = Vec::with_capacity(16 + payload);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
    for (name, t) in &w.tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.dims.len() as u8);
        for &d in &t.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Parses a container, returning the tensors and the stored CRC.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<(WeightSet, u32)> {
    if bytes.len() < 16 {
        return Err(Error::format(
            origin,
            format!("{} bytes is shorter than the minimal container", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(origin, "bad magic, expected \"VITW\""));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum {
            path: origin.to_path_buf(),
            stored,
            computed,
        });
    }

    let mut cur = Cursor { buf: body, pos: 4, origin };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let count = cur.u32()?;
    let mut set = WeightSet::new();
    for i in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::format(origin, format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        let rank = cur.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cur.u64()?;
            dims.push(usize::try_from(d).map_err(|_| Error::format(origin, format!("`{name}`: dim {d} too large")))?);
        }
        let n = numel(&dims)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(origin, format!("`{name}`: dims {dims:?} overflow")))?;
        let raw = cur.take(n)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if set.contains(&name) {
            return Err(Error::format(origin, format!("duplicate tensor `{name}`")));
        }
        set.insert(name, WeightTensor { dims, data });
    }
    if cur.pos != body.len() {
        return Err(Error::format(
            origin,
            format!("{} trailing bytes after the last tensor", body.len() - cur.pos),
        ));
    }
    Ok((set, stored))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(
                self.origin,
                format!("declared size runs past end of file (need {n} bytes at offset {})", self.pos),
            )
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_weights(w: &WeightSet, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode(w))
}

pub fn load_weights(path: &Path) -> Result<WeightSet> {
    Ok(read_weight_file(path)?.0)
}

/// Loads a container and also returns its CRC, which identifies the file in run logs.
pub fn read_weight_file(path: &Path) -> Result<(WeightSet, u32)> {
    decode(&fsutil::read_bytes(path)?, path)
}

/// Metadata written next to exported weights as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportManifest {
    pub param_count: usize,
    pub norm_mean: [f64; 3],
    pub norm_std: [f64; 3],
    pub source_id: String,
}

impl ExportManifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let kv = fsutil::parse_key_values(text, origin)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::format(origin, format!("missing key `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::format(origin, format!("`{k}` is not a number"))) };
        Ok(Self {
            param_count: get("param_count")?
                .parse()
                .map_err(|_| Error::format(origin, "`param_count` is not an integer"))?,
            norm_mean: [num("norm_mean_r")?, num("norm_mean_g")?, num("norm_mean_b")?],
            norm_std: [num("norm_std_r")?, num("norm_std_g")?, num("norm_std_b")?],
            source_id: get("source_id")?.clone(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read_text(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let [mr, mg, mb] = self.norm_mean;
        let [sr, sg, sb] = self.norm_std;
        format!(
            "param_count={}\nnorm_mean_r={mr}\nnorm_mean_g={mg}\nnorm_mean_b={mb}\nnorm_std_r={sr}\nnorm_std_g={sg}\nnorm_std_b={sb}\nsource_id={}\n",
            self.param_count, self.source_id
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> WeightSet {
        let mut w = WeightSet::new();
        w.insert("b", WeightTensor::new(vec![3], vec![1.0, -2.0, f32::MIN_POSITIVE]).unwrap());
        w.insert("a/m", WeightTensor::new(vec![2, 2], vec![0.5, 1.5, 2.5, 3.5]).unwrap());
        w.insert("scalar", WeightTensor::new(vec![], vec![7.0]).unwrap());
        w
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.vitw");
        save_weights(&sample(), &p).unwrap();
        let first = std::fs::read(&p).unwrap();
        let loaded = load_weights(&p).unwrap();
        assert_eq!(loaded, sample());
        save_weights(&loaded, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }

    #[test]
    fn empty_set_is_a_valid_file() {
        let bytes = encode(&WeightSet::new());
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[8..12], &0u32.to_le_bytes());
        let (w, _) = decode(&bytes, Path::new("mem")).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode(&sample());
        let i = bytes.len() - 9;
        bytes[i] ^= 0x10;
        assert!(matches!(decode(&bytes, Path::new("mem")), Err(Error::Checksum { .. })));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode(&sample());
        bytes[0] = b'X';
        let err = decode(&bytes, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    /// Re-seal a body with a fresh CRC so only the size checks can reject it.
    fn reseal(mut body: Vec<u8>) -> Vec<u8> {
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    }

    #[test]
    fn size_disagreements_are_rejected() {
        let bytes = encode(&sample());
        let body = bytes[..bytes.len() - 4].to_vec();

        // Truncated payload: a declared tensor runs past the end.
        let short = reseal(body[..body.len() - 2].to_vec());
        assert!(decode(&short, Path::new("mem")).unwrap_err().to_string().contains("past end"));

        // Extra bytes after the declared tensors.
        let mut long = body.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(decode(&reseal(long), Path::new("mem"))
            .unwrap_err()
            .to_string()
            .contains("trailing"));

        // Tensor count larger than what follows.
        let mut more = body;
        more[8..12].copy_from_slice(&4u32.to_le_bytes());
        assert!(decode(&reseal(more), Path::new("mem")).is_err());
    }

    #[test]
    fn missing_and_misshapen_tensors_are_named() {
        let w = sample();
        let err = w.matrix("nope", 2, 2).unwrap_err();
        assert!(err.to_string().contains("nope"));
        let err = w.matrix("a/m", 2, 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a/m") && msg.contains("[2, 2]") && msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn overlay_replaces_and_adds() {
        let mut base = sample();
        let mut head = WeightSet::new();
        head.insert("b", WeightTensor::new(vec![1], vec![9.0]).unwrap());
        head.insert("c", WeightTensor::new(vec![1], vec![4.0]).unwrap());
        base.overlay(&head);
        assert_eq!(base.get("b").unwrap().data(), &[9.0]);
        assert_eq!(base.get("c").unwrap().data(), &[4.0]);
        assert_eq!(base.len(), 4);
    }

    #[test]
    fn manifest_round_trip() {
        let m = ExportManifest {
            param_count: 87_456_040,
            norm_mean: [0.485, 0.456, 0.406],
            norm_std: [0.229, 0.224, 0.225],
            source_id: "torchvision/vit_b_32/IMAGENET1K_V1".into(),
        };
        assert_eq!(ExportManifest::parse(&m.to_text(), Path::new("m")).unwrap(), m);
        assert!(ExportManifest::parse("param_count=1\n", Path::new("m")).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_sets_round_trip_bitwise(
            entries in prop::collection::btree_map(
                "[a-z/_0-9]{1,12}",
                (prop::collection::vec(0usize..4, 0..3), any::<u32>()),
                0..6,
            )
        ) {
            let mut w = WeightSet::new();
            for (name, (dims, seed)) in entries {
                let n: usize = dims.iter().product();
                let data = (0..n as u32).map(|i| f32::from_bits(seed.wrapping_add(i.wrapping_mul(2_654_435_761)))).collect();
                w.insert(name, WeightTensor::new(dims, data).unwrap());
            }
            let bytes = encode(&w);
            let (back, _) = decode(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}

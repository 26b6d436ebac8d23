//! Reference activations for cross-implementation checks.
//!
//! A golden bundle is an ordinary weight file whose tensors use the reserved
//! names below. `golden/input` is a normalized `[C, H, W]` image; the other
//! tensors hold the activations a reference implementation produced for it.

use crate::error::{Error, Result};
use crate::tensor::{Planes, Tensor2};
use crate::vit::{HeadParams, VitEncoder};
use crate::weights::{WeightSet, WeightTensor};

pub mod names {
    pub const INPUT: &str = "golden/input";
    pub const EMBEDDING: &str = "golden/embedding";
    pub const FEATURES: &str = "golden/features";
    pub const LOGITS: &str = "golden/logits";
    pub const PREFIX: &str = "golden/";

    pub fn layer(k: usize) -> String {
        format!("golden/layer_{k:02}")
    }
}

/// Tolerance for single-precision reference activations.
pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCheck {
    pub name: String,
    pub max_abs_diff: f64,
}

/// Builds a bundle from this implementation's own activations.
pub fn make_goldens(encoder: &VitEncoder, head: Option<&HeadParams>, input: &Planes) -> Result<WeightSet> {
    let trace = encoder.trace(input)?;
    let mut w = WeightSet::new();
    let dims = vec![input.channels(), input.height(), input.width()];
    w.insert(
        names::INPUT,
        WeightTensor::new(dims, input.data().iter().map(|&v| v as f32).collect())?,
    );
    w.insert_matrix(names::EMBEDDING, &trace.embedding);
    for (k, t) in trace.layers.iter().enumerate() {
        w.insert_matrix(names::layer(k), t);
    }
    w.insert_vector(names::FEATURES, &trace.features);
    if let Some(h) = head {
        w.insert_vector(names::LOGITS, &h.forward(&trace.features)?);
    }
    Ok(w)
}

/// Runs `golden/input` through the model and compares every golden tensor
/// that is present. `golden/features` is mandatory; logits are compared only
/// when a head is supplied.
pub fn verify_goldens(encoder: &VitEncoder, head: Option<&HeadParams>, goldens: &WeightSet) -> Result<Vec<GoldenCheck>> {
    let input = goldens.get(names::INPUT).ok_or_else(|| Error::MissingTensor(names::INPUT.into()))?;
    let planes = match input.dims() {
        [c, h, w] => Planes::new(*c, *h, *w, input.to_f64())?,
        d => {
            return Err(Error::invalid(
                "golden input",
                format!("rank {} shape {d:?}, expected [C, H, W]", d.len()),
            ))
        }
    };
    if !goldens.contains(names::FEATURES) {
        return Err(Error::MissingTensor(names::FEATURES.into()));
    }
    let trace = encoder.trace(&planes)?;
    let mut checks = Vec::new();
    let mut compare = |name: &str, actual: &[f64], rows: usize| -> Result<()> {
        if let Some(g) = goldens.get(name) {
            let cols = actual.len() / rows.max(1);
            let expected = if rows == 1 { vec![actual.len()] } else { vec![rows, cols] };
            let same = g.numel() == actual.len() && (g.dims() == expected.as_slice() || g.dims() == [1, actual.len()]);
            if !same {
                return Err(Error::TensorShape {
                    name: name.into(),
                    expected,
                    actual: g.dims().to_vec(),
                });
            }
            checks.push(GoldenCheck {
                name: name.into(),
                max_abs_diff: max_abs_diff(&g.to_f64(), actual),
            });
        }
        Ok(())
    };
    let matrix = |t: &Tensor2| (t.data().to_vec(), t.rows());
    let (e, r) = matrix(&trace.embedding);
    compare(names::EMBEDDING, &e, r)?;
    for (k, t) in trace.layers.iter().enumerate() {
        let (d, r) = matrix(t);
        compare(&names::layer(k), &d, r)?;
    }
    compare(names::FEATURES, &trace.features, 1)?;
    if let Some(h) = head {
        compare(names::LOGITS, &h.forward(&trace.features)?, 1)?;
    }
    Ok(checks)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

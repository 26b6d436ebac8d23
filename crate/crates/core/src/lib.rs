// `!(x > 0.0)` guards reject NaN on purpose; the erf coefficients are kept
// digit-for-digit from fdlibm.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod fsutil;
pub mod goldens;
pub mod qscan;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod vit;
pub mod weights;

pub use error::{Error, Result};

//! Deformation field `Δ(x, y, z, τ)`: a small MLP on sinusoidally encoded
//! inputs, soft-clamped and gated in time so the first frame never moves.

mod encoding;
mod field;
mod knn;
mod sequence;

pub use encoding::{positional_encode, ENCODED_DIM, NUM_FREQUENCIES};
pub use field::{init_field, DeformationField, FieldLayout, Gate, LayerSlots, DEFAULT_GATE_EXPONENT, SOFT_CLAMP};
pub use knn::NNIndex;
pub use sequence::{FramePlan, Sequence, Side};

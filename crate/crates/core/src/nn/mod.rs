//! Minimal CPU tensor engine with reverse-mode differentiation.
//!
//! Generic over `f32` (training and inference) and `f64` (finite-difference
//! verification). All kernels are single-threaded and deterministic.

mod conv;
mod deform;
mod graph;
mod optim;
mod params;
mod sample;
mod tensor;

pub use graph::{Gradients, Graph, InputKind, Leaf, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{fan_in_uniform, ParamId, ParamStore};
pub use tensor::{Real, Tensor};

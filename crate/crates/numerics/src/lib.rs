//! Minimal dense-tensor core: row-major `f64` tensors, a tape for reverse-mode
//! differentiation over a closed operation set, AdamW, finite-difference gradient
//! checking and a binary parameter checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NumericsError, Result};
pub use gradcheck::{check_all_ops, grad_check, op_case, GradCheckOptions, GradCheckReport, LossFn};
pub use graph::{softmax_rows, Gradients, Graph, OpKind, Var};
pub use optim::{AdamWConfig, AdamWState};
pub use params::{Bound, GradMap, ParamStore};
pub use tensor::{sinusoidal_features, Tensor};

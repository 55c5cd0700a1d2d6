//! Dense tensors, sparse neighbor aggregation, a reverse-mode gradient tape
//! and the Adam optimizer.

mod adam;
mod sparse;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use sparse::spmm_neighbors;
pub use tape::{Gradients, Segments, Tape, Var};
pub use tensor::Tensor2;

pub(crate) use tensor::{gemm, Trans};

//! Unsupervised fake-news detection with a masked, contrastive graph
//! autoencoder over news-propagation graphs.
//!
//! A two-layer GIN encoder is trained to reconstruct node features from two
//! randomly masked, edge-dropped views of each propagation graph while keeping
//! the two reconstructions aligned. The sum-pooled encoder output is then used
//! as a graph embedding for a linear SVM probe.

pub mod augment;
pub mod batch;
pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod rng;
pub mod sweep;
pub mod synth;
pub mod training;

pub use error::{GamcError, Result};
pub use graph::{load_dataset, save_dataset, AdjacencyCsr, Dataset, Label, PropagationGraph};
pub use model::{load_checkpoint, save_checkpoint, ModelParams};
pub use numerics::Tensor2;
pub use rng::SplitMix64;
pub use training::{train, TrainConfig, TrainReport};

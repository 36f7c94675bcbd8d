pub mod autodiff;
pub mod cli;
pub mod ecc;
pub mod error;
pub mod graph;
pub mod init;
pub mod metrics;
pub mod model;
pub mod pool;
pub mod synth;
pub mod train;

pub use autodiff::Tensor;
pub use error::{Error, Result};
pub use graph::{AttributedGraph, GraphDataset};
pub use model::{Model, ModelConfig};

//! A small reverse-mode differentiation engine over dense `f64` matrices,
//! with the Adam optimiser, finite-difference gradient checking and
//! parameter checkpoints.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck};
pub use params::{ParamId, ParamStore};
pub use tape::{
    sigmoid, BatchStats, Gradients, Message, MessagePlan, NormMode, Tape, Var, NORM_EPS,
};
pub use tensor::Tensor;

//! Small reverse-mode differentiation core: tensors, a gradient tape,
//! dense and GRU layers, orthogonal initialisation, and Adam over named
//! parameter groups that can be frozen.

mod init;
pub mod layers;
mod params;
mod tape;
mod tensor;

pub use init::orthogonal_init;
pub use layers::{gru, gru_cell, gru_params, mlp, mlp_apply, mlp_params};
pub use params::{
    accumulate_l2, adam_step, l2_penalty, Adam, AdamState, Gradients, Param, ParamId, ParameterGroup,
    ParameterStore,
};
pub use tape::{sigmoid, Adjoints, Tape, Var};
pub use tensor::Tensor;

//! Small differentiable kernel for the learning agents: dense matrices,
//! activations, recurrent cells with explicit backward passes, and
//! REINFORCE updates.

mod matrix;
mod params;
mod recurrent;
mod reinforce;

pub use matrix::{
    affine, axpy, dot, log_softmax_grad, masked_softmax, norm, sigmoid, tanh, DenseMatrix,
};
pub use params::{ParamSet, ParamSpec};
pub use recurrent::{cell_param_specs, CellCache, CellKind, RecurrentCell};
pub use reinforce::{
    finite_difference_gradient, reinforce_update, relative_error, PolicyModel, RewardBaseline,
};

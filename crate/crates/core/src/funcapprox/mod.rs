//! Small dense networks with exact reverse-mode gradients, an adaptive
//! moment optimizer and a finite-difference checker.

mod adam;
pub mod gradcheck;
mod mlp;
mod params_io;

pub use adam::{adaptive_update, AdamState};
pub use gradcheck::{check_gradient, GradReport};
pub use mlp::{forward, grad, sigmoid, Activation, Backprop, MlpSpec, ParamSet, Tape};
pub use params_io::{read_param_set, read_param_set_unchecked, write_param_set};

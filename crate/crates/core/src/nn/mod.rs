//! Minimal dense kernel: affine maps, activations, pooling, channel
//! concatenation and softmax, each with an exact backward pass.

mod gradcheck;
mod ops;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use ops::{
    activation, activation_backward, affine, affine_backward, concat_channels, relu, sigmoid,
    softmax, softmax_backward, spatial_pool, spatial_pool_backward, split_channels, Activation,
    AffineGrad, PoolMode,
};
pub use tensor::{ChannelMap, Matrix};

//! Layer primitives with explicit forward and backward passes.

mod conv;
mod dense;
mod flops;
mod pool;

pub use conv::{
    conv3d_backward, conv3d_factorized_backward, conv3d_factorized_forward, conv3d_forward,
    Conv3dKernel, ConvGrads, FactorizedConv3d, FactorizedGrads,
};
pub use dense::{fc_backward, fc_forward, softmax_cross_entropy, softmax_rows, FcGrads};
pub use flops::{flop_count, ConvDims, ConvKind};
pub use pool::{maxpool3d_backward, maxpool3d_forward, PoolArgmax};

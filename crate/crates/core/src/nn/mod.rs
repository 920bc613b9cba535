//! Layers with forward/backward passes and the network builder.

mod activation;
mod conv;
mod init;
mod linear;
mod network;
mod param;
mod pool;
mod residual;

pub use activation::{relu_backward, relu_forward, ReluCache};
pub use conv::{conv2d_backward, conv2d_forward, ConvCache, ConvGeometry, ConvGrads};
pub use init::kaiming_init;
pub use linear::{linear_backward, linear_forward, LinearCache, LinearGrads};
pub use network::{
    baseline_convnet_specs, build_network, mini_resnet_specs, Architecture, ForwardContext, Layer, LayerSpec,
    LinearLayer, Network, TrainableSelector,
};
pub use param::Parameter;
pub use pool::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool_backward, maxpool_forward, PoolCache,
};
pub use residual::{residual_backward, residual_forward, ConvLayer, ResidualBlock, ResidualCache, ResidualGrads};

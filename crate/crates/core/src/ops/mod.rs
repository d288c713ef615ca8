//! Tensor primitives with analytic backward passes.

pub mod activation;
pub mod boxfilter;
pub mod concat;
pub mod conv;
pub mod pool;
pub mod resize;

pub use activation::{relu, relu_backward, softmax_channels, softmax_channels_backward};
pub use boxfilter::{box_filter, box_filter_backward, box_filter_checked};
pub use concat::{channel_concat, channel_split};
pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams, ConvSpec};
pub use pool::{maxpool2d, maxpool2d_backward, PoolIndices};
pub use resize::{bilinear_resize, bilinear_resize_backward};

//! Dense-tensor network engine: convolution, OWA pooling, fully connected
//! layers, ReLU, softmax cross-entropy and momentum SGD, all in `f64`.

pub mod checkpoint;
pub mod conv;
pub mod dense;
mod gemm;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod pool;
mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, ConvCache, ConvGeometry, Padding};
pub use dense::{dense_backward, dense_forward, flatten, relu_backward, relu_forward};
pub use layer::{FeatureShape, LayerSpec};
pub use loss::{softmax, softmax_cross_entropy};
pub use network::{Layer, Network};
pub use optim::{sgd_step, Sgd};
pub use pool::{owa_pool_backward, owa_pool_forward, PoolCache};
pub use tensor::Tensor;

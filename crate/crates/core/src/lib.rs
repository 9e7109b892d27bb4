pub mod codec;
pub mod entropy;
pub mod kitti;
pub mod metrics;
pub mod net;
pub mod scalar;
pub mod stats;
pub mod tensor;

pub use scalar::{Precision, Scalar};
pub use tensor::{Graph, Tensor, TensorError, Var};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;

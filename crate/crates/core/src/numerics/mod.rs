//! Dense math, activations, losses, parameter storage, SGD with momentum and
//! finite-difference gradient checking. Everything is `f64`.

mod config;
mod gradcheck;
mod ops;
mod params;
mod sparse;
mod tensor;

pub use config::TrainConfig;
pub use gradcheck::{grad_check, grad_check_with_step, GradCheckReport, DEFAULT_STEP};
pub use ops::{
    argmax, dropout_mask, leaky_relu, leaky_relu_grad, linear, linear_backward, linear_rows, relu, relu_grad, selu,
    selu_grad, sigmoid, softmax_cross_entropy, softmax_inplace, softplus, LinearGrads, LEAKY_SLOPE, SELU_ALPHA,
    SELU_LAMBDA,
};
pub use params::{Param, ParamId, ParameterStore, Sgd};
pub use sparse::{RowSource, SparseRows};
pub use tensor::{axpy, dot, Tensor2};

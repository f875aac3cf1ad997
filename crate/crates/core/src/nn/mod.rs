//! Convolutional classifier: layers, forward/backward passes, Adam training.

mod layers;
mod network;
mod tensor;
mod train;

pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward, maxpool2d_forward, relu,
    relu_backward, ConvGrads, DenseGrads, PoolWinners,
};
pub use network::{
    argmax, cross_entropy, l1_penalty, loss_and_grad, softmax, ForwardCache, Network, NetworkSpec, NUM_CLASSES,
};
pub use tensor::{Scalar, Tensor};
pub use train::{
    adam_step, evaluate, predict_probabilities, train, AdamState, EpochStats, Evaluation, LabeledSet, TrainConfig,
    TrainHistory,
};

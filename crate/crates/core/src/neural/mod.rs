//! Convolutional-recurrent ISTI regressor with hand-written backpropagation.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod train;

pub use loss::{bins_expectation, multi_loss, sigmoid_bce, softmax, BinLoss, LossParts};
pub use model::{param_group, ArchDescriptor, Gradients, LossSums, Model, ParamGroup};
pub use tensor::Tensor;
pub use train::{predict_isti, sgd_step, train, train_from, EpochStats, History, TrainConfig, TrainingClip};

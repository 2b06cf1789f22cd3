//! Desk-scale convolutional-recurrent de-aliasing networks with hand-written
//! reverse-mode gradients, an Adam optimizer and the training loop.

mod adam;
mod conv;
mod net;
mod train;

pub use adam::{AdamConfig, TrainState};
pub use conv::{ConvGeom, FeatureMap, Padding};
pub use net::{ConvRecNet, HiddenState, NetConfig, NetGrads, NetTape, LEAK};
pub use train::{
    augment, evaluate_loss, extract_patches, l1_loss, loss_and_grad, synthetic_samples, train, train_step, TrainConfig,
    TrainReport,
    TrainingSample,
};

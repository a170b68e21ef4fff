//! Attention-based LSTM encoder-decoder: forward pass, gradients, AdaDelta
//! training and checkpoints.

mod backward;
pub mod checkpoint;
mod forward;
mod optim;
mod params;
mod train;

pub use backward::{accumulate_gradient, loss_and_gradient, Dropout};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{attention, lstm_step, EncoderStates, RecurrentState};
pub use optim::{adadelta_update, AdaDeltaState};
pub use params::{Gate, LstmParams, ModelDims, ModelParams, DEFAULT_INIT_SCALE};
pub use train::{
    best_epoch_index, format_log, mean_loss, train, train_with_observer, EpochStats, TrainConfig,
    TrainOutcome,
};

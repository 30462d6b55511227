//! Hand-written neural network stack in f64: layers with explicit
//! forward/backward passes, squeeze-excitation blocks, bidirectional GRUs,
//! the SELD CRNN itself, Adam, the MSE loss and a finite-difference
//! gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod loss;
pub mod model;
pub mod param;
pub mod se;
pub mod train;

pub use adam::Adam;
pub use layers::Mode;
pub use loss::accdoa_mse_loss;
pub use model::{NetworkConfig, SeldNet};
pub use param::{ParamSet, ParamVisitor};
pub use train::{train, EpochLog, TrainOutcome, TrainSample, TrainSchedule};

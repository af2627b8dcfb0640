//! Randomized-connection 3D segmentation networks and graph-based label
//! inference for volumetric images.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds the dense tensor type and the network units (3D
//!   convolution, pooling, upsampling, LSTM and ConvLSTM cells) with their
//!   hand-written gradients.
//! * [`rcnet`] builds the symmetric contracting/expanding network whose skip
//!   connections are Bernoulli-sampled, and trains it at toy scale.
//! * [`select`] scores voxels across several probability maps and prunes the
//!   confident ones.
//! * [`walker`] runs random-walker inference on the remaining candidates.
//! * [`metrics`] measures Dice overlap and tabulates per-stage reports.
//! * [`pipeline`] chains training, inference, fusion and refinement on
//!   synthetic scenes.
//! * [`io`] covers the on-disk volume format, synthetic scenes and pipeline
//!   configuration.

pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod rcnet;
pub mod select;
pub mod tensor;
pub mod volume;
pub mod walker;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use volume::{Dims, LabelVolume, ProbabilityMap, Volume};

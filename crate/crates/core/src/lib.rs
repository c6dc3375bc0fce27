//! Neural source-filter vocoder toolkit: a tape-based autograd engine,
//! spectral losses with analytic gradients, sine/noise source excitation,
//! equiripple FIR design, three waveform-model variants, and the training
//! and synthesis pipeline around them.

pub mod array;
pub mod dsp;
pub mod error;
pub mod fir;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod loss;
pub mod model;
pub mod optim;
pub mod pitch;
pub mod scalar;
pub mod source;
pub mod train;

pub use array::Array;
pub use dsp::{StftConfig, Waveform};
pub use error::{Error, Result};
pub use fir::{FirBank, FirCoefficients, FirSpec};
pub use graph::{Graph, NodeId};
pub use loss::MultiResLossConfig;
pub use model::{ForwardInput, Model, ModelConfig, ModelKind};
pub use scalar::Scalar;
pub use source::SourceConfig;
pub use train::{TrainConfig, TrainLog};

//! Numerical core for per-reach river surrogates.
//!
//! The crate is `no_std` (with `alloc`) and carries everything that is pure
//! computation: reach geometry types, the diffusive-wave routing oracle that
//! produces ground truth, a small dense tensor layer with hand-written
//! forward/backward passes (linear, GRU, 1-D spectral convolution), the AdamW
//! optimizer, the GRU + Fourier-operator surrogate, windowed training,
//! closed-loop rollout, forecast metrics and the ablation protocols.
//!
//! File formats, the command line and wall-clock timing live in the
//! `reach-surrogate` companion crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod ablation;
pub mod features;
pub mod fft;
pub mod geometry;
pub mod hydro;
pub mod layers;
pub mod linalg;
mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rollout;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use features::{Channel, ChannelMask, NormStats};
pub use geometry::{CrossSection, ForcingSeries, Reach};
pub use hydro::{OracleConfig, StateField};

pub use metrics::MetricsReport;
pub use model::{ModelConfig, ModelParams};
pub use synthetic::SyntheticSpec;
pub use tensor::Tensor;
pub use train::{TrainConfig, TrainReport};

/// Seconds per forcing / state time step.
pub const DT_SECONDS: f64 = 3600.0;

/// Metres per international foot.
pub const FT_TO_M: f64 = 0.3048;

//! Forward and backward passes for the surrogate's layer types.
//!
//! Layers work on flat row-major slices with explicit dimensions so the
//! model can chain them without reshaping copies; the `Tensor` entry points
//! validate shapes first and delegate to the slice kernels.

pub mod activation;
pub mod gru;
pub mod linear;
pub mod spectral;

pub use gru::{GruCache, GruGrads, GruWeights};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use spectral::{SpectralBasis, SpectralCache, SpectralWeights};

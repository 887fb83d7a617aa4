//! Dynamic texture features from banks of 3D spatiotemporal Gabor filters.
//!
//! The pipeline is: sample a bank of kernels over a grid of speeds and
//! directions ([`kernel`]), filter a video with each quadrature pair
//! ([`convolve`], [`features`]), reduce every phase-insensitive response to
//! its energy, and classify the resulting vectors with a 1-nearest-neighbor
//! rule under k-fold cross-validation ([`classify`]). [`stimuli`] renders the
//! synthetic moving bars, edges and gratings used to measure tuning curves.

pub mod classify;
pub mod convolve;
pub mod error;
pub mod features;
mod fft;
pub mod io;
pub mod kernel;
pub mod stimuli;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Extent, Origin, Volume};

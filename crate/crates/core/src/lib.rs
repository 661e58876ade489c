//! Reconstruction from limited- and sparse-angle tomographic data with
//! unrolled ISTA networks carrying a learned, masked wavelet-domain
//! convolutional correction, plus the visibility analysis that motivates
//! the masks.

pub mod error;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod microlocal;
pub mod phantoms;
pub mod scalar;
pub mod unrolled;
pub mod wavelet;
pub mod xray;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Image64 = xray::Image<f64>;
pub type Image32 = xray::Image<f32>;
pub type Sinogram64 = xray::Sinogram<f64>;
pub type Sinogram32 = xray::Sinogram<f32>;
pub type Projector64 = xray::Projector<f64>;
pub type Projector32 = xray::Projector<f32>;
pub type WaveletCoeffs64 = wavelet::WaveletCoeffs<f64>;
pub type WaveletCoeffs32 = wavelet::WaveletCoeffs<f32>;
pub type NetworkParams64 = unrolled::NetworkParams<f64>;
pub type NetworkParams32 = unrolled::NetworkParams<f32>;
pub type KernelAtlas64 = microlocal::KernelAtlas<f64>;
pub type KernelAtlas32 = microlocal::KernelAtlas<f32>;

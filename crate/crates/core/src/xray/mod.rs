//! Discrete X-ray transform: forward projection, its transpose, filtered
//! backprojection and operator-norm estimation.

mod fbp;
mod grid;
mod projector;

pub use fbp::{fbp, ramp_filter, RampWindow};
pub use grid::{Image, Sinogram};
pub use projector::{
    estimate_operator_norm, power_iteration, radon_adjoint, radon_forward, Projector,
};

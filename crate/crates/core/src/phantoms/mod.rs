//! Synthetic ellipse phantoms, noisy measurement simulation and the on-disk
//! dataset format.

mod dataset;
mod ellipse;

pub use dataset::{
    generate_samples, read_dataset, write_dataset, Dataset, DatasetManifest, GenerateConfig, Sample,
    SinogramSidecar, Split, DATASET_VERSION,
};
pub use ellipse::{
    derive_seed, generate_phantom, rasterize, simulate_measurement, EllipseSpec, PhantomConfig,
};

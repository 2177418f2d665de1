//! Sensor matrices, artificial missingness, normalization and windowing.

mod dataset;
mod mask;
mod normalize;
mod split;
mod synth;
mod windows;

pub use dataset::{MaskMatrix, StDataset, DEFAULT_START};
pub use mask::{generate_mask, visibility, MaskMode, MaskSpec};
pub use normalize::Normalizer;
pub use split::TimeSplit;
pub use synth::{generate_synthetic, SynthConfig};
pub use windows::{make_windows, TargetSelection, WindowReport, WindowSample, WindowStream};

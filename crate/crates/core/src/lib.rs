//! Joint frame subsampling and latent image extraction for image sequences
//! degraded by atmospheric turbulence.
//!
//! Three energy models are provided, each minimized by alternating between a
//! subsample step and an image step:
//!
//! - [`drivers::iris`]: L² fidelity to the frames, Laplacian sharpness quality.
//! - [`drivers::liris`]: L² fidelity to the low-rank part of the frames.
//! - [`drivers::tviris`]: L² fidelity with total variation on the image and
//!   as the per-frame quality, for noisy sequences.
//!
//! [`simulator`] generates synthetic turbulence sequences and [`metrics`]
//! scores restorations against ground truth.

pub mod drivers;
pub mod energy;
pub mod error;
pub mod frame;
pub mod grad;
pub mod metrics;
pub mod params;
pub mod quality;
pub mod rpca;
pub mod selector;
pub mod simulator;
pub mod tvsolver;

pub use drivers::{restore, RestorationResult};
pub use error::{Error, Result};
pub use frame::{Frame, FrameStack, SubsampleSet};
pub use params::{DualStep, Model, ModelParams};

//! Shape-from-focus toolkit.
//!
//! The pipeline stages are:
//!
//! 1. **stackio** – focal-stack loading/validation, mean images, and exact
//!    file formats (PFM, 16-bit PNG with range sidecar).
//! 2. **kernels** – standard, dilated, and directional dilated Laplacian
//!    (DDL) focus kernels.
//! 3. **convolve** – sparse 2-D convolution with defined border handling.
//! 4. **focusvol** – multi-scale DDL focus volumes, cumulative variants,
//!    the Laplacian baseline, and the focus aggregation map.
//! 5. **classic** – winner-takes-all depth, all-in-focus composition, and
//!    focus-measure curves.
//! 6. **noise** – seeded Gaussian / salt-and-pepper / speckle corruption.
//! 7. **metrics** – the depth-map evaluation suite.
//! 8. **refiner** – forward-only multi-scale ConvGRU depth extractor with
//!    learned-style convex upsampling and the weighted sequence loss.
//! 9. **synth** – synthetic focal stacks with exact ground truth, used as
//!    the verification oracle throughout the test suite.
//!
//! Every operation is deterministic: fixed seeds and fixed reduction orders
//! make outputs bit-identical across runs and thread counts. See the
//! `examples/` directory for one runnable program per capability and the
//! `cli` module (binary `sff`) for the command-line front end.

pub mod classic;
pub mod cli;
pub mod convolve;
pub mod error;
pub mod focusvol;
pub mod kernels;
pub mod metrics;
pub mod noise;
pub mod refiner;
pub mod stackio;
pub mod synth;

pub use error::{Error, Result};

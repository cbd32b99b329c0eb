//! Memory-budgeted CNN inference for time-series anomaly detection.
//!
//! The engine executes small sequential CNNs inside a simulated SRAM arena
//! under four memory modes: naive layer-by-layer execution, in-place
//! rescheduling of depthwise convolutions, patch-by-patch execution of the
//! convolutional trunk, and the combination of the two. Outputs are equal
//! across modes; what changes is the measured memory high-water mark.
//!
//! Around the engine sit the pieces a deployment needs: a streaming model
//! loader, analytic MAC/parameter/memory audits, multi-domain feature
//! extraction, a prediction-error anomaly-detection pipeline, and a
//! flash/SRAM latency simulator.

pub mod audit;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod kernels;
pub mod latsim;
pub mod modelio;
pub mod pipeline;
pub mod scheduler;
pub mod tensor;

pub use error::{Error, Result};

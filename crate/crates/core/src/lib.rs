//! Differentiable sphere-traced rendering of signed distance fields.
//!
//! Silhouette gradients come from a warp field assembled from the sphere
//! tracer's own sample points, so no explicit edge detection is needed. The
//! crate also contains an inverse-rendering optimizer and a finite-difference
//! gradient checker.

pub mod ad;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod gradient;
pub mod optimize;
pub mod render;
pub mod scene;
pub mod tracer;
pub mod warp;

pub use error::{Error, Result};

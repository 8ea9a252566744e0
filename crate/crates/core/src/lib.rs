//! Synthetic-to-real domain adaptation for score-map text detectors.
//!
//! The crate pairs a small differentiable detector with two adaptation
//! mechanisms: adversarial alignment of backbone features through a gradient
//! reversal layer, and self-training on the unlabelled target domain with
//! stroke-width filtered pseudo-boxes and confidence-ranked negative mining.

pub mod adam;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod features;
pub mod formats;
pub mod geometry;
pub mod losses;
pub mod pipeline;
pub mod probe;
pub mod raster;
pub mod strokestats;
pub mod swt;
pub mod toymodel;

pub use error::{Error, Result};
pub use geometry::{Point, QuadBox};
pub use raster::{GrayImage, PixelPartition, PixelState, ScoreMap, StrokeWidthMap, NO_STROKE};

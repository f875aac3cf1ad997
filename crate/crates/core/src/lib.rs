//! Simulated photonic ISAR imaging with an explainable CNN classifier.

pub mod angle;
pub mod cli;
pub mod config;
pub mod embed;
pub mod error;
pub mod formats;
pub mod imaging;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod scene;
pub mod waveform;
pub mod xai;

pub use error::{Error, Result};

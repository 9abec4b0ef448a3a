//! File formats, reporting and the command-line interface around
//! [`anystereo_core`].
//!
//! - [`pfm`]: portable float maps, `+inf` marks invalid disparities.
//! - [`png_io`]: KITTI 16-bit disparity PNGs and 8/16-bit images.
//! - [`calib`]: `key=value` calibration files.
//! - [`report`]: CSV tables for evaluation and sweeps.
//! - [`manifest`]: JSON run manifests and dataset listings.
//! - [`cli`]: the `anystereo` subcommands.

pub use anystereo_core as core;

pub mod calib;
pub mod cli;
mod error;
pub mod files;
pub mod manifest;
pub mod pfm;
pub mod png_io;
pub mod report;

pub use error::{Error, Result};

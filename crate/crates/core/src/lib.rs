//! Anytime coarse-to-fine stereo matching for high-resolution rectified pairs.
//!
//! The matcher builds a four-level descriptor pyramid for both views, turns
//! each level into a 4D feature volume (channels × disparity bins × height ×
//! width) of signed descriptor differences, and decodes the volumes from the
//! coarsest level to the finest. Every decoded level can be read out as an
//! expected-disparity map, so a caller gets a usable coarse answer long
//! before the finest volume is built. The pipeline stops between stages once
//! a latency budget is exhausted.
//!
//! Besides the matcher the crate carries the evaluation protocol (bad-τ,
//! avgerr, rms, error quantiles, depth-range partitioning), the asymmetric
//! augmentations used to stress calibration robustness, a random-dot
//! stereogram generator with exact ground truth, and a derivative-free tuner
//! that fits the decoder parameters against a multi-scale loss.
//!
//! The crate is `no_std` with `alloc`. The default `std` feature adds rayon
//! parallelism and a wall clock; results are bitwise independent of the
//! number of threads.
//!
//! # Modules
//! - [`image`]: rasters, disparity maps, resampling.
//! - [`pyramid`]: descriptor pyramid (`build_feature_pyramid`).
//! - [`volume`]: feature volume construction and disparity striding.
//! - [`decoder`]: aggregation, volumetric pyramid pooling, fusion, readout.
//! - [`pipeline`]: the staged anytime matcher.
//! - [`augment`]: y-disparity warp, chromatic and mask augmentation.
//! - [`eval`]: metrics, depth conversion, range protocol, robustness sweeps.
//! - [`tuner`]: multi-scale loss and coordinate search.
//! - [`rds`]: synthetic scenes with ground truth.
//! - [`config`]: flat `key=value` configuration text.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod config;
pub mod decoder;
mod error;
pub mod eval;
pub mod image;
mod math;
mod par;
pub mod pipeline;
pub mod pyramid;
pub mod rds;
pub mod tuner;
pub mod volume;

pub use config::MatcherConfig;
pub use decoder::{CostVolume, DecoderConfig, FuseMode};
pub use error::{Error, Result};
pub use image::{DisparityMap, Image};
pub use pipeline::{Clock, InputMode, Matcher, StageReport};
pub use pyramid::{DescriptorConfig, FeatureLevel, FeaturePyramid};
pub use volume::{FeatureVolume, StridePolicy};

#[cfg(feature = "std")]
pub use pipeline::WallClock;

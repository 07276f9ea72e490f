//! Distortion-aware frame interpolation for equirectangular 360-degree video.
//!
//! The crate covers the ERP distortion prior ([`geometry`]), quality metrics
//! ([`metrics`]), the latitude-weighted training loss ([`loss`]), the
//! interpolation network ([`model`]), motion-stratified triplet datasets
//! ([`dataset`]) and training / evaluation / ablation drivers ([`runner`]).

pub mod config;
pub mod dataset;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod runner;

pub use error::{Error, Result};
pub use frame::Frame;

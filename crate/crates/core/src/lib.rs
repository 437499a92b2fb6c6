//! Blind despeckling of SAR intensity images by a dense dilated CNN trained
//! on pairs of independently speckled images, with the speckle simulator,
//! data pipeline and quality indexes needed to evaluate it.

pub mod error;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
pub mod data;
pub mod metrics;
pub mod network;
pub mod speckle;
pub mod trainer;

//! Cross-image disentanglement for low-light enhancement.
//!
//! Images are split into a spatial *content* feature and a global 8-value
//! *brightness* code; enhancement decodes the content of a dark image with
//! the brightness of any normal-light guidance image.

pub mod container;
pub mod data;
pub mod error;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use image::ImageTensor;
pub use model::{
    BrightnessCode, BrightnessPosterior, ContentFeature, Domain, ModelState, SamplingMode,
};

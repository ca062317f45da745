use cidn_tensor::PadMode;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::{self, tag};

/// Integer translation: content moves `dx` pixels right and `dy` down, so
/// `out(x, y) = in(x - dx, y - dy)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shift {
    pub dx: i64,
    pub dy: i64,
}

/// Translates by `shift`, filling vacated borders by reflection.
pub fn translate(img: &ImageTensor, shift: Shift) -> ImageTensor {
    let (h, w) = img.dims();
    let src = |i: usize, d: i64, len: usize| {
        PadMode::Reflect
            .source_index(i as isize - d as isize, len)
            .expect("reflection always resolves")
    };
    ImageTensor::from_fn(h, w, |y, x, c| img.get(src(y, shift.dy, h), src(x, shift.dx, w), c))
}

/// Applies a random translation drawn uniformly from
/// `[-max_shift, max_shift]^2`.
pub fn simulate_misalignment(
    img: &ImageTensor,
    max_shift: usize,
    seed: u64,
) -> Result<(ImageTensor, Shift)> {
    let (h, w) = img.dims();
    if 2 * max_shift >= h.min(w) {
        return Err(Error::InvalidArgument(format!(
            "max shift {max_shift} must be below half the smallest side of a {h}x{w} image"
        )));
    }
    let mut rng = rng::stream(seed, &[tag::MISALIGN]);
    let m = max_shift as i64;
    let shift = Shift {
        dx: rng.random_range(-m..=m),
        dy: rng.random_range(-m..=m),
    };
    Ok((translate(img, shift), shift))
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma_8bit / 255`
/// and clips to `[0, 1]`.
pub fn add_gaussian_noise(img: &ImageTensor, sigma_8bit: f64, seed: u64) -> Result<ImageTensor> {
    if !(sigma_8bit.is_finite() && sigma_8bit >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gaussian sigma must be nonnegative, got {sigma_8bit}"
        )));
    }
    if sigma_8bit == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma_8bit / 255.0).expect("positive sigma");
    let mut rng = rng::stream(seed, &[tag::NOISE]);
    let data = img
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
        .collect();
    ImageTensor::new(img.height(), img.width(), data)
}

/// Scaled-count shot noise: `Poisson(v * lam) / lam`, clipped to `[0, 1]`.
pub fn add_poisson_noise(img: &ImageTensor, lam: f64, seed: u64) -> Result<ImageTensor> {
    if !(lam.is_finite() && lam > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Poisson lambda must be positive, got {lam}"
        )));
    }
    let mut rng = rng::stream(seed, &[tag::NOISE]);
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let rate = v as f64 * lam;
            if rate <= 0.0 {
                return 0.0;
            }
            let count: f64 = Poisson::new(rate).expect("positive rate").sample(&mut rng);
            (count / lam).clamp(0.0, 1.0) as f32
        })
        .collect();
    ImageTensor::new(img.height(), img.width(), data)
}

/// Noise model applied to low-light images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Noise {
    #[default]
    None,
    /// Standard deviation in 8-bit units.
    Gaussian { sigma: f64 },
    Poisson { lambda: f64 },
}

impl Noise {
    pub fn apply(&self, img: &ImageTensor, seed: u64) -> Result<ImageTensor> {
        match *self {
            Noise::None => Ok(img.clone()),
            Noise::Gaussian { sigma } => add_gaussian_noise(img, sigma, seed),
            Noise::Poisson { lambda } => add_poisson_noise(img, lambda, seed),
        }
    }
}

/// Synthetic corruption applied when pairs are sampled: a random shift of
/// the normal-light image and noise on the low-light image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionRecipe {
    pub max_shift: usize,
    pub noise: Noise,
}

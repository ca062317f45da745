//! The RGB image type shared by every module, plus PNG/JPEG I/O.

use std::io::Cursor;
use std::path::Path;

use cidn_tensor::{PadMode, Tensor};
use image::{DynamicImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// An `height x width x 3` RGB image with intensities in `[0, 1]`, stored
/// interleaved in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::InvalidImage(format!(
                "{height}x{width}x3 image needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "value {v} outside [0, 1]"
            )));
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    /// Builds an image from `f(y, x, channel)`, clamping into `[0, 1]`.
    /// Non-finite values become 0.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(clamp_unit(f(y, x, c)));
                }
            }
        }
        ImageTensor {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(height, width, |_, _, c| rgb[c])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn pixel_luminance(&self, y: usize, x: usize) -> f64 {
        (0..3).map(|c| LUMA[c] * self.get(y, x, c) as f64).sum()
    }

    /// Per-pixel luminance in row-major order.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
            .collect()
    }

    pub fn mean_luminance(&self) -> f64 {
        let lum = self.luminance();
        lum.iter().sum::<f64>() / lum.len() as f64
    }

    /// Multiplies every value by `gain`, clamping into `[0, 1]`.
    pub fn scaled(&self, gain: f32) -> Self {
        ImageTensor {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| clamp_unit(v * gain)).collect(),
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::shape(format!(
                "crop {height}x{width} at ({top}, {left}) outside {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let row = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let i = (y * self.width + x) * 3;
                data.extend_from_slice(&self.data[i..i + 3]);
            }
        }
        ImageTensor {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Pads with mirrored content so each side is at least `min_side` and a
    /// multiple of `multiple`. Returns the padded image and the original
    /// dimensions, to crop back to with `crop(0, 0, h, w)`.
    pub fn pad_reflect_to(&self, multiple: usize, min_side: usize) -> (Self, (usize, usize)) {
        let target = |n: usize| n.max(min_side).div_ceil(multiple) * multiple;
        let (th, tw) = (target(self.height), target(self.width));
        if (th, tw) == (self.height, self.width) {
            return (self.clone(), self.dims());
        }
        let mut data = Vec::with_capacity(th * tw * 3);
        for y in 0..th {
            let sy = PadMode::Reflect
                .source_index(y as isize, self.height)
                .unwrap_or(0);
            for x in 0..tw {
                let sx = PadMode::Reflect
                    .source_index(x as isize, self.width)
                    .unwrap_or(0);
                let i = (sy * self.width + sx) * 3;
                data.extend_from_slice(&self.data[i..i + 3]);
            }
        }
        (
            ImageTensor {
                height: th,
                width: tw,
                data,
            },
            self.dims(),
        )
    }

    /// `[1, 3, h, w]` planar tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Self::batch_to_tensor(&[self]).expect("single image batch")
    }

    /// Stacks equally-sized images into an `[n, 3, h, w]` tensor.
    pub fn batch_to_tensor(images: &[&ImageTensor]) -> Result<Tensor<f32>> {
        let first = images
            .first()
            .ok_or_else(|| Error::shape("empty image batch"))?;
        let (h, w) = first.dims();
        let hw = h * w;
        let mut out = vec![0.0f32; images.len() * 3 * hw];
        for (b, img) in images.iter().enumerate() {
            if img.dims() != (h, w) {
                return Err(Error::shape(format!(
                    "batch mixes {h}x{w} and {}x{} images",
                    img.height, img.width
                )));
            }
            let base = b * 3 * hw;
            for (p, px) in img.data.chunks_exact(3).enumerate() {
                out[base + p] = px[0];
                out[base + hw + p] = px[1];
                out[base + 2 * hw + p] = px[2];
            }
        }
        Ok(Tensor::new(&[images.len(), 3, h, w], out))
    }

    /// Extracts image `index` of an `[n, 3, h, w]` tensor.
    pub fn from_tensor(t: &Tensor<f32>, index: usize) -> Result<Self> {
        let (n, c, h, w) = t.dims4();
        if c != 3 || index >= n {
            return Err(Error::shape(format!(
                "cannot take image {index} of tensor {:?}",
                t.shape()
            )));
        }
        let hw = h * w;
        let plane = &t.data()[index * 3 * hw..(index + 1) * 3 * hw];
        let mut data = Vec::with_capacity(3 * hw);
        for p in 0..hw {
            data.extend_from_slice(&[plane[p], plane[hw + p], plane[2 * hw + p]]);
        }
        Self::new(h, w, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Decodes PNG or JPEG bytes; 16-bit PNGs keep their precision.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes).map_err(|e| Error::Format {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let rgb = img.to_rgb32f();
        let (w, h) = rgb.dimensions();
        ImageTensor {
            height: h as usize,
            width: w as usize,
            data: rgb.into_raw().into_iter().map(clamp_unit).collect(),
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("consistent buffer")
    }

    /// 8-bit PNG encoding.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()).map_err(|e| Error::io(path, e))
    }
}

fn clamp_unit(v: f32) -> f32 {
    if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

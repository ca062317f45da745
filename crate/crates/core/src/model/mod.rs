//! Network topology and the forward operations built on it: shared content
//! and brightness encoders, one decoder per lighting domain, and a
//! three-scale discriminator set per domain.

mod checkpoint;
mod network;
mod params;

use std::collections::BTreeMap;

use cidn_tensor::{PadMode, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use checkpoint::checkpoint_id;
pub use network::Network;
pub use params::{Bound, ParamGroup, ParamStore};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::{self, tag};

/// Length of the brightness code.
pub const BRIGHTNESS_DIM: usize = 8;
/// Discriminators per domain.
pub const NUM_SCALES: usize = 3;
/// Cumulative stride of the content encoder.
pub const CONTENT_STRIDE: usize = 4;
/// Smallest side any encoder accepts.
pub const MIN_ENCODER_SIDE: usize = 16;
/// Smallest side the discriminators accept (quarter scale keeps 16 px).
pub const MIN_DISCRIMINATOR_SIDE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Reflect,
    /// Wrap-around padding; makes the content path exactly equivariant to
    /// cyclic shifts by multiples of the stride. Meant for tests.
    Cyclic,
}

impl From<Padding> for PadMode {
    fn from(p: Padding) -> PadMode {
        match p {
            Padding::Reflect => PadMode::Reflect,
            Padding::Cyclic => PadMode::Cyclic,
        }
    }
}

/// Architecture hyper-parameters, stored in every checkpoint header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Width of the first encoder stage; the content feature has 4x this.
    pub base_channels: usize,
    pub res_blocks: usize,
    pub disc_channels: usize,
    pub padding: Padding,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            base_channels: 64,
            res_blocks: 4,
            disc_channels: 64,
            padding: Padding::Reflect,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("model.base_channels", self.base_channels),
            ("model.disc_channels", self.disc_channels),
        ] {
            if v == 0 {
                return Err(Error::Config {
                    key: key.into(),
                    message: "must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Low,
    Normal,
}

impl Domain {
    fn decoder_prefix(self) -> &'static str {
        match self {
            Domain::Low => "dec_x",
            Domain::Normal => "dec_y",
        }
    }

    fn discriminator_prefix(self) -> &'static str {
        match self {
            Domain::Low => "dis_x",
            Domain::Normal => "dis_y",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    /// Reparameterized draw `mu + exp(logvar / 2) * eps`.
    Train,
    /// The posterior mean.
    Infer,
}

/// Structure-carrying feature map of one image: `[1, channels, h/4, w/4]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeature {
    tensor: Tensor<f32>,
}

impl ContentFeature {
    pub fn from_tensor(tensor: Tensor<f32>) -> Result<Self> {
        if tensor.shape().len() != 4 || tensor.shape()[0] != 1 {
            return Err(Error::shape(format!(
                "content feature must be [1, c, h, w], got {:?}",
                tensor.shape()
            )));
        }
        if !tensor.all_finite() {
            return Err(Error::InvalidArgument("non-finite content feature".into()));
        }
        Ok(ContentFeature { tensor })
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[3]
    }
}

/// Diagonal Gaussian over the brightness code.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrightnessPosterior {
    pub mu: [f32; BRIGHTNESS_DIM],
    pub logvar: [f32; BRIGHTNESS_DIM],
}

impl BrightnessPosterior {
    pub fn new(mu: [f32; BRIGHTNESS_DIM], logvar: [f32; BRIGHTNESS_DIM]) -> Result<Self> {
        if mu.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "brightness posterior has non-finite entries".into(),
            ));
        }
        Ok(BrightnessPosterior { mu, logvar })
    }

    /// Posterior of row `index` of `[n, 8]` mean and log-variance tensors.
    pub fn from_rows(mu: &Tensor<f32>, logvar: &Tensor<f32>, index: usize) -> Result<Self> {
        let row = |t: &Tensor<f32>| -> Result<[f32; BRIGHTNESS_DIM]> {
            let (n, d) = t.dims2();
            if d != BRIGHTNESS_DIM || index >= n {
                return Err(Error::shape(format!(
                    "brightness rows must be [n, {BRIGHTNESS_DIM}], got {:?}",
                    t.shape()
                )));
            }
            let mut out = [0.0; BRIGHTNESS_DIM];
            out.copy_from_slice(&t.data()[index * d..(index + 1) * d]);
            Ok(out)
        };
        Self::new(row(mu)?, row(logvar)?)
    }

    pub fn mean_code(&self) -> BrightnessCode {
        BrightnessCode(self.mu)
    }
}

/// A realized brightness code fed to the decoders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrightnessCode(pub [f32; BRIGHTNESS_DIM]);

impl BrightnessCode {
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(&[1, BRIGHTNESS_DIM], self.0.to_vec())
    }
}

/// Draws a brightness code: the mean for inference, a reparameterized
/// sample for training.
pub fn sample_brightness(post: &BrightnessPosterior, mode: SamplingMode, seed: u64) -> BrightnessCode {
    match mode {
        SamplingMode::Infer => post.mean_code(),
        SamplingMode::Train => {
            let mut rng = rng::stream(seed, &[tag::LATENT]);
            let mut code = [0.0; BRIGHTNESS_DIM];
            for (c, (&mu, &lv)) in code.iter_mut().zip(post.mu.iter().zip(&post.logvar)) {
                let eps: f32 = StandardNormal.sample(&mut rng);
                *c = mu + (0.5 * lv).exp() * eps;
            }
            BrightnessCode(code)
        }
    }
}

/// Sigmoid scores of one discriminator over a patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f32>,
}

/// Adam moments for one group of parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    /// Number of updates applied.
    pub t: u64,
    pub m: BTreeMap<String, Tensor<f32>>,
    pub v: BTreeMap<String, Tensor<f32>>,
}

/// Intermediate values of one [`ModelState::enhance`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct SwapTrace {
    pub content: ContentFeature,
    pub guidance_posterior: BrightnessPosterior,
    pub code: BrightnessCode,
    pub output: ImageTensor,
}

/// All learnable parameters plus optimizer moments, step counter and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub arch: ArchConfig,
    pub params: ParamStore,
    pub opt_generator: AdamState,
    pub opt_discriminator: AdamState,
    pub step: u64,
    pub seed: u64,
}

fn check_side(what: &str, img: &ImageTensor, min: usize, multiple: usize) -> Result<()> {
    let (h, w) = img.dims();
    if h % multiple != 0 || w % multiple != 0 {
        return Err(Error::shape(format!(
            "{what} is {h}x{w}; height and width must be divisible by {multiple}"
        )));
    }
    if h < min || w < min {
        return Err(Error::shape(format!(
            "{what} is {h}x{w}; height and width must be at least {min}"
        )));
    }
    Ok(())
}

impl ModelState {
    /// Fresh parameters for `arch`, drawn from `seed`.
    pub fn init(arch: ArchConfig, seed: u64) -> Self {
        ModelState {
            arch,
            params: ParamStore::init(&arch, seed),
            opt_generator: AdamState::default(),
            opt_discriminator: AdamState::default(),
            step: 0,
            seed,
        }
    }

    /// Same weights with a different padding mode.
    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.arch.padding = padding;
        self
    }

    pub fn encode_content(&self, image: &ImageTensor) -> Result<ContentFeature> {
        check_side("content input", image, MIN_ENCODER_SIDE, CONTENT_STRIDE)?;
        let bound = self.params.bind();
        let net = Network::new(self.arch, &bound);
        let out = net.content(&Var::constant(image.to_tensor()));
        ContentFeature::from_tensor(out.value().clone())
    }

    /// Guidance images of any size (at least 16 px per side) are accepted.
    pub fn encode_brightness(&self, image: &ImageTensor) -> Result<BrightnessPosterior> {
        check_side("brightness input", image, MIN_ENCODER_SIDE, 1)?;
        let bound = self.params.bind();
        let net = Network::new(self.arch, &bound);
        let (mu, logvar) = net.brightness(&Var::constant(image.to_tensor()));
        BrightnessPosterior::from_rows(mu.value(), logvar.value(), 0)
    }

    pub fn decode(
        &self,
        domain: Domain,
        content: &ContentFeature,
        code: &BrightnessCode,
    ) -> Result<ImageTensor> {
        let expected = self.arch.content_channels();
        if content.channels() != expected {
            return Err(Error::shape(format!(
                "content feature has {} channels, decoder expects {expected}",
                content.channels()
            )));
        }
        let bound = self.params.bind();
        let net = Network::new(self.arch, &bound);
        let out = net.decode(
            domain,
            &Var::constant(content.tensor().clone()),
            &Var::constant(code.to_tensor()),
        );
        ImageTensor::from_tensor(out.value(), 0)
    }

    /// Decodes the content of `low` with the posterior-mean brightness of
    /// `guidance` through the normal-light decoder.
    pub fn enhance(&self, low: &ImageTensor, guidance: &ImageTensor) -> Result<ImageTensor> {
        Ok(self.swap(Domain::Normal, low, guidance)?.output)
    }

    /// [`ModelState::enhance`] for inputs of any size: the low-light image
    /// is reflect-padded up to a valid size and the result cropped back.
    pub fn enhance_any(&self, low: &ImageTensor, guidance: &ImageTensor) -> Result<ImageTensor> {
        let (padded, (h, w)) = low.pad_reflect_to(CONTENT_STRIDE, MIN_ENCODER_SIDE);
        let (guidance, _) = guidance.pad_reflect_to(1, MIN_ENCODER_SIDE);
        self.enhance(&padded, &guidance)?.crop(0, 0, h, w)
    }

    /// Decodes the content of `normal` with the brightness of `low_ref`
    /// through the low-light decoder.
    pub fn darken(&self, normal: &ImageTensor, low_ref: &ImageTensor) -> Result<ImageTensor> {
        Ok(self.swap(Domain::Low, normal, low_ref)?.output)
    }

    /// The feature swap with its intermediate values exposed.
    pub fn swap(
        &self,
        target: Domain,
        structure: &ImageTensor,
        guidance: &ImageTensor,
    ) -> Result<SwapTrace> {
        let content = self.encode_content(structure)?;
        let guidance_posterior = self.encode_brightness(guidance)?;
        let code = sample_brightness(&guidance_posterior, SamplingMode::Infer, 0);
        let output = self.decode(target, &content, &code)?;
        Ok(SwapTrace {
            content,
            guidance_posterior,
            code,
            output,
        })
    }

    /// Sigmoid score maps of the three discriminators of `domain`, finest
    /// scale first.
    pub fn discriminate(&self, domain: Domain, image: &ImageTensor) -> Result<Vec<ScoreMap>> {
        check_side("discriminator input", image, MIN_DISCRIMINATOR_SIDE, 1)?;
        let bound = self.params.bind();
        let net = Network::new(self.arch, &bound);
        Ok(net
            .discriminator_logits(domain, &Var::constant(image.to_tensor()))
            .into_iter()
            .map(|logits| {
                let s = logits.sigmoid();
                let (_, _, h, w) = s.value().dims4();
                ScoreMap {
                    height: h,
                    width: w,
                    scores: s.value().data().to_vec(),
                }
            })
            .collect())
    }
}

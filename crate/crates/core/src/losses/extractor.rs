use std::path::Path;

use cidn_tensor::{Element, PadMode, Tensor, Var};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Where the perceptual feature weights come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExtractorSource {
    /// He-initialized random convolutions; needs no downloads.
    SeededRandom {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_widths")]
        widths: [usize; 3],
    },
    /// VGG-16 `features.*` weights converted to the container format.
    Pretrained { path: std::path::PathBuf },
}

fn default_widths() -> [usize; 3] {
    [16, 32, 64]
}

impl Default for ExtractorSource {
    fn default() -> Self {
        ExtractorSource::SeededRandom {
            seed: 0,
            widths: default_widths(),
        }
    }
}

/// Convolutions per stage, mirroring the first three VGG-16 blocks.
const STAGE_DEPTHS: [usize; 3] = [2, 2, 3];
/// Torchvision indices of those convolutions.
const VGG_INDICES: [&[usize]; 3] = [&[0, 2], &[5, 7], &[10, 12, 14]];
const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Debug, PartialEq)]
struct Conv {
    weight: Tensor<f64>,
    bias: Tensor<f64>,
}

/// Fixed three-stage convolutional pyramid. Each stage is a run of 3x3
/// zero-padded convolutions with ReLU; stages after the first start with a
/// 2x2 max pool. The feature maps are the outputs of the three stages.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    /// Optional per-channel affine applied to inputs first, as a 1x1 conv.
    input_affine: Option<Conv>,
    stages: Vec<Vec<Conv>>,
}

impl FeatureExtractor {
    pub fn from_source(source: &ExtractorSource) -> Result<Self> {
        match source {
            ExtractorSource::SeededRandom { seed, widths } => Ok(Self::seeded(*seed, *widths)),
            ExtractorSource::Pretrained { path } => Self::load_vgg16(path),
        }
    }

    pub fn seeded(seed: u64, widths: [usize; 3]) -> Self {
        let mut cin = 3;
        let mut stages = Vec::new();
        for (s, (&width, &depth)) in widths.iter().zip(&STAGE_DEPTHS).enumerate() {
            let mut convs = Vec::new();
            for l in 0..depth {
                let std = (2.0 / (9 * cin) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let mut rng = rng::stream(seed, &[tag::EXTRACTOR, s as u64, l as u64]);
                convs.push(Conv {
                    weight: Tensor::from_fn(&[width, cin, 3, 3], |_| normal.sample(&mut rng)),
                    bias: Tensor::zeros(&[width]),
                });
                cin = width;
            }
            stages.push(convs);
        }
        FeatureExtractor {
            input_affine: None,
            stages,
        }
    }

    /// Reads `features.{0,2,5,7,10,12,14}.{weight,bias}`; taps are relu1_2,
    /// relu2_2 and relu3_3, with ImageNet input normalization.
    pub fn load_vgg16(path: &Path) -> Result<Self> {
        let c = Container::load(path)?;
        let mut stages = Vec::new();
        let mut cin = 3;
        for indices in VGG_INDICES {
            let mut convs = Vec::new();
            for &i in indices {
                let get = |suffix: &str| {
                    let key = format!("features.{i}.{suffix}");
                    c.arrays.get(&key).map(|t| t.cast::<f64>()).ok_or_else(|| {
                        Error::Checkpoint(format!("{}: missing array `{key}`", path.display()))
                    })
                };
                let weight = get("weight")?;
                let bias = get("bias")?;
                let s = weight.shape();
                if s.len() != 4 || s[1] != cin || s[2] != 3 || s[3] != 3 || bias.shape() != [s[0]] {
                    return Err(Error::Checkpoint(format!(
                        "{}: features.{i} has unexpected shape {s:?}",
                        path.display()
                    )));
                }
                cin = s[0];
                convs.push(Conv { weight, bias });
            }
            stages.push(convs);
        }
        let mut weight = Tensor::zeros(&[3, 3, 1, 1]);
        for ch in 0..3 {
            weight.data_mut()[ch * 3 + ch] = 1.0 / IMAGENET_STD[ch];
        }
        let bias = Tensor::from_fn(&[3], |ch| -IMAGENET_MEAN[ch] / IMAGENET_STD[ch]);
        Ok(FeatureExtractor {
            input_affine: Some(Conv { weight, bias }),
            stages,
        })
    }

    /// `(weight, bias)` of every convolution, grouped by stage.
    pub fn layers(&self) -> Vec<Vec<(&Tensor<f64>, &Tensor<f64>)>> {
        self.stages
            .iter()
            .map(|s| s.iter().map(|c| (&c.weight, &c.bias)).collect())
            .collect()
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Feature maps of an `[n, 3, h, w]` batch, one per stage.
    pub fn features<T: Element>(&self, x: &Var<T>) -> Vec<Var<T>> {
        let apply = |conv: &Conv, x: &Var<T>, pad: usize| {
            let w = Var::constant(conv.weight.cast::<T>());
            let b = Var::constant(conv.bias.cast::<T>());
            x.pad_same(pad, PadMode::Zero).conv2d(&w, Some(&b), 1)
        };
        let mut h = match &self.input_affine {
            Some(a) => apply(a, x, 0),
            None => x.clone(),
        };
        let mut out = Vec::with_capacity(self.stages.len());
        for (s, convs) in self.stages.iter().enumerate() {
            if s > 0 {
                h = h.max_pool2x();
            }
            for conv in convs {
                h = apply(conv, &h, 1).relu();
            }
            out.push(h.clone());
        }
        out
    }
}

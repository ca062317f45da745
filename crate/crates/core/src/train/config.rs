use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BatchSpec, CorruptionRecipe, Noise};
use crate::error::{Error, Result};
use crate::losses::{ExtractorSource, LossWeights};
use crate::model::ArchConfig;

/// `[data]`: where pairs live and how they are corrupted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub root: PathBuf,
    pub eval_root: Option<PathBuf>,
    /// Largest simulated misalignment of normal-light images, in pixels.
    pub max_shift: usize,
    pub noise: Noise,
    /// Random horizontal flips, applied identically to both images.
    pub flip: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            root: PathBuf::from("data/train"),
            eval_root: None,
            max_shift: 0,
            noise: Noise::None,
            flip: true,
        }
    }
}

impl DataConfig {
    pub fn recipe(&self) -> CorruptionRecipe {
        CorruptionRecipe {
            max_shift: self.max_shift,
            noise: self.noise,
        }
    }
}

/// How brightness codes are formed during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSampling {
    /// `mu + exp(logvar / 2) * eps`.
    #[default]
    Reparameterized,
    /// The posterior mean, which makes a step deterministic given its batch.
    Mean,
}

/// `[train]`: optimizer and schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub patch: usize,
    /// Step count at which training stops (absolute, so resumed runs share it).
    pub max_steps: u64,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the first and last.
    pub checkpoint_interval: u64,
    pub out_dir: PathBuf,
    pub latent_sampling: LatentSampling,
    /// Batches produced ahead on a background thread.
    pub prefetch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 8,
            patch: 256,
            max_steps: 100_000,
            seed: 0,
            checkpoint_interval: 5_000,
            out_dir: PathBuf::from("runs/default"),
            latent_sampling: LatentSampling::Reparameterized,
            prefetch: 2,
        }
    }
}

/// `[ablation]`: removable terms and the cross-cycle variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub no_con: bool,
    pub no_kl: bool,
    pub no_per: bool,
    pub no_adv: bool,
    pub cross_cycle: bool,
}

/// A complete run description, read from a TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub ablation: Ablation,
    pub perceptual: ExtractorSource,
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(&e, text))?;
        for p in [Some(&mut cfg.data.root), cfg.data.eval_root.as_mut(), Some(&mut cfg.train.out_dir)]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        if let ExtractorSource::Pretrained { path } = &mut cfg.perceptual {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        let t = &self.train;
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return bad("train.learning_rate", format!("must be positive, got {}", t.learning_rate));
        }
        for (key, b) in [("train.beta1", t.beta1), ("train.beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(key, format!("must lie in [0, 1), got {b}"));
            }
        }
        if t.batch_size == 0 {
            return bad("train.batch_size", "must be at least 1".into());
        }
        if t.patch < 64 || t.patch % 4 != 0 {
            return bad(
                "train.patch",
                format!("must be a multiple of 4 and at least 64, got {}", t.patch),
            );
        }
        match self.data.noise {
            Noise::Gaussian { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                return bad("data.noise.sigma", format!("must be nonnegative, got {sigma}"))
            }
            Noise::Poisson { lambda } if !(lambda.is_finite() && lambda > 0.0) => {
                return bad("data.noise.lambda", format!("must be positive, got {lambda}"))
            }
            _ => {}
        }
        self.model.validate()?;
        self.loss.validate()
    }

    /// Loss weights with ablated terms forced to zero.
    pub fn effective_weights(&self) -> LossWeights {
        let a = &self.ablation;
        let mut w = self.loss;
        if a.no_con {
            w.content = 0.0;
        }
        if a.no_kl {
            w.kl = 0.0;
        }
        if a.no_per {
            w.perceptual = 0.0;
        }
        if a.no_adv {
            w.adversarial = 0.0;
        }
        w
    }

    pub fn batch_spec(&self) -> BatchSpec {
        BatchSpec {
            batch: self.train.batch_size,
            patch: self.train.patch,
            flip: self.data.flip,
        }
    }
}

/// Turns a TOML error into a config error naming the offending key, with
/// its enclosing table when the span points inside one.
fn config_error(e: &toml::de::Error, text: &str) -> Error {
    let message = e.message().to_string();
    let quoted = |prefix: &str| {
        let rest = &message[message.find(prefix)? + prefix.len()..];
        let end = rest.find('`')?;
        Some(rest[..end].to_string())
    };
    let key = quoted("unknown field `")
        .or_else(|| quoted("missing field `"))
        .map(|field| match e.span().and_then(|s| enclosing_table(text, s.start)) {
            Some(table) if table != field => format!("{table}.{field}"),
            _ => field,
        })
        .or_else(|| quoted("unknown variant `"))
        .unwrap_or_else(|| match e.span() {
            Some(span) => format!("at byte {}", span.start),
            None => "<document>".into(),
        });
    Error::Config { key, message }
}

/// Name of the `[table]` header in force at byte `offset`.
fn enclosing_table(text: &str, offset: usize) -> Option<String> {
    text.get(..offset)?
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
}

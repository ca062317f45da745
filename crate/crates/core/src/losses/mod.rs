//! The training objective: reconstruction, content consistency, KL,
//! perceptual and multi-scale adversarial terms, and their weighted sum.
//!
//! Every term exists in two forms. [`terms`] builds differentiable graph
//! nodes over batches (used by training and the gradient checks); the free
//! functions here evaluate the same terms on typed values, in `f64`.

mod extractor;
pub mod terms;

use cidn_tensor::{Tensor, Var};
use serde::{Deserialize, Serialize};

pub use extractor::{ExtractorSource, FeatureExtractor};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::{BrightnessPosterior, ContentFeature, ScoreMap};

/// Weights of the non-reconstruction terms (the two reconstruction terms
/// always have weight 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Content consistency; 0.2 is the usual choice for noisy data.
    pub content: f64,
    pub kl: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            content: 1.0,
            kl: 0.001,
            perceptual: 0.1,
            adversarial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, w) in [
            ("loss.content", self.content),
            ("loss.kl", self.kl),
            ("loss.perceptual", self.perceptual),
            ("loss.adversarial", self.adversarial),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config {
                    key: key.into(),
                    message: format!("weight must be a nonnegative number, got {w}"),
                });
            }
        }
        Ok(())
    }
}

/// Every loss component of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub rec_x: f64,
    pub rec_y: f64,
    pub con: f64,
    pub kl_x: f64,
    pub kl_y: f64,
    pub per_x: f64,
    pub per_y: f64,
    pub adv_g_x: f64,
    pub adv_g_y: f64,
    pub adv_d_x: f64,
    pub adv_d_y: f64,
    /// Generator-side weighted sum.
    pub total: f64,
    /// Cross-cycle reconstruction, only nonzero when that variant is on.
    pub cross_cycle: f64,
}

impl LossReport {
    pub const HEADER: &'static str = "step,rec_x,rec_y,con,kl_x,kl_y,per_x,per_y,adv_g,adv_d,total";

    /// Named components in a fixed order, for diagnostics.
    pub fn components(&self) -> [(&'static str, f64); 13] {
        [
            ("rec_x", self.rec_x),
            ("rec_y", self.rec_y),
            ("con", self.con),
            ("kl_x", self.kl_x),
            ("kl_y", self.kl_y),
            ("per_x", self.per_x),
            ("per_y", self.per_y),
            ("adv_g_x", self.adv_g_x),
            ("adv_g_y", self.adv_g_y),
            ("adv_d_x", self.adv_d_x),
            ("adv_d_y", self.adv_d_y),
            ("cross_cycle", self.cross_cycle),
            ("total", self.total),
        ]
    }

    /// One metrics-log line matching [`LossReport::HEADER`].
    pub fn log_line(&self, step: u64) -> String {
        format!(
            "{step},{},{},{},{},{},{},{},{},{},{}",
            self.rec_x,
            self.rec_y,
            self.con,
            self.kl_x,
            self.kl_y,
            self.per_x,
            self.per_y,
            self.adv_g_x + self.adv_g_y,
            self.adv_d_x + self.adv_d_y,
            self.total
        )
    }
}

/// `rec_x + rec_y + w1 con + w2 (kl_x + kl_y) + w3 (per_x + per_y) + w4 (adv_g_x + adv_g_y)`,
/// plus the cross-cycle term at unit weight.
pub fn total_loss(r: &LossReport, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    if let Some((name, _)) = r.components()[..12].iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("loss component `{name}` is not finite")));
    }
    Ok(r.rec_x
        + r.rec_y
        + w.content * r.con
        + w.kl * (r.kl_x + r.kl_y)
        + w.perceptual * (r.per_x + r.per_y)
        + w.adversarial * (r.adv_g_x + r.adv_g_y)
        + r.cross_cycle)
}

fn check_same(what: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

fn image64(img: &ImageTensor) -> Var<f64> {
    Var::constant(img.to_tensor().cast::<f64>())
}

/// Mean absolute difference of two content features.
pub fn content_consistency(cx: &ContentFeature, cy: &ContentFeature) -> Result<f64> {
    check_same("content consistency", cx.tensor().shape(), cy.tensor().shape())?;
    let a = Var::constant(cx.tensor().cast::<f64>());
    let b = Var::constant(cy.tensor().cast::<f64>());
    Ok(terms::l1(&a, &b).value().item())
}

/// Mean absolute difference of two images.
pub fn reconstruction_l1(pred: &ImageTensor, target: &ImageTensor) -> Result<f64> {
    check_same(
        "reconstruction",
        &[pred.height(), pred.width()],
        &[target.height(), target.width()],
    )?;
    Ok(terms::l1(&image64(pred), &image64(target)).value().item())
}

/// KL divergence from the posterior to the standard normal prior.
pub fn kl_gaussian(post: &BrightnessPosterior) -> Result<f64> {
    if post.logvar.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite logvar".into()));
    }
    let d = post.mu.len();
    let mu = Var::constant(Tensor::new(&[1, d], post.mu.iter().map(|&v| v as f64).collect()));
    let lv = Var::constant(Tensor::new(
        &[1, d],
        post.logvar.iter().map(|&v| v as f64).collect(),
    ));
    Ok(terms::kl(&mu, &lv).value().item())
}

/// Sum over feature maps of the mean absolute feature difference.
pub fn perceptual(a: &ImageTensor, b: &ImageTensor, fx: &FeatureExtractor) -> Result<f64> {
    check_same("perceptual", &[a.height(), a.width()], &[b.height(), b.width()])?;
    Ok(terms::perceptual(fx, &image64(a), &image64(b)).value().item())
}

fn score_vars(maps: &[ScoreMap]) -> Result<Vec<Var<f64>>> {
    maps.iter()
        .map(|m| {
            if m.scores.len() != m.height * m.width || m.scores.is_empty() {
                return Err(Error::shape(format!(
                    "score map {}x{} holds {} values",
                    m.height,
                    m.width,
                    m.scores.len()
                )));
            }
            if let Some(s) = m.scores.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
                return Err(Error::InvalidArgument(format!(
                    "discriminator score {s} outside (0, 1)"
                )));
            }
            Ok(Var::constant(Tensor::new(
                &[1, 1, m.height, m.width],
                m.scores.iter().map(|&v| v as f64).collect(),
            )))
        })
        .collect()
}

/// Discriminator loss over matching lists of real and fake score maps.
pub fn adversarial_d(real: &[ScoreMap], fake: &[ScoreMap]) -> Result<f64> {
    if real.len() != fake.len() {
        return Err(Error::shape(format!(
            "{} real score maps but {} fake",
            real.len(),
            fake.len()
        )));
    }
    let (r, f) = (score_vars(real)?, score_vars(fake)?);
    Ok(terms::adversarial_d_scores(&r, &f).value().item())
}

/// Non-saturating generator loss over fake score maps.
pub fn adversarial_g(fake: &[ScoreMap]) -> Result<f64> {
    Ok(terms::adversarial_g_scores(&score_vars(fake)?).value().item())
}

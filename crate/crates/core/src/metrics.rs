//! Full-reference quality metrics, luminance histograms and dataset
//! evaluation.
//!
//! PSNR is computed on RGB with peak 1. SSIM is computed on Rec. 601
//! luminance with an 11x11 Gaussian window (sigma 1.5) over valid window
//! positions only, with `C1 = 0.01^2` and `C2 = 0.03^2`.

use std::fmt::Write as _;

use crate::data::{DatasetManifest, ImagePair};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::model::ModelState;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;
pub const HISTOGRAM_BINS: usize = 256;

fn check_dims(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)`; `+inf` for identical images.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_dims(a, b)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| {
            let d = p as f64 - q as f64;
            d * d
        })
        .sum();
    let mse = sse / a.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| taps[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of the luminance planes.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_dims(a, b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let la = a.luminance();
    let lb = b.luminance();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let f = |p: &[f64]| filter_valid(p, h, w, &taps);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = f(&la);
    let mu_b = f(&lb);
    let saa = f(&prod(&la, &la));
    let sbb = f(&prod(&lb, &lb));
    let sab = f(&prod(&la, &lb));
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = saa[i] - ma * ma;
            let vb = sbb[i] - mb * mb;
            let cov = sab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Normalized histogram of per-pixel luminance; value `v` falls into bin
/// `min(floor(v * bins), bins - 1)`.
pub fn luminance_histogram(img: &ImageTensor, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    let lum = img.luminance();
    if lum.is_empty() {
        return Err(Error::InvalidImage("empty image".into()));
    }
    let mut counts = vec![0u64; bins];
    for v in &lum {
        let b = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = lum.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Histogram intersection `sum_i min(h1_i, h2_i)`.
pub fn histogram_alignment(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::shape(format!(
            "histograms have {} and {} bins",
            h1.len(),
            h2.len()
        )));
    }
    Ok(h1.iter().zip(h2).map(|(a, b)| a.min(*b)).sum::<f64>().clamp(0.0, 1.0))
}

/// Alignment of the 256-bin luminance histograms of two images.
pub fn image_alignment(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    histogram_alignment(
        &luminance_histogram(a, HISTOGRAM_BINS)?,
        &luminance_histogram(b, HISTOGRAM_BINS)?,
    )
}

/// Anything that turns a low-light image and a guidance image into an
/// enhanced image. The whole pair is passed so test stubs can cheat.
pub trait Enhancer {
    fn enhance_pair(&self, pair: &ImagePair, guidance: &ImageTensor) -> Result<ImageTensor>;
}

impl Enhancer for ModelState {
    fn enhance_pair(&self, pair: &ImagePair, guidance: &ImageTensor) -> Result<ImageTensor> {
        self.enhance_any(&pair.low, guidance)
    }
}

/// Returns the ground truth.
pub struct OracleEnhancer;

impl Enhancer for OracleEnhancer {
    fn enhance_pair(&self, pair: &ImagePair, _: &ImageTensor) -> Result<ImageTensor> {
        Ok(pair.normal.clone())
    }
}

/// Returns the low-light input unchanged.
pub struct IdentityEnhancer;

impl Enhancer for IdentityEnhancer {
    fn enhance_pair(&self, pair: &ImagePair, _: &ImageTensor) -> Result<ImageTensor> {
        Ok(pair.low.clone())
    }
}

/// Which guidance image each pair is enhanced with.
#[derive(Clone, Debug, Default)]
pub enum GuidancePolicy {
    /// The pair's own normal-light image.
    #[default]
    Paired,
    /// One image for every pair.
    Fixed(ImageTensor),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Alignment of output and guidance luminance histograms.
    pub alignment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_alignment: f64,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        EvalReport {
            mean_psnr: mean(|r| r.psnr),
            mean_ssim: mean(|r| r.ssim),
            mean_alignment: mean(|r| r.alignment),
            rows,
        }
    }

    /// One row per image plus a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,psnr,ssim,hist_alignment\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.id, r.psnr, r.ssim, r.alignment);
        }
        let _ = writeln!(
            s,
            "mean,{},{},{}",
            self.mean_psnr, self.mean_ssim, self.mean_alignment
        );
        s
    }

    pub fn pretty(&self) -> String {
        let mut s = format!("{:<24} {:>10} {:>8} {:>10}\n", "id", "psnr", "ssim", "alignment");
        for r in self.rows.iter().map(|r| (r.id.as_str(), r.psnr, r.ssim, r.alignment)).chain([(
            "mean",
            self.mean_psnr,
            self.mean_ssim,
            self.mean_alignment,
        )]) {
            let _ = writeln!(s, "{:<24} {:>10.4} {:>8.4} {:>10.4}", r.0, r.1, r.2, r.3);
        }
        s
    }
}

/// Scores a single enhanced pair.
pub fn score_pair(
    enhancer: &dyn Enhancer,
    pair: &ImagePair,
    policy: &GuidancePolicy,
) -> Result<EvalRow> {
    let guidance = match policy {
        GuidancePolicy::Paired => &pair.normal,
        GuidancePolicy::Fixed(g) => g,
    };
    let out = enhancer.enhance_pair(pair, guidance)?;
    Ok(EvalRow {
        id: pair.id.clone(),
        psnr: psnr(&out, &pair.normal)?,
        ssim: ssim(&out, &pair.normal)?,
        alignment: image_alignment(&out, guidance)?,
    })
}

/// Enhances every pair of `manifest` in order and scores it against its
/// normal-light image.
pub fn evaluate(
    manifest: &DatasetManifest,
    enhancer: &dyn Enhancer,
    policy: &GuidancePolicy,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no pairs in {}",
            manifest.root.display()
        )));
    }
    let rows = (0..manifest.len())
        .map(|i| score_pair(enhancer, &manifest.load_pair(i)?, policy))
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_rows(rows))
}

//! Independent reference implementations shared by the test targets.
//! Each one is a direct loop over the definition, with no shared code
//! paths into the crate under test.

#![allow(dead_code)]

use cidn_core::losses::FeatureExtractor;
use cidn_core::model::ScoreMap;
use cidn_core::ImageTensor;
use cidn_tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, |_, _, _| rng.random_range(0.0f32..1.0))
}

pub fn random_scores(rng: &mut ChaCha8Rng, side: usize) -> Vec<ScoreMap> {
    (0..3)
        .map(|k| {
            let s = (side >> k).max(1);
            ScoreMap {
                height: s,
                width: s,
                scores: (0..s * s).map(|_| rng.random_range(0.01f32..0.99)).collect(),
            }
        })
        .collect()
}


pub fn brute_l1(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] as f64 - b[i] as f64).abs();
    }
    s / a.len() as f64
}

pub fn brute_kl(mu: &[f32], lv: &[f32]) -> f64 {
    let mut s = 0.0;
    for d in 0..mu.len() {
        let (m, l) = (mu[d] as f64, lv[d] as f64);
        s += 0.5 * (m * m + l.exp() - l - 1.0);
    }
    s
}

pub fn brute_adv_d(real: &[ScoreMap], fake: &[ScoreMap]) -> f64 {
    let mut total = 0.0;
    for k in 0..real.len() {
        let mut s = 0.0;
        for i in 0..real[k].scores.len() {
            s += -(real[k].scores[i] as f64).ln() - (1.0 - fake[k].scores[i] as f64).ln();
        }
        total += s / real[k].scores.len() as f64;
    }
    total
}

pub fn brute_adv_g(fake: &[ScoreMap]) -> f64 {
    let mut total = 0.0;
    for m in fake {
        let mut s = 0.0;
        for &v in &m.scores {
            s -= (v as f64).ln();
        }
        total += s / m.scores.len() as f64;
    }
    total
}

/// Planar `[c][h][w]` feature maps computed with direct loops.
pub struct Planes {
    c: usize,
    h: usize,
    w: usize,
    v: Vec<f64>,
}

pub fn brute_conv3_relu(x: &Planes, weight: &Tensor<f64>, bias: &Tensor<f64>) -> Planes {
    let cout = weight.shape()[0];
    let mut v = vec![0.0; cout * x.h * x.w];
    for o in 0..cout {
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut s = bias.data()[o];
                for i in 0..x.c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as isize + ky as isize - 1;
                            let sx = xx as isize + kx as isize - 1;
                            if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                continue;
                            }
                            s += weight.data()[((o * x.c + i) * 3 + ky) * 3 + kx]
                                * x.v[(i * x.h + sy as usize) * x.w + sx as usize];
                        }
                    }
                }
                v[(o * x.h + y) * x.w + xx] = s.max(0.0);
            }
        }
    }
    Planes { c: cout, h: x.h, w: x.w, v }
}

pub fn brute_maxpool(x: &Planes) -> Planes {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut v = vec![0.0; x.c * h * w];
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                let at = |dy: usize, dx: usize| x.v[(c * x.h + 2 * y + dy) * x.w + 2 * xx + dx];
                v[(c * h + y) * w + xx] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
            }
        }
    }
    Planes { c: x.c, h, w, v }
}

pub fn brute_features(fx: &FeatureExtractor, img: &ImageTensor) -> Vec<Planes> {
    let (h, w) = img.dims();
    let mut v = vec![0.0; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                v[(c * h + y) * w + x] = img.get(y, x, c) as f64;
            }
        }
    }
    let mut cur = Planes { c: 3, h, w, v };
    let mut out = Vec::new();
    for (s, stage) in fx.layers().into_iter().enumerate() {
        if s > 0 {
            cur = brute_maxpool(&cur);
        }
        for (wt, b) in stage {
            cur = brute_conv3_relu(&cur, wt, b);
        }
        out.push(Planes { c: cur.c, h: cur.h, w: cur.w, v: cur.v.clone() });
    }
    out
}

pub fn brute_perceptual(fx: &FeatureExtractor, a: &ImageTensor, b: &ImageTensor) -> f64 {
    let fa = brute_features(fx, a);
    let fb = brute_features(fx, b);
    let mut total = 0.0;
    for (p, q) in fa.iter().zip(&fb) {
        let mut s = 0.0;
        for i in 0..p.v.len() {
            s += (p.v[i] - q.v[i]).abs();
        }
        total += s / p.v.len() as f64;
    }
    total
}

/// Norm-wise relative error between the tape gradient of `f` and central
/// differences with step `h`.
pub fn gradient_error(inputs: &[Tensor<f64>], f: &dyn Fn(&[Var<f64>]) -> Var<f64>) -> f64 {
    let h = 1e-4;
    let tape = Tape::new();
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let grads = tape.backward(&f(&vars));
    let eval = |ins: &[Tensor<f64>]| {
        let consts: Vec<Var<f64>> = ins.iter().map(|t| Var::constant(t.clone())).collect();
        f(&consts).value().item()
    };
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(v);
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            diff += (analytic.data()[i] - fd).powi(2);
            norm += fd.powi(2);
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

pub fn brute_psnr(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..3 {
                s += (a.get(y, x, c) as f64 - b.get(y, x, c) as f64).powi(2);
            }
        }
    }
    10.0 * (1.0 / (s / (a.height() * a.width() * 3) as f64)).log10()
}

/// Direct double loop over every valid 11x11 window with the 2-D kernel.
pub fn brute_ssim(a: &ImageTensor, b: &ImageTensor) -> f64 {
    let mut k = [[0.0f64; 11]; 11];
    let mut norm = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-(((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5))).exp();
            norm += *v;
        }
    }
    let (h, w) = a.dims();
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = k[i][j] / norm;
                    let la = a.pixel_luminance(y + i, x + j);
                    let lb = b.pixel_luminance(y + i, x + j);
                    ma += g * la;
                    mb += g * lb;
                    saa += g * la * la;
                    sbb += g * lb * lb;
                    sab += g * la * lb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4))
                / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
            count += 1;
        }
    }
    total / count as f64
}

pub fn moments(img: &ImageTensor) -> (f64, f64) {
    let n = img.data().len() as f64;
    let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = img.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Mean and variance of `min(N / lam, 1)` with `N ~ Poisson(v * lam)`,
/// summed directly over the mass function.
pub fn clipped_poisson_moments(v: f64, lam: f64) -> (f64, f64) {
    let rate = v * lam;
    let (mut p, mut m1, mut m2) = ((-rate).exp(), 0.0, 0.0);
    for k in 0..200 {
        if k > 0 {
            p *= rate / k as f64;
        }
        let x = (k as f64 / lam).min(1.0);
        m1 += p * x;
        m2 += p * x * x;
    }
    (m1, m2 - m1 * m1)
}

pub fn image_tensor(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(&[1, 3, 8, 8], |_| rng.random_range(0.05..0.95))
}

/// Pairs whose elementwise difference stays away from the |.| kink.
pub fn separated_pair(rng: &mut ChaCha8Rng, shape: &[usize]) -> [Tensor<f64>; 2] {
    let a = Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let b = a.map(|v: f64| {
        let d = 0.05 + 0.3 * (v * 7.0).sin().abs();
        if (v * 13.0).cos() > 0.0 { v + d } else { v - d }
    });
    [a, b]
}

//! Procedural scenes: smooth color gradients with overlaid discs, boxes and
//! stripes. Used for the service's default guidance gallery and for
//! self-contained demos and tests.

use rand::Rng;

use crate::image::ImageTensor;
use crate::rng;

const TAG_SCENE: u64 = 100;

enum Shape {
    Disc { cy: f32, cx: f32, r: f32 },
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Stripes { period: f32, angle: f32 },
}

/// A normal-light scene of `height x width`, fully determined by `seed`.
pub fn scene(seed: u64, height: usize, width: usize) -> ImageTensor {
    let mut rng = rng::stream(seed, &[TAG_SCENE]);
    let mut color = || [rng.random_range(0.2f32..0.9), rng.random_range(0.2f32..0.9), rng.random_range(0.2f32..0.9)];
    let top = color();
    let bottom = color();
    let mut rng = rng::stream(seed, &[TAG_SCENE, 1]);
    let (h, w) = (height as f32, width as f32);
    let shapes: Vec<(Shape, [f32; 3])> = (0..5)
        .map(|i| {
            let c = [rng.random_range(0.05f32..1.0), rng.random_range(0.05f32..1.0), rng.random_range(0.05f32..1.0)];
            let shape = match i % 3 {
                0 => Shape::Disc {
                    cy: rng.random_range(0.0..h),
                    cx: rng.random_range(0.0..w),
                    r: rng.random_range(0.08..0.3) * h.min(w),
                },
                1 => {
                    let (ya, yb) = (rng.random_range(0.0..h), rng.random_range(0.0..h));
                    let (xa, xb) = (rng.random_range(0.0..w), rng.random_range(0.0..w));
                    Shape::Rect {
                        y0: ya.min(yb),
                        x0: xa.min(xb),
                        y1: ya.max(yb),
                        x1: xa.max(xb),
                    }
                }
                _ => Shape::Stripes {
                    period: rng.random_range(4.0..12.0),
                    angle: rng.random_range(0.0..std::f32::consts::PI),
                },
            };
            (shape, c)
        })
        .collect();
    ImageTensor::from_fn(height, width, |y, x, c| {
        let (fy, fx) = (y as f32 + 0.5, x as f32 + 0.5);
        let t = fy / h;
        let mut v = top[c] * (1.0 - t) + bottom[c] * t;
        for (shape, col) in &shapes {
            match *shape {
                Shape::Disc { cy, cx, r } => {
                    if (fy - cy).powi(2) + (fx - cx).powi(2) < r * r {
                        v = col[c];
                    }
                }
                Shape::Rect { y0, x0, y1, x1 } => {
                    if (y0..y1).contains(&fy) && (x0..x1).contains(&fx) {
                        v = 0.5 * (v + col[c]);
                    }
                }
                Shape::Stripes { period, angle } => {
                    let u = fx * angle.cos() + fy * angle.sin();
                    if (u / period).rem_euclid(1.0) < 0.5 {
                        v *= 0.85;
                    }
                }
            }
        }
        v
    })
}

/// A dark rendition of `normal`: gamma-lifted shadows then a global gain,
/// roughly what a short exposure looks like after tone mapping.
pub fn darken(normal: &ImageTensor, gain: f32) -> ImageTensor {
    ImageTensor::from_fn(normal.height(), normal.width(), |y, x, c| {
        gain * normal.get(y, x, c).powf(1.2)
    })
}

use crate::element::Element;
use crate::tape::Var;
use crate::tensor::Tensor;

/// How `pad2d` fills the border.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample (`dcb|abcd|cba`).
    Reflect,
    /// Wrap around (`bcd|abcd|abc`).
    Cyclic,
}

impl PadMode {
    /// Source index for padded position `i` (which may lie outside
    /// `0..len`), or `None` for a zero fill.
    pub fn source_index(self, i: isize, len: usize) -> Option<usize> {
        let n = len as isize;
        if (0..n).contains(&i) {
            return Some(i as usize);
        }
        match self {
            PadMode::Zero => None,
            PadMode::Cyclic => Some(i.rem_euclid(n) as usize),
            PadMode::Reflect => {
                if n == 1 {
                    return Some(0);
                }
                let period = 2 * (n - 1);
                let m = i.rem_euclid(period);
                Some(if m < n { m } else { period - m } as usize)
            }
        }
    }
}

fn index_map(pad_before: usize, pad_after: usize, len: usize, mode: PadMode) -> Vec<Option<usize>> {
    (0..len + pad_before + pad_after)
        .map(|o| mode.source_index(o as isize - pad_before as isize, len))
        .collect()
}

impl<T: Element> Var<T> {
    /// Pads the two spatial dimensions of an NCHW tensor.
    pub fn pad2d(&self, top: usize, bottom: usize, left: usize, right: usize, mode: PadMode) -> Var<T> {
        if top == 0 && bottom == 0 && left == 0 && right == 0 {
            return self.clone();
        }
        let (n, c, h, w) = self.value().dims4();
        let rows = index_map(top, bottom, h, mode);
        let cols = index_map(left, right, w, mode);
        let (ho, wo) = (rows.len(), cols.len());
        let x = self.value().data();
        let mut y = vec![T::zero(); n * c * ho * wo];
        for (plane_in, plane_out) in x.chunks(h * w).zip(y.chunks_mut(ho * wo)) {
            for (oi, ri) in rows.iter().enumerate() {
                let Some(ri) = ri else { continue };
                let src = &plane_in[ri * w..(ri + 1) * w];
                let dst = &mut plane_out[oi * wo..(oi + 1) * wo];
                for (d, ci) in dst.iter_mut().zip(&cols) {
                    if let Some(ci) = ci {
                        *d = src[*ci];
                    }
                }
            }
        }
        Var::record(&[self], Tensor::new(&[n, c, ho, wo], y), move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for (plane_g, plane_x) in g.data().chunks(ho * wo).zip(gx.chunks_mut(h * w)) {
                for (oi, ri) in rows.iter().enumerate() {
                    let Some(ri) = ri else { continue };
                    let src = &plane_g[oi * wo..(oi + 1) * wo];
                    for (gv, ci) in src.iter().zip(&cols) {
                        if let Some(ci) = ci {
                            plane_x[ri * w + ci] += *gv;
                        }
                    }
                }
            }
            vec![Some(Tensor::new(&[n, c, h, w], gx))]
        })
    }

    /// Same padding on all four sides.
    pub fn pad_same(&self, pad: usize, mode: PadMode) -> Var<T> {
        self.pad2d(pad, pad, pad, pad, mode)
    }

    /// Nearest-neighbour upsampling by a factor of two.
    pub fn upsample_nearest2x(&self) -> Var<T> {
        let (n, c, h, w) = self.value().dims4();
        let (ho, wo) = (2 * h, 2 * w);
        let x = self.value().data();
        let mut y = vec![T::zero(); n * c * ho * wo];
        for (pi, po) in x.chunks(h * w).zip(y.chunks_mut(ho * wo)) {
            for oi in 0..ho {
                let src = &pi[(oi / 2) * w..(oi / 2 + 1) * w];
                for (oj, d) in po[oi * wo..(oi + 1) * wo].iter_mut().enumerate() {
                    *d = src[oj / 2];
                }
            }
        }
        Var::record(&[self], Tensor::new(&[n, c, ho, wo], y), move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for (pg, px) in g.data().chunks(ho * wo).zip(gx.chunks_mut(h * w)) {
                for oi in 0..ho {
                    for oj in 0..wo {
                        px[(oi / 2) * w + oj / 2] += pg[oi * wo + oj];
                    }
                }
            }
            vec![Some(Tensor::new(&[n, c, h, w], gx))]
        })
    }

    /// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn avg_pool2x(&self) -> Var<T> {
        let (n, c, h, w) = self.value().dims4();
        let (ho, wo) = (h / 2, w / 2);
        assert!(ho > 0 && wo > 0, "avg_pool2x on a {h}x{w} map");
        let quarter = T::of(0.25);
        let x = self.value().data();
        let mut y = vec![T::zero(); n * c * ho * wo];
        for (pi, po) in x.chunks(h * w).zip(y.chunks_mut(ho * wo)) {
            for oi in 0..ho {
                for oj in 0..wo {
                    let r0 = 2 * oi * w + 2 * oj;
                    let r1 = r0 + w;
                    po[oi * wo + oj] = (pi[r0] + pi[r0 + 1] + pi[r1] + pi[r1 + 1]) * quarter;
                }
            }
        }
        Var::record(&[self], Tensor::new(&[n, c, ho, wo], y), move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for (pg, px) in g.data().chunks(ho * wo).zip(gx.chunks_mut(h * w)) {
                for oi in 0..ho {
                    for oj in 0..wo {
                        let v = pg[oi * wo + oj] * quarter;
                        let r0 = 2 * oi * w + 2 * oj;
                        let r1 = r0 + w;
                        px[r0] += v;
                        px[r0 + 1] += v;
                        px[r1] += v;
                        px[r1 + 1] += v;
                    }
                }
            }
            vec![Some(Tensor::new(&[n, c, h, w], gx))]
        })
    }

    /// 2x2 max pooling with stride 2. Ties route the gradient to the first
    /// maximum in row-major order.
    pub fn max_pool2x(&self) -> Var<T> {
        let (n, c, h, w) = self.value().dims4();
        let (ho, wo) = (h / 2, w / 2);
        assert!(ho > 0 && wo > 0, "max_pool2x on a {h}x{w} map");
        let x = self.value().data();
        let mut y = vec![T::zero(); n * c * ho * wo];
        let mut arg = vec![0usize; n * c * ho * wo];
        for (p, (pi, (po, pa))) in x
            .chunks(h * w)
            .zip(y.chunks_mut(ho * wo).zip(arg.chunks_mut(ho * wo)))
            .enumerate()
        {
            for oi in 0..ho {
                for oj in 0..wo {
                    let r0 = 2 * oi * w + 2 * oj;
                    let mut best = r0;
                    for idx in [r0 + 1, r0 + w, r0 + w + 1] {
                        if pi[idx] > pi[best] {
                            best = idx;
                        }
                    }
                    po[oi * wo + oj] = pi[best];
                    pa[oi * wo + oj] = p * h * w + best;
                }
            }
        }
        Var::record(&[self], Tensor::new(&[n, c, ho, wo], y), move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for (gv, &a) in g.data().iter().zip(&arg) {
                gx[a] += *gv;
            }
            vec![Some(Tensor::new(&[n, c, h, w], gx))]
        })
    }

    /// Mean over the spatial dimensions: `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(&self) -> Var<T> {
        let (n, c, h, w) = self.value().dims4();
        let hw = h * w;
        let inv = T::of(1.0 / hw as f64);
        let y: Vec<T> = self
            .value()
            .data()
            .chunks(hw)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        Var::record(&[self], Tensor::new(&[n, c], y), move |g, _| {
            let mut gx = Vec::with_capacity(n * c * hw);
            for &gv in g.data() {
                gx.extend(std::iter::repeat_n(gv * inv, hw));
            }
            vec![Some(Tensor::new(&[n, c, h, w], gx))]
        })
    }

    /// Concatenates NCHW tensors along the channel dimension.
    pub fn cat_channels(parts: &[&Var<T>]) -> Var<T> {
        assert!(!parts.is_empty(), "cat_channels of nothing");
        let (n, _, h, w) = parts[0].value().dims4();
        let hw = h * w;
        let chans: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (pn, pc, ph, pw) = p.value().dims4();
                assert_eq!((pn, ph, pw), (n, h, w), "cat_channels shape mismatch");
                pc
            })
            .collect();
        let total: usize = chans.iter().sum();
        let mut y = Vec::with_capacity(n * total * hw);
        for b in 0..n {
            for (p, &pc) in parts.iter().zip(&chans) {
                y.extend_from_slice(&p.value().data()[b * pc * hw..(b + 1) * pc * hw]);
            }
        }
        Var::record(parts, Tensor::new(&[n, total, h, w], y), move |g, needs| {
            let gd = g.data();
            chans
                .iter()
                .enumerate()
                .map(|(i, &pc)| {
                    needs[i].then(|| {
                        let offset: usize = chans[..i].iter().sum();
                        let mut gp = Vec::with_capacity(n * pc * hw);
                        for b in 0..n {
                            let start = (b * total + offset) * hw;
                            gp.extend_from_slice(&gd[start..start + pc * hw]);
                        }
                        Tensor::new(&[n, pc, h, w], gp)
                    })
                })
                .collect()
        })
    }

    /// Tiles a `[n, d]` code over an `h x w` grid: `[n, d, h, w]`.
    pub fn broadcast_spatial(&self, h: usize, w: usize) -> Var<T> {
        let (n, d) = self.value().dims2();
        let hw = h * w;
        let mut y = Vec::with_capacity(n * d * hw);
        for &v in self.value().data() {
            y.extend(std::iter::repeat_n(v, hw));
        }
        Var::record(&[self], Tensor::new(&[n, d, h, w], y), move |g, _| {
            let gx = g.data().chunks(hw).map(|p| p.iter().copied().sum::<T>()).collect();
            vec![Some(Tensor::new(&[n, d], gx))]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<T> {
        let from = self.shape().to_vec();
        let y = (*self.shared_value()).clone().reshape(shape);
        Var::record(&[self], y, move |g, _| vec![Some(g.clone().reshape(&from))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices_mirror_without_edge_repeat() {
        let got: Vec<_> = (-3..7)
            .map(|i| PadMode::Reflect.source_index(i, 4).unwrap())
            .collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn cyclic_and_zero_indices() {
        assert_eq!(PadMode::Cyclic.source_index(-1, 4), Some(3));
        assert_eq!(PadMode::Cyclic.source_index(5, 4), Some(1));
        assert_eq!(PadMode::Zero.source_index(-1, 4), None);
        assert_eq!(PadMode::Zero.source_index(2, 4), Some(2));
    }
}

use crate::element::{Accumulator, Element};
use crate::tape::Var;
use crate::tensor::Tensor;

impl<T: Element> Var<T> {
    /// Instance normalization without affine parameters: every `(n, c)`
    /// plane is shifted to zero mean and scaled to unit variance.
    ///
    /// Plane statistics use compensated `f64` sums, so they do not depend on
    /// where in the plane a value sits.
    pub fn instance_norm(&self, eps: f64) -> Var<T> {
        let (n, c, h, w) = self.value().dims4();
        let hw = h * w;
        let inv_hw = 1.0 / hw as f64;
        let x = self.value().data();
        let mut y = vec![T::zero(); n * c * hw];
        let mut inv_std = Vec::with_capacity(n * c);
        for (px, py) in x.chunks(hw).zip(y.chunks_mut(hw)) {
            let mut acc = Accumulator::default();
            px.iter().for_each(|v| acc.add(v.as_f64()));
            let mean = T::of(acc.value() * inv_hw);
            let mut acc = Accumulator::default();
            px.iter().for_each(|&v| {
                let d = v.as_f64() - mean.as_f64();
                acc.add(d * d);
            });
            let inv = T::of(1.0 / (acc.value() * inv_hw + eps).sqrt());
            for (o, &v) in py.iter_mut().zip(px) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let y = std::sync::Arc::new(Tensor::new(&[n, c, h, w], y));
        let out = std::sync::Arc::clone(&y);
        Var::record(&[self], y, move |g, _| {
            let mut gx = vec![T::zero(); n * c * hw];
            for (((pg, py), pgx), &inv) in g
                .data()
                .chunks(hw)
                .zip(out.data().chunks(hw))
                .zip(gx.chunks_mut(hw))
                .zip(&inv_std)
            {
                let mut sg = Accumulator::default();
                let mut sgy = Accumulator::default();
                for (&gv, &yv) in pg.iter().zip(py) {
                    sg.add(gv.as_f64());
                    sgy.add(gv.as_f64() * yv.as_f64());
                }
                let mean_g = sg.value() * inv_hw;
                let mean_gy = sgy.value() * inv_hw;
                let inv = inv.as_f64();
                for ((o, &gv), &yv) in pgx.iter_mut().zip(pg).zip(py) {
                    *o = T::of(inv * (gv.as_f64() - mean_g - yv.as_f64() * mean_gy));
                }
            }
            vec![Some(Tensor::new(&[n, c, h, w], gx))]
        })
    }
}

use crate::element::Element;
use crate::tape::Var;
use crate::tensor::Tensor;

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    /// Unfolds one `[c, h, w]` image into a `[c*kh*kw, ho*wo]` matrix.
    fn im2col<T: Element>(&self, x: &[T], col: &mut [T]) {
        let p = self.p();
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oi in 0..self.ho {
                        let src = &plane[(oi * self.stride + ki) * self.w..];
                        let d = &mut dst[oi * self.wo..(oi + 1) * self.wo];
                        for (oj, v) in d.iter_mut().enumerate() {
                            *v = src[oj * self.stride + kj];
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatter-adds columns back onto the image.
    fn col2im<T: Element>(&self, col: &[T], x: &mut [T]) {
        let p = self.p();
        for ci in 0..self.c {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ci * self.kh + ki) * self.kw + kj;
                    let src = &col[row * p..(row + 1) * p];
                    for oi in 0..self.ho {
                        let base = (oi * self.stride + ki) * self.w + kj;
                        for (oj, v) in src[oi * self.wo..(oi + 1) * self.wo].iter().enumerate() {
                            plane[base + oj * self.stride] += *v;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Element> Var<T> {
    /// Valid (unpadded) 2-D cross-correlation of `[n, c, h, w]` with
    /// `[o, c, kh, kw]` weights and an optional `[o]` bias.
    pub fn conv2d(&self, weight: &Var<T>, bias: Option<&Var<T>>, stride: usize) -> Var<T> {
        assert!(stride >= 1, "conv2d stride must be positive");
        let (n, c, h, w) = self.value().dims4();
        let (o, wc, kh, kw) = weight.value().dims4();
        assert_eq!(wc, c, "conv2d: input has {c} channels, weight expects {wc}");
        assert!(h >= kh && w >= kw, "conv2d: {h}x{w} input smaller than {kh}x{kw} kernel");
        if let Some(b) = bias {
            assert_eq!(b.shape(), [o], "conv2d bias shape");
        }
        let geom = ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            ho: (h - kh) / stride + 1,
            wo: (w - kw) / stride + 1,
        };
        let (k, p) = (geom.k(), geom.p());
        let x = self.shared_value();
        let wt = weight.shared_value();
        let mut y = vec![T::zero(); n * o * p];
        let mut col = vec![T::zero(); k * p];
        for b in 0..n {
            geom.im2col(&x.data()[b * c * h * w..(b + 1) * c * h * w], &mut col);
            let out = &mut y[b * o * p..(b + 1) * o * p];
            if let Some(bias) = bias {
                for (row, &bv) in out.chunks_mut(p).zip(bias.value().data()) {
                    row.fill(bv);
                }
            }
            let beta = if bias.is_some() { T::one() } else { T::zero() };
            // SAFETY: W is o x k, col is k x p, out is o x p, all row-major.
            unsafe {
                T::gemm(
                    o,
                    k,
                    p,
                    T::one(),
                    wt.data().as_ptr(),
                    k as isize,
                    1,
                    col.as_ptr(),
                    p as isize,
                    1,
                    beta,
                    out.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
        }
        let y = Tensor::new(&[n, o, geom.ho, geom.wo], y);

        let mut inputs = vec![self, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        Var::record(&inputs, y, move |g, needs| {
            let gd = g.data();
            let mut gx = needs[0].then(|| vec![T::zero(); n * c * h * w]);
            let mut gw = needs[1].then(|| vec![T::zero(); o * k]);
            let mut col = vec![T::zero(); k * p];
            let mut dcol = vec![T::zero(); k * p];
            for b in 0..n {
                let gy = &gd[b * o * p..(b + 1) * o * p];
                if let Some(gw) = gw.as_mut() {
                    geom.im2col(&x.data()[b * c * h * w..(b + 1) * c * h * w], &mut col);
                    // SAFETY: gy is o x p, col^T is p x k (strided view), gw is o x k.
                    unsafe {
                        T::gemm(
                            o,
                            p,
                            k,
                            T::one(),
                            gy.as_ptr(),
                            p as isize,
                            1,
                            col.as_ptr(),
                            1,
                            p as isize,
                            T::one(),
                            gw.as_mut_ptr(),
                            k as isize,
                            1,
                        );
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    // SAFETY: W^T is k x o (strided view), gy is o x p, dcol is k x p.
                    unsafe {
                        T::gemm(
                            k,
                            o,
                            p,
                            T::one(),
                            wt.data().as_ptr(),
                            1,
                            k as isize,
                            gy.as_ptr(),
                            p as isize,
                            1,
                            T::zero(),
                            dcol.as_mut_ptr(),
                            p as isize,
                            1,
                        );
                    }
                    geom.col2im(&dcol, &mut gx[b * c * h * w..(b + 1) * c * h * w]);
                }
            }
            let mut grads = vec![
                gx.map(|v| Tensor::new(&[n, c, h, w], v)),
                gw.map(|v| Tensor::new(&[o, c, kh, kw], v)),
            ];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| {
                    let mut gb = vec![T::zero(); o];
                    for (i, row) in gd.chunks(p).enumerate() {
                        gb[i % o] += row.iter().copied().sum::<T>();
                    }
                    Tensor::new(&[o], gb)
                }));
            }
            grads
        })
    }

    /// Affine map of `[n, i]` rows by `[o, i]` weights plus an `[o]` bias.
    pub fn linear(&self, weight: &Var<T>, bias: &Var<T>) -> Var<T> {
        let (n, i) = self.value().dims2();
        let (o, wi) = weight.value().dims2();
        assert_eq!(wi, i, "linear: input width {i}, weight expects {wi}");
        assert_eq!(bias.shape(), [o], "linear bias shape");
        let x = self.shared_value();
        let wt = weight.shared_value();
        let mut y = Vec::with_capacity(n * o);
        for _ in 0..n {
            y.extend_from_slice(bias.value().data());
        }
        // SAFETY: x is n x i, W^T is i x o (strided view), y is n x o.
        unsafe {
            T::gemm(
                n,
                i,
                o,
                T::one(),
                x.data().as_ptr(),
                i as isize,
                1,
                wt.data().as_ptr(),
                1,
                i as isize,
                T::one(),
                y.as_mut_ptr(),
                o as isize,
                1,
            );
        }
        Var::record(&[self, weight, bias], Tensor::new(&[n, o], y), move |g, needs| {
            let gd = g.data();
            let gx = needs[0].then(|| {
                let mut gx = vec![T::zero(); n * i];
                // SAFETY: g is n x o, W is o x i, gx is n x i.
                unsafe {
                    T::gemm(
                        n,
                        o,
                        i,
                        T::one(),
                        gd.as_ptr(),
                        o as isize,
                        1,
                        wt.data().as_ptr(),
                        i as isize,
                        1,
                        T::zero(),
                        gx.as_mut_ptr(),
                        i as isize,
                        1,
                    );
                }
                Tensor::new(&[n, i], gx)
            });
            let gw = needs[1].then(|| {
                let mut gw = vec![T::zero(); o * i];
                // SAFETY: g^T is o x n (strided view), x is n x i, gw is o x i.
                unsafe {
                    T::gemm(
                        o,
                        n,
                        i,
                        T::one(),
                        gd.as_ptr(),
                        1,
                        o as isize,
                        x.data().as_ptr(),
                        i as isize,
                        1,
                        T::zero(),
                        gw.as_mut_ptr(),
                        i as isize,
                        1,
                    );
                }
                Tensor::new(&[o, i], gw)
            });
            let gb = needs[2].then(|| {
                let mut gb = vec![T::zero(); o];
                for row in gd.chunks(o) {
                    for (acc, &v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                Tensor::new(&[o], gb)
            });
            vec![gx, gw, gb]
        })
    }
}

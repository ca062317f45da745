use std::sync::Arc;

use crate::element::Element;
use crate::tape::Var;
use crate::tensor::Tensor;

impl<T: Element> Var<T> {
    /// Elementwise map with derivative `dfdx(x, y)` given input and output.
    fn unary(&self, f: impl Fn(T) -> T, dfdx: impl Fn(T, T) -> T + 'static) -> Var<T> {
        let x = self.shared_value();
        let y = Arc::new(x.map(f));
        let out = Arc::clone(&y);
        Var::record(&[self], y, move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .zip(out.data())
                .map(|((&g, &x), &y)| g * dfdx(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape(), data))]
        })
    }

    pub fn neg(&self) -> Var<T> {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Var<T> {
        let c = T::of(c);
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Var<T> {
        let c = T::of(c);
        self.unary(move |x| x + c, |_, _| T::one())
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(T::exp, |_, y| y)
    }

    pub fn ln(&self) -> Var<T> {
        self.unary(T::ln, |x, _| x.recip())
    }

    pub fn abs(&self) -> Var<T> {
        self.unary(T::abs, |x, _| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn square(&self) -> Var<T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn relu(&self) -> Var<T> {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<T> {
        let s = T::of(slope);
        self.unary(
            move |x| if x > T::zero() { x } else { x * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn sigmoid(&self) -> Var<T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<T> {
        self.unary(
            |x| x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            |x, _| sigmoid(x),
        )
    }

    fn binary(
        &self,
        other: &Var<T>,
        f: impl Fn(T, T) -> T,
        grads: impl Fn(T, T) -> (T, T) + 'static,
    ) -> Var<T> {
        assert_eq!(
            self.shape(),
            other.shape(),
            "shape mismatch in elementwise binary op"
        );
        let a = self.shared_value();
        let b = other.shared_value();
        let y = a.zip_map(&b, f);
        Var::record(&[self, other], y, move |g, needs| {
            let mut ga = needs[0].then(|| Vec::with_capacity(g.numel()));
            let mut gb = needs[1].then(|| Vec::with_capacity(g.numel()));
            for ((&g, &a), &b) in g.data().iter().zip(a.data()).zip(b.data()) {
                let (da, db) = grads(a, b);
                if let Some(v) = ga.as_mut() {
                    v.push(g * da);
                }
                if let Some(v) = gb.as_mut() {
                    v.push(g * db);
                }
            }
            vec![
                ga.map(|v| Tensor::new(g.shape(), v)),
                gb.map(|v| Tensor::new(g.shape(), v)),
            ]
        })
    }

    pub fn add(&self, other: &Var<T>) -> Var<T> {
        self.binary(other, |a, b| a + b, |_, _| (T::one(), T::one()))
    }

    pub fn sub(&self, other: &Var<T>) -> Var<T> {
        self.binary(other, |a, b| a - b, |_, _| (T::one(), -T::one()))
    }

    pub fn mul(&self, other: &Var<T>) -> Var<T> {
        self.binary(other, |a, b| a * b, |a, b| (b, a))
    }

    /// Adds `bias[c]` to every element of channel `c` (dimension 1).
    pub fn add_channel_bias(&self, bias: &Var<T>) -> Var<T> {
        let shape = self.shape().to_vec();
        assert!(shape.len() >= 2, "add_channel_bias needs rank >= 2");
        let (n, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        assert_eq!(bias.shape(), [c], "bias must have one entry per channel");
        let mut y = (*self.shared_value()).clone();
        let b = bias.value().data();
        for (i, chunk) in y.data_mut().chunks_mut(inner).enumerate() {
            let bc = b[i % c];
            chunk.iter_mut().for_each(|v| *v += bc);
        }
        Var::record(&[self, bias], y, move |g, needs| {
            let gb = needs[1].then(|| {
                let mut acc = vec![T::zero(); c];
                for (i, chunk) in g.data().chunks(inner).enumerate() {
                    acc[i % c] += chunk.iter().copied().sum::<T>();
                }
                debug_assert_eq!(g.numel(), n * c * inner);
                Tensor::new(&[c], acc)
            });
            vec![needs[0].then(|| g.clone()), gb]
        })
    }
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

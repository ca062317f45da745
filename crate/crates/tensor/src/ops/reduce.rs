use crate::element::{Accumulator, Element};
use crate::tape::Var;
use crate::tensor::Tensor;

impl<T: Element> Var<T> {
    /// Sum of all elements as a one-element tensor.
    pub fn sum_all(&self) -> Var<T> {
        let shape = self.shape().to_vec();
        let mut acc = Accumulator::default();
        self.value().data().iter().for_each(|v| acc.add(v.as_f64()));
        Var::record(&[self], Tensor::scalar(T::of(acc.value())), move |g, _| {
            vec![Some(Tensor::full(&shape, g.item()))]
        })
    }

    /// Mean of all elements as a one-element tensor.
    pub fn mean_all(&self) -> Var<T> {
        let n = self.value().numel();
        self.sum_all().scale(1.0 / n as f64)
    }
}

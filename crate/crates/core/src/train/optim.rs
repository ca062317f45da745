use cidn_tensor::{Gradients, Tensor};

use crate::model::{AdamState, Bound, ParamGroup, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected Adam update of every parameter in `groups`. Leaves
/// the loss did not reach receive a zero gradient.
pub fn adam_step(
    params: &mut ParamStore,
    state: &mut AdamState,
    bound: &Bound,
    grads: &Gradients<f32>,
    groups: &[ParamGroup],
    h: &AdamHyper,
) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    let names: Vec<String> = groups
        .iter()
        .flat_map(|&g| params.names_in(g).map(str::to_string).collect::<Vec<_>>())
        .collect();
    for name in names {
        let var = bound.var(&name);
        let grad = grads.get_or_zeros(var);
        let shape = grad.shape().to_vec();
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(&shape));
        for (mi, &g) in m.data_mut().iter_mut().zip(grad.data()) {
            *mi = (h.beta1 * *mi as f64 + (1.0 - h.beta1) * g as f64) as f32;
        }
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(&shape));
        for (vi, &g) in v.data_mut().iter_mut().zip(grad.data()) {
            *vi = (h.beta2 * *vi as f64 + (1.0 - h.beta2) * (g as f64) * (g as f64)) as f32;
        }
        let (m, v) = (&state.m[&name], &state.v[&name]);
        let mut p = params.get(&name).expect("bound parameter exists").clone();
        for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let mhat = mi as f64 / c1;
            let vhat = vi as f64 / c2;
            *pi = (*pi as f64 - h.lr * mhat / (vhat.sqrt() + h.eps)) as f32;
        }
        params.set(&name, p);
    }
}

//! Differentiable loss terms over batched graph variables. Every function
//! returns a one-element variable.

use cidn_tensor::{Element, Var};

use super::FeatureExtractor;

/// Mean absolute difference.
pub fn l1<T: Element>(a: &Var<T>, b: &Var<T>) -> Var<T> {
    a.sub(b).abs().mean_all()
}

/// Batch mean of `sum_d 0.5 (mu^2 + exp(logvar) - logvar - 1)` for `[n, d]`
/// inputs.
pub fn kl<T: Element>(mu: &Var<T>, logvar: &Var<T>) -> Var<T> {
    let n = mu.shape()[0] as f64;
    mu.square()
        .add(&logvar.exp())
        .sub(logvar)
        .add_scalar(-1.0)
        .sum_all()
        .scale(0.5 / n)
}

/// `sum_n mean |phi_n(a) - phi_n(b)|`.
pub fn perceptual<T: Element>(fx: &FeatureExtractor, a: &Var<T>, b: &Var<T>) -> Var<T> {
    let fa = fx.features(a);
    let fb = fx.features(b);
    sum(fa.iter().zip(&fb).map(|(p, q)| l1(p, q)))
}

fn sum<T: Element>(mut parts: impl Iterator<Item = Var<T>>) -> Var<T> {
    let first = parts.next().expect("at least one term");
    parts.fold(first, |acc, p| acc.add(&p))
}

/// `sum_k mean[-ln r_k - ln(1 - f_k)]` on sigmoid scores.
pub fn adversarial_d_scores<T: Element>(real: &[Var<T>], fake: &[Var<T>]) -> Var<T> {
    sum(real.iter().zip(fake).map(|(r, f)| {
        let real_term = r.ln().mean_all().neg();
        let fake_term = f.neg().add_scalar(1.0).ln().mean_all().neg();
        real_term.add(&fake_term)
    }))
}

/// `sum_k mean[-ln f_k]` on sigmoid scores.
pub fn adversarial_g_scores<T: Element>(fake: &[Var<T>]) -> Var<T> {
    sum(fake.iter().map(|f| f.ln().mean_all().neg()))
}

/// [`adversarial_d_scores`] evaluated from logits without forming the
/// sigmoid: `-ln sigmoid(l) = softplus(-l)` and `-ln(1 - sigmoid(l)) = softplus(l)`.
pub fn adversarial_d_logits<T: Element>(real: &[Var<T>], fake: &[Var<T>]) -> Var<T> {
    sum(real.iter().zip(fake).map(|(r, f)| {
        r.neg()
            .softplus()
            .mean_all()
            .add(&f.softplus().mean_all())
    }))
}

/// [`adversarial_g_scores`] evaluated from logits.
pub fn adversarial_g_logits<T: Element>(fake: &[Var<T>]) -> Var<T> {
    sum(fake.iter().map(|f| f.neg().softplus().mean_all()))
}

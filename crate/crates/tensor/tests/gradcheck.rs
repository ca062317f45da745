//! Central finite-difference checks for every differentiable operation.

use cidn_tensor::{PadMode, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Projects an op's output onto a fixed random direction so every op can be
/// checked through a scalar.
fn check(
    name: &str,
    inputs: Vec<Tensor<f64>>,
    f: impl Fn(&[Var<f64>]) -> Var<f64>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&vars);
    let probe = Var::constant(random(out.shape(), &mut rng));
    let loss = out.mul(&probe).sum_all();
    let grads = tape.backward(&loss);

    let scalar = |ins: &[Tensor<f64>]| {
        let vars: Vec<_> = ins.iter().map(|t| Var::constant(t.clone())).collect();
        f(&vars).mul(&probe).sum_all().value().item()
    };
    let h = 1e-5;
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(&vars[idx]);
        for e in 0..input.numel() {
            let mut plus = inputs.clone();
            plus[idx].data_mut()[e] += h;
            let mut minus = inputs.clone();
            minus[idx].data_mut()[e] -= h;
            let numeric = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
            let a = analytic.data()[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                err < 1e-5,
                "{name}: input {idx} element {e}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[2, 3, 4], &mut rng);
    let b = random(&[2, 3, 4], &mut rng);
    let positive = a.map(|v| v.abs() + 0.5);
    check("add", vec![a.clone(), b.clone()], |v| v[0].add(&v[1]));
    check("sub", vec![a.clone(), b.clone()], |v| v[0].sub(&v[1]));
    check("mul", vec![a.clone(), b.clone()], |v| v[0].mul(&v[1]));
    check("scale", vec![a.clone()], |v| v[0].scale(-2.5).add_scalar(1.0));
    check("exp", vec![a.clone()], |v| v[0].exp());
    check("ln", vec![positive], |v| v[0].ln());
    check("square", vec![a.clone()], |v| v[0].square());
    check("sigmoid", vec![a.clone()], |v| v[0].sigmoid());
    check("softplus", vec![a.scale_for_test(8.0)], |v| v[0].softplus());
    // keep samples away from the kinks
    let away = a.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    check("abs", vec![away.clone()], |v| v[0].abs());
    check("leaky_relu", vec![away], |v| v[0].leaky_relu(0.2));
}

trait ScaleForTest {
    fn scale_for_test(&self, c: f64) -> Self;
}

impl ScaleForTest for Tensor<f64> {
    fn scale_for_test(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }
}

#[test]
fn reductions_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&[2, 3, 2, 2], &mut rng);
    let b = random(&[3], &mut rng);
    check("sum_all", vec![x.clone()], |v| v[0].sum_all());
    check("mean_all", vec![x.clone()], |v| v[0].mean_all());
    check("channel_bias", vec![x, b], |v| v[0].add_channel_bias(&v[1]));
}

#[test]
fn convolution_and_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 3, 7, 6], &mut rng);
    let w = random(&[4, 3, 3, 3], &mut rng);
    let b = random(&[4], &mut rng);
    check("conv s1", vec![x.clone(), w.clone(), b.clone()], |v| {
        v[0].conv2d(&v[1], Some(&v[2]), 1)
    });
    let w4 = random(&[2, 3, 4, 4], &mut rng);
    check("conv s2 no bias", vec![x, w4], |v| v[0].conv2d(&v[1], None, 2));

    let xi = random(&[3, 5], &mut rng);
    let wl = random(&[4, 5], &mut rng);
    let bl = random(&[4], &mut rng);
    check("linear", vec![xi, wl, bl], |v| v[0].linear(&v[1], &v[2]));
}

#[test]
fn spatial_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[2, 2, 5, 4], &mut rng);
    for mode in [PadMode::Zero, PadMode::Reflect, PadMode::Cyclic] {
        check("pad", vec![x.clone()], move |v| v[0].pad2d(2, 1, 3, 1, mode));
    }
    check("upsample", vec![x.clone()], |v| v[0].upsample_nearest2x());
    check("avg_pool", vec![x.clone()], |v| v[0].avg_pool2x());
    check("max_pool", vec![x.clone()], |v| v[0].max_pool2x());
    check("gap", vec![x.clone()], |v| v[0].global_avg_pool());
    let y = random(&[2, 3, 5, 4], &mut rng);
    check("cat", vec![x.clone(), y], |v| Var::cat_channels(&[&v[0], &v[1]]));
    let code = random(&[2, 3], &mut rng);
    check("broadcast", vec![code], |v| v[0].broadcast_spatial(3, 2));
    check("reshape", vec![x], |v| v[0].reshape(&[4, 20]));
}

#[test]
fn instance_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 3, 4, 5], &mut rng);
    check("instance_norm", vec![x], |v| v[0].instance_norm(1e-5));
}

#[test]
fn composite_graph_accumulates_shared_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[1, 2, 6, 6], &mut rng);
    let w = random(&[2, 2, 3, 3], &mut rng);
    check("residual", vec![x, w], |v| {
        let h = v[0].pad_same(1, PadMode::Reflect).conv2d(&v[1], None, 1);
        v[0].add(&h.instance_norm(1e-5).leaky_relu(0.2))
    });
}

use cidn_tensor::{PadMode, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn roll(t: &Tensor<f32>, dy: usize, dx: usize) -> Tensor<f32> {
    let (n, c, h, w) = t.dims4();
    let mut out = vec![0.0; t.numel()];
    for p in 0..n * c {
        for i in 0..h {
            for j in 0..w {
                out[p * h * w + ((i + dy) % h) * w + (j + dx) % w] = t.data()[p * h * w + i * w + j];
            }
        }
    }
    Tensor::new(t.shape(), out)
}

fn block(x: &Var<f32>, w1: &Var<f32>, w2: &Var<f32>) -> Var<f32> {
    x.pad_same(1, PadMode::Cyclic)
        .conv2d(w1, None, 2)
        .instance_norm(1e-5)
        .leaky_relu(0.2)
        .pad_same(1, PadMode::Cyclic)
        .conv2d(w2, None, 1)
        .instance_norm(1e-5)
}

#[test]
fn cyclic_stride_two_block_is_exactly_shift_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::from_fn(&[1, 3, 32, 32], |_| rng.random::<f32>());
    let w1 = Var::constant(Tensor::from_fn(&[8, 3, 4, 4], |_| rng.random_range(-0.3..0.3)));
    let w2 = Var::constant(Tensor::from_fn(&[8, 8, 3, 3], |_| rng.random_range(-0.3..0.3)));
    let base = block(&Var::constant(x.clone()), &w1, &w2);
    for k in 1..4 {
        let shifted = block(&Var::constant(roll(&x, 2 * k, 2 * k)), &w1, &w2);
        assert_eq!(shifted.value(), &roll(base.value(), k, k));
    }
}

#[test]
fn backward_is_bit_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[2, 3, 16, 16], |_| rng.random::<f32>()));
        let w1 = tape.leaf(Tensor::from_fn(&[8, 3, 4, 4], |_| rng.random_range(-0.3f32..0.3)));
        let w2 = tape.leaf(Tensor::from_fn(&[8, 8, 3, 3], |_| rng.random_range(-0.3f32..0.3)));
        let loss = block(&x, &w1, &w2).square().mean_all();
        let g = tape.backward(&loss);
        (g.get_or_zeros(&x), g.get_or_zeros(&w1), g.get_or_zeros(&w2))
    };
    assert_eq!(run(), run());
}

#[test]
fn untracked_inputs_are_not_recorded() {
    let tape = Tape::<f32>::new();
    let a = Var::constant(Tensor::full(&[2, 2], 1.0));
    let b = a.exp().add(&a);
    assert!(!b.is_tracked());
    assert!(tape.is_empty());
    let leaf = tape.leaf(Tensor::full(&[2, 2], 1.0));
    let c = leaf.add(&b);
    assert!(c.is_tracked());
    assert_eq!(tape.len(), 2);
}

proptest! {
    #[test]
    fn gradient_of_mean_is_uniform(len in 1usize..64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_fn(&[len], |_| rng.random::<f64>()));
        let g = tape.backward(&x.mean_all());
        let grad = g.get(&x).unwrap();
        for v in grad.data() {
            prop_assert!((v - 1.0 / len as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn cyclic_pad_then_crop_is_identity(h in 2usize..9, w in 2usize..9, pad in 0usize..4) {
        let x = Tensor::<f64>::from_fn(&[1, 1, h, w], |i| i as f64);
        let padded = Var::constant(x.clone()).pad_same(pad, PadMode::Cyclic);
        let (_, _, ph, pw) = padded.value().dims4();
        prop_assert_eq!((ph, pw), (h + 2 * pad, w + 2 * pad));
        for i in 0..h {
            for j in 0..w {
                prop_assert_eq!(padded.value().data()[(i + pad) * pw + j + pad], x.data()[i * w + j]);
            }
        }
    }
}

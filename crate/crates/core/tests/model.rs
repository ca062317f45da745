use cidn_core::model::{
    sample_brightness, ArchConfig, BrightnessPosterior, ContentFeature, Domain, ModelState,
    Padding, SamplingMode, NUM_SCALES,
};
use cidn_core::{synth, Error, ImageTensor};
use cidn_tensor::Tensor;

fn small_arch() -> ArchConfig {
    ArchConfig {
        base_channels: 4,
        res_blocks: 1,
        disc_channels: 4,
        padding: Padding::Reflect,
    }
}

fn noise_image(seed: u64, h: usize, w: usize) -> ImageTensor {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ImageTensor::from_fn(h, w, |_, _, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 40) as f32 / (1u64 << 24) as f32
    })
}

/// Cyclic roll of an image by `k` pixels down and right.
fn roll_image(img: &ImageTensor, k: usize) -> ImageTensor {
    let (h, w) = img.dims();
    ImageTensor::from_fn(h, w, |y, x, c| img.get((y + h - k) % h, (x + w - k) % w, c))
}

fn roll_feature(t: &Tensor<f32>, k: usize) -> Tensor<f32> {
    let (n, c, h, w) = t.dims4();
    let mut out = Tensor::zeros(t.shape());
    for i in 0..n * c {
        for y in 0..h {
            for x in 0..w {
                out.data_mut()[(i * h + (y + k) % h) * w + (x + k) % w] = t.data()[(i * h + y) * w + x];
            }
        }
    }
    out
}

#[test]
fn default_architecture_matches_documented_sizes() {
    let arch = ArchConfig::default();
    assert_eq!(arch.base_channels, 64);
    assert_eq!(arch.content_channels(), 256);
    assert_eq!(arch.res_blocks, 4);
}

#[test]
fn content_path_divides_spatial_dims_by_four() {
    let state = ModelState::init(small_arch(), 1);
    for &(h, w) in &[(64, 64), (128, 128), (256, 256), (64, 128)] {
        let f = state.encode_content(&noise_image(2, h, w)).unwrap();
        assert_eq!((f.height(), f.width(), f.channels()), (h / 4, w / 4, 16));
    }
}

#[test]
fn default_width_content_feature_has_256_channels() {
    let state = ModelState::init(ArchConfig { res_blocks: 0, ..ArchConfig::default() }, 0);
    let f = state.encode_content(&ImageTensor::filled(64, 64, [0.3, 0.4, 0.5])).unwrap();
    assert_eq!((f.height(), f.width(), f.channels()), (16, 16, 256));
}

#[test]
fn indivisible_input_names_the_divisor() {
    let state = ModelState::init(small_arch(), 1);
    let err = state.encode_content(&noise_image(0, 66, 64)).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
    assert!(err.to_string().contains("divisible by 4"), "{err}");
}

#[test]
fn brightness_posterior_is_eight_dims_for_any_size() {
    let state = ModelState::init(small_arch(), 1);
    for &(h, w) in &[(64, 64), (128, 128), (256, 256), (50, 90)] {
        let post = state.encode_brightness(&noise_image(h as u64, h, w)).unwrap();
        assert_eq!(post.mu.len(), 8);
        assert!(post.mu.iter().chain(&post.logvar).all(|v| v.is_finite()));
    }
    let zero = ImageTensor::filled(64, 64, [0.0; 3]);
    assert_eq!(
        state.encode_brightness(&zero).unwrap(),
        ModelState::init(small_arch(), 1).encode_brightness(&zero).unwrap()
    );
}

#[test]
fn sampling_modes() {
    let zero = BrightnessPosterior::new([0.0; 8], [0.0; 8]).unwrap();
    assert_eq!(sample_brightness(&zero, SamplingMode::Infer, 3).0, [0.0; 8]);
    let ones = BrightnessPosterior::new([1.0; 8], [0.3; 8]).unwrap();
    assert_eq!(sample_brightness(&ones, SamplingMode::Infer, 3).0, [1.0; 8]);
    let a = sample_brightness(&ones, SamplingMode::Train, 3);
    assert_eq!(a, sample_brightness(&ones, SamplingMode::Train, 3));
    assert_ne!(a, sample_brightness(&ones, SamplingMode::Train, 4));
}

#[test]
fn reparameterized_samples_have_unit_variance() {
    let post = BrightnessPosterior::new([0.0; 8], [0.0; 8]).unwrap();
    let n = 100_000;
    let mut sum = [0.0f64; 8];
    let mut sq = [0.0f64; 8];
    for seed in 0..n {
        let c = sample_brightness(&post, SamplingMode::Train, seed);
        for d in 0..8 {
            sum[d] += c.0[d] as f64;
            sq[d] += (c.0[d] as f64).powi(2);
        }
    }
    for d in 0..8 {
        let mean = sum[d] / n as f64;
        let var = sq[d] / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.03, "dim {d}: variance {var}");
    }
}

#[test]
fn decode_multiplies_dims_and_stays_in_range() {
    let state = ModelState::init(small_arch(), 5);
    let content = ContentFeature::from_tensor(Tensor::from_fn(&[1, 16, 16, 16], |i| ((i % 13) as f32 - 6.0) * 0.7)).unwrap();
    let code = sample_brightness(&BrightnessPosterior::new([2.0; 8], [0.0; 8]).unwrap(), SamplingMode::Train, 1);
    for domain in [Domain::Low, Domain::Normal] {
        let out = state.decode(domain, &content, &code).unwrap();
        assert_eq!(out.dims(), (64, 64));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let wrong = ContentFeature::from_tensor(Tensor::zeros(&[1, 8, 16, 16])).unwrap();
    assert!(matches!(state.decode(Domain::Low, &wrong, &code), Err(Error::Shape(_))));
}

#[test]
fn enhance_equals_its_three_sub_operations() {
    let state = ModelState::init(small_arch(), 9);
    let low = noise_image(1, 64, 64).scaled(0.2);
    let guidance = noise_image(2, 96, 80);
    let trace = state.swap(Domain::Normal, &low, &guidance).unwrap();
    let content = state.encode_content(&low).unwrap();
    let post = state.encode_brightness(&guidance).unwrap();
    let code = sample_brightness(&post, SamplingMode::Infer, 0);
    assert_eq!(trace.content, content);
    assert_eq!(trace.guidance_posterior, post);
    assert_eq!(trace.code.0, post.mu);
    let manual = state.decode(Domain::Normal, &content, &code).unwrap();
    assert_eq!(trace.output, manual);
    let out = state.enhance(&low, &guidance).unwrap();
    assert_eq!(out, manual);
    assert_eq!(out.dims(), low.dims());
    // bit-identical on repetition
    assert_eq!(out.data(), state.enhance(&low, &guidance).unwrap().data());

    let dark = state.darken(&guidance.crop(0, 0, 64, 64).unwrap(), &low).unwrap();
    assert_eq!(dark.dims(), (64, 64));
    assert!(dark.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn enhance_any_crops_back_to_input_size() {
    let state = ModelState::init(small_arch(), 9);
    let out = state.enhance_any(&noise_image(1, 37, 70), &noise_image(2, 8, 8)).unwrap();
    assert_eq!(out.dims(), (37, 70));
}

#[test]
fn three_discriminator_scales() {
    let state = ModelState::init(small_arch(), 2);
    let maps = state.discriminate(Domain::Normal, &noise_image(3, 256, 256)).unwrap();
    assert_eq!(maps.len(), NUM_SCALES);
    // three stride-2 layers on 256, 128 and 64 pixel inputs
    let sides: Vec<_> = maps.iter().map(|m| (m.height, m.width)).collect();
    assert_eq!(sides, vec![(32, 32), (16, 16), (8, 8)]);
    assert!(maps.iter().flat_map(|m| &m.scores).all(|&s| s > 0.0 && s < 1.0));
    assert!(matches!(
        state.discriminate(Domain::Low, &noise_image(3, 32, 64)),
        Err(Error::Shape(_))
    ));
}

#[test]
fn content_is_exactly_shift_equivariant_with_cyclic_padding() {
    let state = ModelState::init(small_arch(), 11).with_padding(Padding::Cyclic);
    for &size in &[64, 128, 256] {
        let img = noise_image(size as u64, size, size);
        let base = state.encode_content(&img).unwrap();
        for k in [1, 3] {
            let shifted = state.encode_content(&roll_image(&img, 4 * k)).unwrap();
            assert_eq!(shifted.tensor(), &roll_feature(base.tensor(), k), "size {size}, k {k}");
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cidn");
    let mut state = ModelState::init(small_arch(), 4);
    state.step = 17;
    state.save(&path).unwrap();
    let loaded = ModelState::load(&path).unwrap();
    assert_eq!(loaded, state);
    assert_eq!(loaded.to_bytes(), std::fs::read(&path).unwrap());
    let low = synth::darken(&synth::scene(1, 64, 64), 0.2);
    let g = synth::scene(2, 64, 64);
    assert_eq!(
        loaded.enhance(&low, &g).unwrap().data(),
        state.enhance(&low, &g).unwrap().data()
    );
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = ModelState::init(small_arch(), 4).to_bytes();
    let mut bad = bytes.clone();
    bad[4] = 7;
    let err = ModelState::from_bytes(&bad).unwrap_err();
    assert!(err.to_string().contains("version 7"), "{err}");
    assert!(ModelState::from_bytes(b"garbage").is_err());
    assert!(ModelState::from_bytes(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn seeds_determine_parameters() {
    assert_eq!(ModelState::init(small_arch(), 3), ModelState::init(small_arch(), 3));
    assert_ne!(ModelState::init(small_arch(), 3).params, ModelState::init(small_arch(), 4).params);
}

use neopain_core::cnn::{ops, ArchitectureSpec, Network, Phase, TapRequest, WeightSet, SHIPPED};
use neopain_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(shape: Vec<usize>, seed: u64, scale: f32) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn shipped_tap_widths() {
    let conv5 = [
        ("vgg-f", 43264),
        ("vgg-m", 86528),
        ("vgg-s", 147968),
        ("vgg-face", 100352),
    ];
    for (name, width) in conv5 {
        let arch = ArchitectureSpec::shipped(name).unwrap();
        assert_eq!(arch.flat_width("Conv 5").unwrap(), width, "{name}");
        assert_eq!(arch.flat_width("Full 7").unwrap(), 4096, "{name}");
    }
    let face = ArchitectureSpec::shipped("vgg-face").unwrap();
    assert_eq!(face.flat_width("Full 8").unwrap(), 2622);
    assert_eq!(SHIPPED.len(), 4);
}

#[test]
fn conv_is_exactly_linear_under_power_of_two_scaling() {
    let x = random_tensor(vec![19, 23, 5], 1, 1.0);
    let k = random_tensor(vec![7, 3, 3, 5], 2, 0.5);
    let zero = Tensor::zeros(vec![7]).unwrap();
    let base = ops::conv2d(&x, &k, &zero, 2, 1).unwrap();
    for s in [0.25f32, 2.0, 8.0] {
        let mut xs = x.clone();
        xs.data_mut().iter_mut().for_each(|v| *v *= s);
        let scaled = ops::conv2d(&xs, &k, &zero, 2, 1).unwrap();
        for (a, b) in base.data().iter().zip(scaled.data()) {
            assert_eq!(a * s, *b);
        }
    }
}

#[test]
fn vgg_f_taps_are_reproducible_across_thread_counts() {
    let arch = ArchitectureSpec::shipped("vgg-f").unwrap();
    let net = Network::new(arch, WeightSet::random(&ArchitectureSpec::shipped("vgg-f").unwrap(), 3).unwrap())
        .unwrap();
    let input = random_tensor(vec![224, 224, 3], 4, 120.0);
    let taps = [
        TapRequest::new("Conv 5", Phase::PreReLU),
        TapRequest::new("Conv 5", Phase::PostReLU),
        TapRequest::new("Full 7", Phase::PreReLU),
        TapRequest::new("Full 7", Phase::PostReLU),
    ];
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| net.forward_with_taps(&input, &taps).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one, three);
    assert_eq!(one[&taps[0]].len(), 43264);
    assert_eq!(one[&taps[2]].len(), 4096);
    for (pre, post) in [(0, 1), (2, 3)] {
        assert!(one[&taps[post]].iter().all(|v| *v >= 0.0));
        for (a, b) in one[&taps[pre]].iter().zip(&one[&taps[post]]) {
            assert_eq!(a.max(0.0), *b);
        }
    }
    assert!(one[&taps[3]].iter().any(|v| *v > 0.0));
}

#[test]
fn vgg_m_random_weight_file_serves_conv5() {
    let arch = ArchitectureSpec::shipped("vgg-m").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vgg-m.ppwt");
    WeightSet::random(&arch, 17).unwrap().save(&path).unwrap();
    let weights = neopain_core::cnn::load_weights(&path, &arch).unwrap();
    let net = Network::new(arch, weights).unwrap();
    let tap = TapRequest::new("Conv 5", Phase::PostReLU);
    let input = random_tensor(vec![224, 224, 3], 5, 100.0);
    let out = net.forward_with_taps(&input, std::slice::from_ref(&tap)).unwrap();
    assert_eq!(out[&tap].len(), 86528);
}

#[test]
fn vgg_face_alias_and_deep_taps() {
    let arch = ArchitectureSpec::shipped("vgg-face").unwrap();
    assert_eq!(arch.layer_index("Conv 5"), arch.layer_index("Conv 5-3"));
    let shapes = arch.parameter_shapes().unwrap();
    let full8 = shapes.iter().find(|(n, _, _)| n == "Full 8").unwrap();
    assert_eq!(full8.1, vec![2622, 4096]);
}

//! Central finite-difference checks of every layer's backward pass in f64.

use antispoof::nnet::{
    grad_check, Activation, BatchNorm, Conv1d, Conv2d, Dense, Flatten, GradCheckConfig, GradCheckReport, Layer,
    MaxPool1d, MaxPool2d, Mfm, Probe, Sequential, SincConv, SincCutoffs, TemporalMeanPool, Tensor, TimeRemainder,
};
use antispoof::rng_from_seed;
use proptest::prelude::*;
use rand::Rng as _;

const TOL: f64 = 1e-5;

fn random_input(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
    let mut rng = rng_from_seed(seed);
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

fn check(net: &mut Sequential<f64>, x: &Tensor<f64>, probe: Probe) -> GradCheckReport {
    let report = grad_check(net, x, &probe, &GradCheckConfig::default()).unwrap();
    assert!(report.checked() > 0, "nothing checked: {report:?}");
    report
}

fn single<L: Layer<f64> + 'static>(name: &str, layer: L) -> Sequential<f64> {
    let mut net = Sequential::new();
    net.push(name, layer);
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conv2d(b in 1usize..3, f in 1usize..9, t in 1usize..9, cin in 1usize..5, cout in 1usize..5,
              k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut net = single("conv", Conv2d::new("conv", k, k, cin, cout, &mut rng).unwrap());
        let r = check(&mut net, &random_input(vec![b, f, t, cin], seed ^ 1), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
        prop_assert_eq!(r.entries.len(), 3);
    }

    #[test]
    fn maxpool2d(b in 1usize..3, f2 in 1usize..5, t in 2usize..9, c in 1usize..5, seed in any::<u64>()) {
        let mut net = single("pool", MaxPool2d::new(2, 2, TimeRemainder::Truncate));
        let r = check(&mut net, &random_input(vec![b, 2 * f2, t, c], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn mfm(b in 1usize..3, f in 1usize..9, t in 1usize..9, half in 1usize..3, seed in any::<u64>()) {
        let mut net = single("mfm", Mfm::new());
        let r = check(&mut net, &random_input(vec![b, f, t, 2 * half], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn temporal_mean_pool(b in 1usize..3, f in 1usize..9, t in 1usize..9, c in 1usize..5, seed in any::<u64>()) {
        let mut net = single("mean", TemporalMeanPool::new());
        let r = check(&mut net, &random_input(vec![b, f, t, c], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn dense(b in 1usize..5, i in 1usize..9, o in 1usize..9, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut net = single("fc", Dense::new("fc", i, o, 2.0, &mut rng).unwrap());
        let r = check(&mut net, &random_input(vec![b, i], seed ^ 2), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    // With only two values per feature the normalised outputs are +-1 up to
    // the epsilon term, so the input gradient is of order epsilon and drowns
    // in finite-difference rounding noise. Batch norm checks therefore use at
    // least three values per feature.
    #[test]
    fn batchnorm_dense_input(b in 3usize..8, feat in 1usize..9, seed in any::<u64>()) {
        let mut net = single("bn", BatchNorm::new("bn", feat));
        let r = check(&mut net, &random_input(vec![b, feat], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn batchnorm_sequence_input(b in 1usize..4, c in 1usize..5, t in 2usize..9, seed in any::<u64>()) {
        prop_assume!(b * t >= 3);
        let mut net = single("bn", BatchNorm::new("bn", c));
        let r = check(&mut net, &random_input(vec![b, c, t], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn conv1d(b in 1usize..3, cin in 1usize..5, cout in 1usize..5, k in 1usize..4, extra in 0usize..6, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut net = single("conv", Conv1d::new("conv", cin, cout, k, &mut rng).unwrap());
        let r = check(&mut net, &random_input(vec![b, cin, k + extra], seed ^ 3), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn maxpool1d(b in 1usize..3, c in 1usize..5, t in 1usize..9, size in 1usize..4, seed in any::<u64>()) {
        prop_assume!(t >= size);
        let mut net = single("pool", MaxPool1d::new(size));
        let r = check(&mut net, &random_input(vec![b, c, t], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn sinc_conv(b in 1usize..3, filters in 1usize..5, half_len in 1usize..6, extra in 0usize..12, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut low = Vec::new();
        let mut high = Vec::new();
        for _ in 0..filters {
            let lo = rng.gen_range(0.01..0.3);
            low.push(lo);
            high.push(lo + rng.gen_range(0.02..0.15));
        }
        let len = 2 * half_len + 1;
        let mut net = single("sinc", SincConv::new("sinc", &SincCutoffs { low, high }, len).unwrap());
        let r = check(&mut net, &random_input(vec![b, len + extra], seed ^ 4), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
        prop_assert!(r.entry("sinc.cutoffs").unwrap().checked > 0);
    }

    #[test]
    fn softmax_xent(b in 1usize..6, classes in 2usize..5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
        let mut net = single("flat", Flatten::new());
        let r = check(&mut net, &random_input(vec![b, classes], seed ^ 5), Probe::SoftmaxXent(labels));
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }

    #[test]
    fn activations(b in 1usize..3, n in 1usize..9, which in 0usize..3, seed in any::<u64>()) {
        let act = match which {
            0 => Activation::relu(),
            1 => Activation::leaky_relu(0.2),
            _ => Activation::abs(),
        };
        let mut net = single("act", act);
        let r = check(&mut net, &random_input(vec![b, n], seed), Probe::Projection);
        prop_assert!(r.max_rel_error() < TOL, "{r:?}");
    }
}

#[test]
fn small_light_cnn_stack_end_to_end() {
    let mut rng = rng_from_seed(21);
    let mut net = Sequential::new();
    net.push("conv1", Conv2d::new("conv1", 3, 3, 2, 4, &mut rng).unwrap());
    net.push("mfm1", Mfm::new());
    net.push("pool1", MaxPool2d::new(2, 2, TimeRemainder::Truncate));
    net.push("conv2", Conv2d::new("conv2", 1, 1, 2, 4, &mut rng).unwrap());
    net.push("mfm2", Mfm::new());
    net.push("mean", TemporalMeanPool::new());
    net.push("flat", Flatten::new());
    net.push("fc", Dense::new("fc", 4 * 2, 6, 2.0, &mut rng).unwrap());
    net.push("relu", Activation::relu());
    net.push("out", Dense::new("out", 6, 2, 1.0, &mut rng).unwrap());
    let x = random_input(vec![3, 8, 7, 2], 4);
    let report = check(&mut net, &x, Probe::SoftmaxXent(vec![0, 1, 1]));
    assert!(report.max_rel_error() < TOL, "{report:?}");
    assert_eq!(report.entries.len(), 9);
}

#[test]
fn small_sincnet_stack_end_to_end() {
    let mut rng = rng_from_seed(22);
    let mut net = Sequential::new();
    let cut = SincCutoffs::mel(3, 30.0, 7970.0, 16000).unwrap();
    net.push("sinc", SincConv::new("sinc", &cut, 9).unwrap());
    net.push("abs", Activation::abs());
    net.push("pool", MaxPool1d::new(2));
    net.push("bn", BatchNorm::new("bn", 3));
    net.push("act", Activation::leaky_relu(0.2));
    net.push("conv", Conv1d::new("conv", 3, 2, 3, &mut rng).unwrap());
    net.push("flat", Flatten::new());
    let width = 2 * ((40 - 8) / 2 - 2);
    net.push("fc", Dense::new("fc", width, 4, 2.0, &mut rng).unwrap());
    net.push("fc.bn", BatchNorm::new("fc.bn", 4));
    net.push("out", Dense::new("out", 4, 2, 1.0, &mut rng).unwrap());
    let x = random_input(vec![4, 40], 8);
    let report = check(&mut net, &x, Probe::SoftmaxXent(vec![0, 1, 0, 1]));
    // A bias feeding straight into batch norm is cancelled by the mean
    // subtraction, so its true gradient is zero and only the absolute error
    // is meaningful.
    for entry in &report.entries {
        if entry.name == "fc.bias" {
            assert!(entry.max_abs_error < 1e-9, "{entry:?}");
        } else {
            assert!(entry.max_rel_error < TOL, "{entry:?}");
        }
    }
}

//! Reference implementations and fixtures shared by the integration tests
//! and the acceptance harness. Everything here is written from the
//! definitions, without calling into the code under test beyond plain data
//! types.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use antispoof::dataio::{parse_protocol, Partition, ProtocolSet, Waveform};
use antispoof::eval::TdcfParams;
use antispoof::nnet::{
    grad_check, Activation, BatchNorm, Conv1d, Conv2d, Dense, Flatten, GradCheckConfig, Layer, MaxPool1d, MaxPool2d,
    Mfm, Probe, Sequential, SincConv, SincCutoffs, TemporalMeanPool, Tensor, TimeRemainder,
};
use antispoof::pipeline::{Example, GroupKey};
use antispoof::dsp::FeatureMap;
use antispoof::dataio::Key;
use antispoof::{rng_from_seed, Rng};
use rand::Rng as _;

// ---------------------------------------------------------------- signals

/// One second of uniform noise mixed with a few random tones at 16 kHz.
pub fn random_signal(seed: u64) -> Waveform {
    let mut rng = rng_from_seed(seed);
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(50.0..7500.0), rng.gen_range(0.1..0.5), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let samples = (0..16000)
        .map(|n| {
            let t = n as f64 / 16000.0;
            let tonal: f64 = tones.iter().map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            tonal + rng.gen_range(-0.3..0.3)
        })
        .collect();
    Waveform::new(samples, 16000).unwrap()
}

/// Largest element-wise relative difference `|a - b| / |b|`.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- DSP

/// Brute-force DFT power spectrogram: Hamming window of `win` samples,
/// frames every `hop`, zero padded to `n_fft`, bins `0..keep`. Output is
/// frame-major, matching the feature map layout of a single channel.
pub fn naive_power_spectrogram(x: &[f64], n_fft: usize, win: usize, hop: usize, keep: usize) -> Vec<f64> {
    let hamming: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos())
        .collect();
    let frames = 1 + (x.len() - win) / hop;
    let mut out = Vec::with_capacity(frames * keep);
    for t in 0..frames {
        let seg: Vec<f64> = (0..win).map(|n| x[t * hop + n] * hamming[n]).collect();
        for k in 0..keep {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in seg.iter().enumerate() {
                // reduce k*n modulo the FFT size so the phase stays exact
                let phase = -2.0 * PI * ((k * n) % n_fft) as f64 / n_fft as f64;
                re += v * phase.cos();
                im += v * phase.sin();
            }
            out.push(re * re + im * im);
        }
    }
    out
}

/// Constant-Q power by direct inner products. Bin `k` sits at
/// `f_min * 2^(k / bpo)`, has `round(Q sr / f_k)` Hann-tapered taps scaled
/// by `1 / N_k`, and is centred on sample `t * hop`; taps that fall outside
/// the signal are dropped.
pub fn naive_cqt(x: &[f64], sr: f64, f_min: f64, bins: usize, bpo: usize, hop: usize, q_scale: f64) -> Vec<f64> {
    let q = q_scale / (2f64.powf(1.0 / bpo as f64) - 1.0);
    let kernels: Vec<(usize, Vec<(f64, f64)>)> = (0..bins)
        .map(|k| {
            let fk = f_min * 2f64.powf(k as f64 / bpo as f64);
            let len = ((q * sr / fk).round() as usize).max(1);
            let half = len / 2;
            let taps = (0..len)
                .map(|n| {
                    let hann = if len == 1 { 1.0 } else { 0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos() };
                    let arg = -2.0 * PI * fk * (n as f64 - half as f64) / sr;
                    (hann / len as f64 * arg.cos(), hann / len as f64 * arg.sin())
                })
                .collect();
            (half, taps)
        })
        .collect();
    let frames = 1 + (x.len() - 1) / hop;
    let mut out = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let centre = (t * hop) as isize;
        for (half, taps) in &kernels {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &(kr, ki)) in taps.iter().enumerate() {
                let idx = centre + n as isize - *half as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    re += x[idx as usize] * kr;
                    im += x[idx as usize] * ki;
                }
            }
            out.push(re * re + im * im);
        }
    }
    out
}

/// Worst `|mean|` and `|var - 1|` over the rows of a normalised map whose
/// source row was not constant.
pub fn mvn_row_stats(source: &FeatureMap, normalised: &FeatureMap) -> (f64, f64) {
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for c in 0..source.channels {
        for b in 0..source.bins {
            let first = source.get(b, 0, c);
            if (0..source.frames).all(|t| source.get(b, t, c) == first) {
                continue;
            }
            let row: Vec<f64> = (0..normalised.frames).map(|t| normalised.get(b, t, c)).collect();
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            worst_mean = worst_mean.max(mean.abs());
            worst_var = worst_var.max((var - 1.0).abs());
        }
    }
    (worst_mean, worst_var)
}

// ---------------------------------------------------------------- metrics

/// Random score sets of varying size, separation and tie density.
pub fn random_score_set(rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let nb = rng.gen_range(1..=500);
    let ns = rng.gen_range(1..=500);
    let shift = rng.gen_range(-1.0..3.0);
    // quantised scores produce ties across and within classes
    let quantum = if rng.gen_bool(0.3) { Some(rng.gen_range(0.05..0.5)) } else { None };
    let draw = |offset: f64, rng: &mut Rng| {
        let v: f64 = offset + rng.gen_range(-2.0..2.0) + rng.gen_range(-2.0..2.0);
        match quantum {
            Some(q) => (v / q).round() * q,
            None => v,
        }
    };
    let bona = (0..nb).map(|_| draw(shift, rng)).collect();
    let spoof = (0..ns).map(|_| draw(0.0, rng)).collect();
    (bona, spoof)
}

/// Rates at one threshold: bonafide rejected below it, spoof accepted at
/// or above it.
fn rates_at(bona: &[f64], spoof: &[f64], t: f64) -> (f64, f64) {
    let frr = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
    let far = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
    (frr, far)
}

/// Candidate thresholds: minus infinity, midpoints of adjacent distinct
/// scores, plus infinity.
fn candidate_thresholds(bona: &[f64], spoof: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut out = vec![f64::NEG_INFINITY];
    out.extend(all.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Equal error rate by exhaustive sweep: every threshold's rates are
/// recounted from scratch, and the crossing is interpolated linearly
/// between the last point with FRR < FAR and the first with FRR >= FAR.
pub fn oracle_eer(bona: &[f64], spoof: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = candidate_thresholds(bona, spoof)
        .into_iter()
        .map(|t| rates_at(bona, spoof, t))
        .collect();
    let j = pts.iter().position(|&(frr, far)| frr >= far).unwrap();
    let (frr_b, far_b) = pts[j];
    if frr_b == far_b {
        return frr_b;
    }
    let (frr_a, far_a) = pts[j - 1];
    // solve frr_a + s (frr_b - frr_a) == far_a + s (far_b - far_a)
    let s = (far_a - frr_a) / ((frr_b - frr_a) - (far_b - far_a));
    frr_a + s * (frr_b - frr_a)
}

/// Normalised minimum tandem detection cost, evaluated at every score
/// value and at plus infinity.
pub fn oracle_min_tdcf(bona: &[f64], spoof: &[f64], p: &TdcfParams) -> f64 {
    let c1 = p.prior_target * (p.cost_cm_miss - p.cost_asv_miss * p.asv_miss_rate)
        - p.prior_nontarget * p.cost_asv_fa * p.asv_fa_rate;
    let c2 = p.cost_cm_fa * p.prior_spoof * p.asv_spoof_fa_rate;
    bona.iter()
        .chain(spoof)
        .copied()
        .chain([f64::INFINITY])
        .map(|t| {
            let (miss, fa) = rates_at(bona, spoof, t);
            (c1 * miss + c2 * fa) / c1.min(c2)
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- architectures

/// One row of a reference layer listing: layer name, output shape
/// (frequency x time x channels, or flat) and, for weighted layers, the
/// kernel side and the input/output widths used for the closed-form count.
pub struct TableRow {
    pub name: &'static str,
    pub output: &'static [usize],
    pub weights: Option<Weights>,
}

pub enum Weights {
    Conv { k: usize, cin: usize, cout: usize },
    Dense { inputs: usize, outputs: usize },
}

impl Weights {
    pub fn count(&self) -> usize {
        match *self {
            Weights::Conv { k, cin, cout } => k * k * cin * cout + cout,
            Weights::Dense { inputs, outputs } => inputs * outputs + outputs,
        }
    }
}

const fn conv(name: &'static str, output: &'static [usize], k: usize, cin: usize, cout: usize) -> TableRow {
    TableRow {
        name,
        output,
        weights: Some(Weights::Conv { k, cin, cout }),
    }
}

const fn plain(name: &'static str, output: &'static [usize]) -> TableRow {
    TableRow { name, output, weights: None }
}

const fn dense(name: &'static str, output: &'static [usize], inputs: usize, outputs: usize) -> TableRow {
    TableRow {
        name,
        output,
        weights: Some(Weights::Dense { inputs, outputs }),
    }
}

/// VGG rows for a 256 x 100 x 2 input. The second convolution of block 1
/// is listed here under its own name.
pub const VGG_TABLE: &[TableRow] = &[
    conv("Conv2D-1-1", &[256, 100, 32], 3, 2, 32),
    conv("Conv2D-1-2", &[256, 100, 32], 3, 32, 32),
    plain("MaxPooling-1", &[128, 100, 32]),
    conv("Conv2D-2-1", &[128, 100, 64], 3, 32, 64),
    conv("Conv2D-2-2", &[128, 100, 64], 3, 64, 64),
    plain("MaxPooling-2", &[64, 100, 64]),
    conv("Conv2D-3-1", &[64, 100, 128], 3, 64, 128),
    conv("Conv2D-3-2", &[64, 100, 128], 3, 128, 128),
    plain("MaxPooling-3", &[32, 50, 128]),
    conv("Conv2D-4-1", &[32, 50, 256], 3, 128, 256),
    conv("Conv2D-4-2", &[32, 50, 256], 3, 256, 256),
    plain("MaxPooling-4", &[16, 50, 256]),
    conv("Conv2D-5-1", &[16, 50, 256], 3, 256, 256),
    conv("Conv2D-5-2", &[16, 50, 256], 3, 256, 256),
    plain("MaxPooling-5", &[8, 50, 256]),
    conv("Conv2D-6-1", &[8, 50, 256], 3, 256, 256),
    conv("Conv2D-6-2", &[8, 50, 256], 3, 256, 256),
    plain("MaxPooling-6", &[4, 50, 256]),
    plain("MeanPooling", &[4, 256]),
    plain("Flatten", &[1024]),
    dense("Dense1", &[512], 1024, 512),
    dense("Dense2", &[512], 512, 512),
    dense("Dense3", &[2], 512, 2),
];

pub const VGG_TOTAL: usize = 4_320_770;

/// Light CNN rows for a 256 x 100 x 2 input.
pub const LCNN_TABLE: &[TableRow] = &[
    conv("Conv2D-1-1", &[256, 100, 32], 5, 2, 32),
    plain("MFM-1-1", &[256, 100, 16]),
    plain("MaxPooling-1", &[128, 100, 16]),
    conv("Conv2D-2-1", &[128, 100, 32], 1, 16, 32),
    plain("MFM-2-1", &[128, 100, 16]),
    conv("Conv2D-2-2", &[128, 100, 64], 3, 16, 64),
    plain("MFM-2-2", &[128, 100, 32]),
    plain("MaxPooling-2", &[64, 100, 32]),
    conv("Conv2D-3-1", &[64, 100, 64], 1, 32, 64),
    plain("MFM-3-1", &[64, 100, 32]),
    conv("Conv2D-3-2", &[64, 100, 128], 3, 32, 128),
    plain("MFM-3-2", &[64, 100, 64]),
    plain("MaxPooling-3", &[32, 50, 64]),
    conv("Conv2D-4-1", &[32, 50, 128], 1, 64, 128),
    plain("MFM-4-1", &[32, 50, 64]),
    conv("Conv2D-4-2", &[32, 50, 256], 3, 64, 256),
    plain("MFM-4-2", &[32, 50, 128]),
    plain("MaxPooling-4", &[16, 50, 128]),
    conv("Conv2D-5-1", &[16, 50, 256], 1, 128, 256),
    plain("MFM-5-1", &[16, 50, 128]),
    conv("Conv2D-5-2", &[16, 50, 512], 3, 128, 512),
    plain("MFM-5-2", &[16, 50, 256]),
    plain("MaxPooling-5", &[8, 50, 256]),
    conv("Conv2D-6-1", &[8, 50, 512], 1, 256, 512),
    plain("MFM-6-1", &[8, 50, 256]),
    conv("Conv2D-6-2", &[8, 50, 512], 3, 256, 512),
    plain("MFM-6-2", &[8, 50, 256]),
    plain("MaxPooling-6", &[4, 50, 256]),
    plain("MeanPooling", &[4, 256]),
    plain("Flatten", &[1024]),
    dense("Dense1", &[512], 1024, 512),
    dense("Dense2", &[512], 512, 512),
    dense("Dense3", &[2], 512, 2),
];

pub const LCNN_TOTAL: usize = 2_930_178;

// ---------------------------------------------------------------- gradients

pub fn random_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

fn single<L: Layer<f64> + 'static>(name: &str, layer: L) -> Sequential<f64> {
    let mut net = Sequential::new();
    net.push(name, layer);
    net
}

/// Worst finite-difference relative error per layer type over `cases`
/// random configurations with every dimension at most 8 x 8 x 4.
pub fn layer_gradient_suite(cases: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = rng_from_seed(seed);
    let cfg = GradCheckConfig::default();
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(entry) => entry.1 = entry.1.max(err),
        None => worst.push((name, err)),
    };
    for _ in 0..cases {
        let b = rng.gen_range(1..=2);
        let f = rng.gen_range(2..=8);
        let t = rng.gen_range(2..=8);
        let c = rng.gen_range(1..=4);

        let k = [1, 3, 5][rng.gen_range(0..3)];
        let cout = rng.gen_range(1..=4);
        let mut net = single("conv", Conv2d::new("conv", k, k, c, cout, &mut rng).unwrap());
        let x = random_tensor(vec![b, f, t, c], &mut rng);
        record("conv2d", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let mut net = single("pool", MaxPool2d::new(2, 2, TimeRemainder::Truncate));
        let x = random_tensor(vec![b, f / 2 * 2, t, c], &mut rng);
        record("maxpool2d", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let mut net = single("pool", MaxPool1d::new(rng.gen_range(1..=2)));
        let x = random_tensor(vec![b, c, t], &mut rng);
        record("maxpool1d", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let mut net = single("mfm", Mfm::new());
        let x = random_tensor(vec![b, f, t, 2 * rng.gen_range(1..=2)], &mut rng);
        record("mfm", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let mut net = single("mean", TemporalMeanPool::new());
        let x = random_tensor(vec![b, f, t, c], &mut rng);
        record("mean-pool", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let mut net = single("fc", Dense::new("fc", f, t, 2.0, &mut rng).unwrap());
        let x = random_tensor(vec![b, f], &mut rng);
        record("dense", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        // three or more values per feature, see the batch norm proptests
        let mut net = single("bn", BatchNorm::new("bn", f));
        let x = random_tensor(vec![rng.gen_range(3..=8), f], &mut rng);
        record("batch-norm", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());
        let mut net = single("bn", BatchNorm::new("bn", c));
        let x = random_tensor(vec![b, c, t.max(3)], &mut rng);
        record("batch-norm", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let mut net = single("conv", Conv1d::new("conv", c, cout, 3, &mut rng).unwrap());
        let x = random_tensor(vec![b, c, t.max(3)], &mut rng);
        record("conv1d", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let filters = rng.gen_range(1..=4);
        let low: Vec<f64> = (0..filters).map(|_| rng.gen_range(0.01..0.3)).collect();
        let high = low.iter().map(|l| l + rng.gen_range(0.02..0.15)).collect();
        let len = 2 * rng.gen_range(1..=3) + 1;
        let mut net = single("sinc", SincConv::new("sinc", &SincCutoffs { low, high }, len).unwrap());
        let x = random_tensor(vec![b, len + rng.gen_range(0..=8)], &mut rng);
        record("sinc_conv", grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());

        let classes = rng.gen_range(2..=4);
        let labels = (0..b + 1).map(|_| rng.gen_range(0..classes)).collect();
        let mut net = single("flat", Flatten::new());
        let x = random_tensor(vec![b + 1, classes], &mut rng);
        record("softmax-xent", grad_check(&mut net, &x, &Probe::SoftmaxXent(labels), &cfg).unwrap().max_rel_error());

        for (name, act) in [
            ("relu", Activation::relu()),
            ("leaky-relu", Activation::leaky_relu(0.2)),
            ("abs", Activation::abs()),
        ] {
            let mut net = single("act", act);
            let x = random_tensor(vec![b, f], &mut rng);
            record(name, grad_check(&mut net, &x, &Probe::Projection, &cfg).unwrap().max_rel_error());
        }
    }
    worst
}

// ---------------------------------------------------------------- pipeline

/// Examples with the given per-speaker counts; each carries its index in
/// its single feature value so the multiset can be recovered.
pub fn tagged_examples(counts: &[usize]) -> Vec<Example> {
    let mut out = Vec::new();
    for (s, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let tag = out.len() as f64;
            out.push(Example {
                features: FeatureMap::from_vec(1, 1, 1, vec![tag]).unwrap(),
                speaker_id: format!("S{s}"),
                key: if out.len() % 2 == 0 { Key::Bonafide } else { Key::Spoof },
                attack_id: None,
            });
        }
    }
    out
}

/// Feature groups for `make_examples`: random frame counts per utterance.
pub fn random_groups(rng: &mut Rng) -> std::collections::BTreeMap<GroupKey, Vec<FeatureMap>> {
    let mut groups = std::collections::BTreeMap::new();
    for s in 0..rng.gen_range(1..=4) {
        for attack in [None, Some("A01"), Some("A02")] {
            let utts = (0..rng.gen_range(0..=4))
                .map(|_| {
                    let frames = rng.gen_range(1..=260);
                    FeatureMap::from_vec(2, frames, 1, (0..2 * frames).map(|i| i as f64).collect()).unwrap()
                })
                .collect();
            groups.insert(
                GroupKey {
                    speaker_id: format!("S{s}"),
                    attack_id: attack.map(String::from),
                },
                utts,
            );
        }
    }
    groups
}

/// A protocol of `speakers` speakers with a few bonafide and spoof
/// utterances each, and matching waveforms whose samples encode their
/// speaker (`+s`) and class (`-s` for spoof). Some utterances are shorter
/// than `chunk`.
pub fn chunk_fixture(speakers: usize, chunk: usize) -> (ProtocolSet, HashMap<String, Waveform>) {
    let mut rng = rng_from_seed(99);
    let mut text = String::new();
    let mut store = HashMap::new();
    for s in 1..=speakers {
        for u in 0..rng.gen_range(1..=4) {
            for (key, attack, sign) in [("bonafide", "-", 1.0), ("spoof", "A01", -1.0)] {
                let id = format!("{key}_{s}_{u}");
                text.push_str(&format!("SPK{s} {id} - {attack} {key}\n"));
                let len = if u == 1 { chunk / 2 } else { rng.gen_range(chunk..3 * chunk) };
                store.insert(id, Waveform::new(vec![sign * s as f64; len], 16000).unwrap());
            }
        }
        // a guaranteed long utterance per class
        for (key, attack, sign) in [("bonafide", "-", 1.0), ("spoof", "A02", -1.0)] {
            let id = format!("{key}_{s}_long");
            text.push_str(&format!("SPK{s} {id} - {attack} {key}\n"));
            store.insert(id, Waveform::new(vec![sign * s as f64; 2 * chunk], 16000).unwrap());
        }
    }
    (parse_protocol(&text, Partition::Train).unwrap(), store)
}

use rand::seq::index::sample;
use rand::Rng as _;

use super::{softmax_xent, Ctx, Sequential, Tensor};
use crate::error::{Error, Result};

/// Scalar objective attached to the network output.
#[derive(Debug, Clone)]
pub enum Probe {
    /// `sum(r * y)` for a fixed random `r` drawn from the check seed.
    Projection,
    /// Mean softmax cross-entropy of `[batch, classes]` logits.
    SoftmaxXent(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Step is `h_scale * max(1, |p|)`.
    pub h_scale: f64,
    /// Relative errors use `max(|analytic|, |numeric|, abs_floor)` as the
    /// denominator so vanishing gradients do not amplify rounding noise.
    pub abs_floor: f64,
    /// Upper bound on checked coordinates per tensor (sampled when exceeded).
    pub max_coords: usize,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h_scale: 1e-5,
            abs_floor: 1e-7,
            max_coords: 256,
            check_input: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    /// Parameter name, or `"input"`.
    pub name: String,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a kink.
    pub excluded: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn excluded(&self) -> usize {
        self.entries.iter().map(|e| e.excluded).sum()
    }

    pub fn checked(&self) -> usize {
        self.entries.iter().map(|e| e.checked).sum()
    }

    pub fn entry(&self, name: &str) -> Option<&GradCheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

struct Objective<'a> {
    probe: &'a Probe,
    weights: Vec<f64>,
    seed: u64,
}

impl Objective<'_> {
    /// Loss, output gradient and the network's branch fingerprint.
    fn eval(&self, net: &mut Sequential<f64>, x: &Tensor<f64>) -> Result<(f64, Tensor<f64>, u64)> {
        let mut rng = crate::rng_from_seed(self.seed);
        let y = net.forward(x, &mut Ctx::train(&mut rng))?;
        let (loss, grad) = match self.probe {
            Probe::Projection => {
                if y.len() != self.weights.len() {
                    return Err(Error::shape("projection probe size changed"));
                }
                let loss = y.data().iter().zip(&self.weights).map(|(a, b)| a * b).sum();
                (loss, Tensor::new(y.shape().to_vec(), self.weights.clone())?)
            }
            Probe::SoftmaxXent(labels) => softmax_xent(&y, labels)?,
        };
        Ok((loss, grad, net.decisions()))
    }
}

#[derive(Clone, Copy)]
enum Target {
    Input,
    Param(usize),
}

fn value_mut<'a>(net: &'a mut Sequential<f64>, x: &'a mut Tensor<f64>, target: Target, i: usize) -> &'a mut f64 {
    match target {
        Target::Input => &mut x.data_mut()[i],
        Target::Param(p) => &mut net.params_mut().into_iter().nth(p).expect("param index").value.data_mut()[i],
    }
}

/// Compares analytic gradients of every trainable parameter (and optionally
/// the input) against central finite differences. Layers run in training
/// mode with a fixed seed so dropout masks repeat between evaluations.
pub fn grad_check(
    net: &mut Sequential<f64>,
    input: &Tensor<f64>,
    probe: &Probe,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = crate::rng_from_seed(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let out_len: usize = net.output_shape(input.shape())?.iter().product();
    let objective = Objective {
        probe,
        weights: (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        seed: config.seed,
    };

    net.zero_grad();
    let (_, dy, base) = objective.eval(net, input)?;
    let dx = net.backward(&dy, config.check_input)?;

    let mut targets: Vec<(String, Target, Vec<f64>)> = Vec::new();
    if let Some(dx) = dx {
        targets.push(("input".into(), Target::Input, dx.into_data()));
    }
    for (i, p) in net.params().iter().enumerate() {
        if p.trainable() {
            targets.push((p.name.clone(), Target::Param(i), p.grad().to_vec()));
        }
    }

    let mut x = input.clone();
    let mut report = GradCheckReport::default();
    for (name, target, analytic) in targets {
        let coords: Vec<usize> = if analytic.len() > config.max_coords {
            let mut c = sample(&mut rng, analytic.len(), config.max_coords).into_vec();
            c.sort_unstable();
            c
        } else {
            (0..analytic.len()).collect()
        };
        let mut entry = GradCheckEntry {
            name,
            checked: 0,
            excluded: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in coords {
            let orig = *value_mut(net, &mut x, target, i);
            let h = config.h_scale * orig.abs().max(1.0);
            *value_mut(net, &mut x, target, i) = orig + h;
            let (lp, _, dp) = objective.eval(net, &x)?;
            *value_mut(net, &mut x, target, i) = orig - h;
            let (lm, _, dm) = objective.eval(net, &x)?;
            *value_mut(net, &mut x, target, i) = orig;
            if dp != base || dm != base {
                entry.excluded += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let abs = (numeric - analytic[i]).abs();
            let rel = abs / numeric.abs().max(analytic[i].abs()).max(config.abs_floor);
            entry.checked += 1;
            entry.max_abs_error = entry.max_abs_error.max(abs);
            entry.max_rel_error = entry.max_rel_error.max(rel);
        }
        report.entries.push(entry);
    }
    net.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Dense, Mfm};

    #[test]
    fn linear_layer_is_exact() {
        let mut rng = crate::rng_from_seed(2);
        let mut net = Sequential::new();
        net.push("d", Dense::new("d", 5, 3, 1.0, &mut rng).unwrap());
        let x = Tensor::from_f64(vec![2, 5], &(0..10).map(|i| i as f64 * 0.1 - 0.4).collect::<Vec<_>>()).unwrap();
        let report = grad_check(&mut net, &x, &Probe::Projection, &GradCheckConfig::default()).unwrap();
        assert_eq!(report.entries.len(), 3);
        assert_eq!(report.checked(), 10 + 15 + 3);
        assert!(report.max_rel_error() < 1e-8, "{report:?}");
    }

    #[test]
    fn mfm_ties_are_excluded() {
        let mut net = Sequential::new();
        net.push("mfm", Mfm::new());
        let x = Tensor::from_f64(vec![1, 1, 2, 2], &[0.5, 0.5, 1.0, -1.0]).unwrap();
        let report = grad_check(&mut net, &x, &Probe::Projection, &GradCheckConfig::default()).unwrap();
        let input = report.entry("input").unwrap();
        assert_eq!(input.excluded, 2);
        assert_eq!(input.checked, 2);
        assert!(input.max_rel_error < 1e-8);
    }
}

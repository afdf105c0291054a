//! Central-difference verification of the backward pass.
//!
//! The check runs the network in `f64` so that, away from rectifier kinks,
//! the difference quotient of this piecewise-linear map is exact up to
//! rounding. Perturbations whose `±h` evaluations land on different sides of
//! a kink are retried with smaller steps, then skipped and counted.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Gradients, NetworkSpec, QNetwork, Result, Trace};

/// A probe straddling a kink is retried with the step shrunk tenfold this
/// many times in total before it is skipped.
const KINK_RETRIES: i32 = 4;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Random parameters probed per layer, in addition to the weight and the
    /// bias with the largest analytic gradient.
    pub samples_per_layer: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-3, tolerance: 1e-3, samples_per_layer: 24, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.max_rel_error < self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// Seeded random network, input in `[0, 1]` and upstream vector.
pub fn finite_diff_check(spec: &NetworkSpec, cfg: GradCheckConfig) -> Result<GradCheckReport> {
    finite_diff_check_with(spec, cfg, |_| {})
}

/// As [`finite_diff_check`], but lets the caller tamper with the analytic
/// gradients before comparison.
pub fn finite_diff_check_with(
    spec: &NetworkSpec,
    cfg: GradCheckConfig,
    mutate: impl FnOnce(&mut Gradients<f64>),
) -> Result<GradCheckReport> {
    let net = QNetwork::<f32>::seeded(spec.clone(), cfg.seed)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let input: Vec<f64> = (0..spec.input_len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let upstream: Vec<f64> = (0..spec.outputs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    check_network(&net, &input, &upstream, cfg, mutate)
}

fn kink_pattern(trace: &Trace<f64>) -> Vec<bool> {
    let n = trace.activations.len();
    trace.activations[1..n - 1].iter().flat_map(|a| a.iter().map(|v| *v > 0.0)).collect()
}

/// Compares backprop against central differences of `L = Σ u·Q(x)`.
pub fn check_network(
    net: &QNetwork<f64>,
    input: &[f64],
    upstream: &[f64],
    cfg: GradCheckConfig,
    mutate: impl FnOnce(&mut Gradients<f64>),
) -> Result<GradCheckReport> {
    let trace = net.forward_trace(input)?;
    let mut grads = Gradients::zeros_like(net);
    net.backward(&trace, upstream, &mut grads)?;
    mutate(&mut grads);

    let objective = |n: &QNetwork<f64>| -> Result<(f64, Vec<bool>)> {
        let t = n.forward_trace(input)?;
        let l = t.q_values().iter().zip(upstream).map(|(q, u)| q * u).sum();
        Ok((l, kink_pattern(&t)))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut probe = net.clone();
    let mut layers = Vec::new();
    for (li, layer) in net.layers.iter().enumerate() {
        let wlen = layer.weight().len();
        let total = wlen + layer.bias().len();
        let analytic = |i: usize| {
            if i < wlen {
                grads.layers[li].weight[i]
            } else {
                grads.layers[li].bias[i - wlen]
            }
        };
        let largest =
            |range: std::ops::Range<usize>| range.max_by(|&a, &b| analytic(a).abs().total_cmp(&analytic(b).abs()));
        let mut indices: Vec<usize> = sample(&mut rng, total, cfg.samples_per_layer.min(total)).into_vec();
        indices.extend(largest(0..wlen));
        indices.extend(largest(wlen..total));
        indices.sort_unstable();
        indices.dedup();

        let mut report = LayerCheck { layer: layer.name(), checked: 0, skipped_kinks: 0, max_rel_error: 0.0 };
        for i in indices {
            let set = |p: &mut QNetwork<f64>, v: f64| {
                let (w, b) = p.layers[li].params_mut();
                if i < wlen {
                    w[i] = v;
                } else {
                    b[i - wlen] = v;
                }
            };
            let base = if i < wlen { layer.weight()[i] } else { layer.bias()[i - wlen] };
            let mut numeric = None;
            for shrink in 0..KINK_RETRIES {
                let h = cfg.step * 0.1f64.powi(shrink);
                set(&mut probe, base + h);
                let (plus, kinks_plus) = objective(&probe)?;
                set(&mut probe, base - h);
                let (minus, kinks_minus) = objective(&probe)?;
                set(&mut probe, base);
                if kinks_plus == kinks_minus {
                    numeric = Some((plus - minus) / (2.0 * h));
                    break;
                }
            }
            let Some(numeric) = numeric else {
                report.skipped_kinks += 1;
                continue;
            };
            let a = analytic(i);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / denom);
            report.checked += 1;
        }
        layers.push(report);
    }
    Ok(GradCheckReport { tolerance: cfg.tolerance, layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkSpec {
        NetworkSpec {
            input_side: 12,
            convs: vec![crate::ConvSpec::new(3, 4, 1, 2), crate::ConvSpec::new(4, 3, 0, 1)],
            fc: vec![10, 5],
        }
    }

    #[test]
    fn small_random_network_passes() {
        for seed in 0..3 {
            let report = finite_diff_check(&small(), GradCheckConfig { seed, ..Default::default() }).unwrap();
            assert!(report.passed(), "{report:?}");
            assert!(report.layers.iter().all(|l| l.checked > 0));
        }
    }

    #[test]
    fn negated_gradient_is_caught() {
        let report = finite_diff_check_with(&small(), GradCheckConfig::default(), |g| {
            let last = g.layers.last_mut().unwrap();
            let (i, _) = last.weight.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
            last.weight[i] = -last.weight[i];
        })
        .unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn zero_network_zero_input_passes_trivially() {
        let net = QNetwork::<f64>::zeros(small()).unwrap();
        let input = vec![0.0; 144];
        let report = check_network(&net, &input, &[1.0; 5], GradCheckConfig::default(), |_| {}).unwrap();
        assert!(report.passed());
        assert_eq!(report.max_rel_error(), 0.0);
    }
}

use crate::{Gradients, NnError, QNetwork, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { learning_rate: 2.5e-4, decay: 0.95, epsilon: 1e-6 }
    }
}

/// Running mean-square accumulators, one per parameter.
///
/// Gradients are ascent directions, so the update adds:
/// `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ + η·g / √(acc + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T = f32> {
    pub config: RmsPropConfig,
    pub acc: Gradients<T>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(config: RmsPropConfig, net: &QNetwork<T>) -> Self {
        Self { config, acc: Gradients::zeros_like(net) }
    }

    pub fn step(&mut self, net: &mut QNetwork<T>, grads: &Gradients<T>) -> Result<()> {
        for (layer, g) in grads.layers.iter().enumerate() {
            if let Some((index, v)) = g.weight.iter().chain(&g.bias).enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(NnError::NonFinite { context: "gradient", layer, index, value: v.as_f64() });
            }
        }
        let rho = T::of(self.config.decay);
        let one_minus = T::of(1.0 - self.config.decay);
        let lr = T::of(self.config.learning_rate);
        let eps = T::of(self.config.epsilon);
        for ((layer, g), acc) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.acc.layers) {
            let (w, b) = layer.params_mut();
            update(w, &g.weight, &mut acc.weight, rho, one_minus, lr, eps);
            update(b, &g.bias, &mut acc.bias, rho, one_minus, lr, eps);
        }
        net.check_finite()
    }
}

#[inline]
fn update<T: Real>(params: &mut [T], grads: &[T], acc: &mut [T], rho: T, one_minus: T, lr: T, eps: T) {
    for ((p, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = rho * *a + one_minus * g * g;
        if g != T::zero() {
            *p += lr * g / (*a + eps).sqrt();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Linear, NetworkSpec};

    fn scalar_net(w: f64) -> QNetwork<f64> {
        let mut net = QNetwork::zeros(NetworkSpec { input_side: 1, convs: vec![], fc: vec![1] }).unwrap();
        if let crate::Layer::Linear(Linear { weight, .. }) = &mut net.layers[0] {
            weight[0] = w;
        }
        net
    }

    fn grads_of(net: &QNetwork<f64>, g: f64) -> Gradients<f64> {
        let mut grads = Gradients::zeros_like(net);
        grads.layers[0].weight[0] = g;
        grads
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net(0.3);
        let before = net.clone();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &net);
        opt.step(&mut net, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn scalar_substitution() {
        // rho=0, g=3, lr=0.1, eps=0, acc0=0 -> acc=9, step=0.1
        let mut net = scalar_net(0.0);
        let cfg = RmsPropConfig { learning_rate: 0.1, decay: 0.0, epsilon: 0.0 };
        let mut opt = RmsProp::new(cfg, &net);
        let g = grads_of(&net, 3.0);
        opt.step(&mut net, &g).unwrap();
        assert_eq!(opt.acc.layers[0].weight[0], 9.0);
        assert!((net.layers[0].weight()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_converges_to_learning_rate() {
        let mut net = scalar_net(0.0);
        let cfg = RmsPropConfig { learning_rate: 0.01, decay: 0.9, epsilon: 1e-12 };
        let mut opt = RmsProp::new(cfg, &net);
        let g = grads_of(&net, -2.0);
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..500 {
            opt.step(&mut net, &g).unwrap();
            let now = net.layers[0].weight()[0];
            step = now - prev;
            prev = now;
        }
        assert!((step.abs() - 0.01).abs() < 1e-9, "step {step}");
        assert!(step < 0.0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = scalar_net(0.0);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &net);
        let g = grads_of(&net, f64::NAN);
        assert!(matches!(opt.step(&mut net, &g), Err(NnError::NonFinite { .. })));
    }
}

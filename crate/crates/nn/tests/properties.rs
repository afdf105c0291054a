use homedqn_nn::{
    finite_diff_check, finite_diff_check_with, Conv2d, ConvSpec, GradCheckConfig, Gradients, Linear, NetworkSpec,
    QNetwork, RmsProp, RmsPropConfig, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Without its bias a convolution is linear in its input.
    #[test]
    fn conv_superposition(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv = Conv2d::<f64>::zeros(ConvSpec::new(3, 3, 1, 2), 2, 9).unwrap();
        conv.init_uniform(&mut rng);
        let n = conv.input_len();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let f = |v: &[f64]| conv.forward(&Tensor::new(vec![2, 9, 9], v.to_vec()).unwrap()).unwrap().into_data();
        let lhs = f(&mix);
        let rhs: Vec<f64> = f(&x).iter().zip(f(&y)).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn linear_superposition(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fc = Linear::<f64>::zeros(17, 5);
        fc.init_uniform(&mut rng);
        let x: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = fc.forward(&mix).unwrap();
        let rhs: Vec<f64> = fc.forward(&x).unwrap().iter().zip(fc.forward(&y).unwrap()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(close(&lhs, &rhs));
    }
}

fn train(seed: u64, steps: usize) -> QNetwork<f32> {
    let mut net = QNetwork::<f32>::seeded(NetworkSpec::desk(), seed).unwrap();
    let mut opt = RmsProp::new(RmsPropConfig::default(), &net);
    let mut grads = Gradients::zeros_like(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for _ in 0..steps {
        let x: Vec<f32> = (0..64 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let trace = net.forward_trace(&x).unwrap();
        let mut dq = vec![0.0f32; 33];
        let a = rng.gen_range(0..33);
        dq[a] = 1.0 - trace.q_values()[a];
        grads.clear();
        net.backward(&trace, &dq, &mut grads).unwrap();
        opt.step(&mut net, &grads).unwrap();
    }
    net
}

#[test]
fn training_is_bitwise_reproducible() {
    let a = train(3, 20);
    let b = train(3, 20);
    assert_eq!(a, b);
    assert_ne!(a, QNetwork::<f32>::seeded(NetworkSpec::desk(), 3).unwrap());
}

#[test]
fn desk_gradients_on_five_seeds() {
    for seed in 0..5 {
        let report =
            finite_diff_check(&NetworkSpec::desk(), GradCheckConfig { seed, ..GradCheckConfig::default() }).unwrap();
        assert!(report.passed(), "seed {seed}: max relative error {}", report.max_rel_error());
    }
}

#[test]
fn desk_negated_gradient_is_caught() {
    let report = finite_diff_check_with(&NetworkSpec::desk(), GradCheckConfig::default(), |g| {
        let (l, i) = (0..g.layers.len())
            .flat_map(|l| (0..g.layers[l].weight.len()).map(move |i| (l, i)))
            .max_by(|&(l1, i1), &(l2, i2)| g.layers[l1].weight[i1].abs().total_cmp(&g.layers[l2].weight[i2].abs()))
            .unwrap();
        g.layers[l].weight[i] = -g.layers[l].weight[i];
    })
    .unwrap();
    assert!(!report.passed(), "{report:?}");
}

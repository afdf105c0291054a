use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::relu::relu_inplace;
use crate::{Conv2d, ConvSpec, Linear, NnError, Real, Result};

/// Convolution stack followed by fully connected layers; the last width is
/// the number of actions. A rectifier follows every layer except the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_side: usize,
    pub convs: Vec<ConvSpec>,
    pub fc: Vec<usize>,
}

impl NetworkSpec {
    /// 1×256×256 → 16×64×64 → 32×21×21 → 64×10×10 → 64×8×8 → 4096 → 512 → 33
    pub fn full() -> Self {
        Self {
            input_side: 256,
            convs: vec![
                ConvSpec::new(16, 8, 2, 4),
                ConvSpec::new(32, 4, 0, 3),
                ConvSpec::new(64, 3, 0, 2),
                ConvSpec::new(64, 3, 0, 1),
            ],
            fc: vec![512, 33],
        }
    }

    /// 1×64×64 → 8×16×16 → 16×7×7 → 32×5×5 → 800 → 128 → 33
    pub fn desk() -> Self {
        Self {
            input_side: 64,
            convs: vec![ConvSpec::new(8, 8, 2, 4), ConvSpec::new(16, 4, 0, 2), ConvSpec::new(32, 3, 0, 1)],
            fc: vec![128, 33],
        }
    }

    /// Shapes of the input and of every layer output, in order.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        if self.fc.is_empty() {
            return Err(NnError::InvalidSpec("at least one fully connected layer".into()));
        }
        let mut chain = vec![vec![1, self.input_side, self.input_side]];
        let mut side = self.input_side;
        for conv in &self.convs {
            side = conv
                .output_side(side)
                .ok_or_else(|| NnError::InvalidSpec(format!("{conv:?} does not fit side {side}")))?;
            chain.push(vec![conv.filters, side, side]);
        }
        if !self.convs.is_empty() {
            let last = chain.last().unwrap();
            chain.push(vec![last.iter().product()]);
        }
        for &width in &self.fc {
            if width == 0 {
                return Err(NnError::InvalidSpec("zero-width layer".into()));
            }
            chain.push(vec![width]);
        }
        Ok(chain)
    }

    pub fn input_len(&self) -> usize {
        self.input_side * self.input_side
    }

    pub fn outputs(&self) -> usize {
        *self.fc.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv(Conv2d<T>),
    Linear(Linear<T>),
}

impl<T: Real> Layer<T> {
    pub fn weight(&self) -> &[T] {
        match self {
            Layer::Conv(c) => &c.weight,
            Layer::Linear(l) => &l.weight,
        }
    }

    pub fn bias(&self) -> &[T] {
        match self {
            Layer::Conv(c) => &c.bias,
            Layer::Linear(l) => &l.bias,
        }
    }

    pub fn params_mut(&mut self) -> (&mut Vec<T>, &mut Vec<T>) {
        match self {
            Layer::Conv(c) => (&mut c.weight, &mut c.bias),
            Layer::Linear(l) => (&mut l.weight, &mut l.bias),
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Layer::Conv(c) => c.output_len(),
            Layer::Linear(l) => l.outputs,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Layer::Conv(c) => format!("conv{}[{}+{}/{}]", c.spec.filters, c.spec.field, c.spec.pad, c.spec.stride),
            Layer::Linear(l) => format!("fc{}", l.outputs),
        }
    }
}

/// Where to read intermediate activations for feature export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureTap {
    /// Flattened output of the last convolution (after its rectifier).
    PostConv,
    /// Activations entering the output layer.
    PreOutput,
}

/// Activations recorded by a forward pass. `activations[0]` is the input,
/// `activations[i + 1]` the (rectified) output of layer `i`; the final entry
/// holds the raw action values.
#[derive(Debug, Clone)]
pub struct Trace<T = f32> {
    pub activations: Vec<Vec<T>>,
}

impl<T: Real> Trace<T> {
    pub fn q_values(&self) -> &[T] {
        self.activations.last().expect("trace has output")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T = f32> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradient buffers shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<ParamGrad<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &QNetwork<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| ParamGrad { weight: vec![T::zero(); l.weight().len()], bias: vec![T::zero(); l.bias().len()] })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|v| *v = T::zero());
            l.bias.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(&l.bias).all(|v| *v == T::zero()))
    }
}

/// The action-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T = f32> {
    spec: NetworkSpec,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> QNetwork<T> {
    /// All parameters zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.shape_chain()?;
        let mut layers = Vec::new();
        let mut channels = 1;
        let mut side = spec.input_side;
        for conv in &spec.convs {
            let layer = Conv2d::zeros(*conv, channels, side)?;
            channels = conv.filters;
            side = layer.out_side;
            layers.push(Layer::Conv(layer));
        }
        let mut width = channels * side * side;
        for &out in &spec.fc {
            layers.push(Layer::Linear(Linear::zeros(width, out)));
            width = out;
        }
        Ok(Self { spec, layers })
    }

    /// Uniform variance-preserving initialization from a seed.
    pub fn seeded(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            match layer {
                Layer::Conv(c) => c.init_uniform(&mut rng),
                Layer::Linear(l) => l.init_uniform(&mut rng),
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight().len() + l.bias().len()).sum()
    }

    pub fn conv_count(&self) -> usize {
        self.spec.convs.len()
    }

    /// Same parameters converted to another scalar type.
    pub fn cast<U: Real>(&self) -> QNetwork<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(Conv2d {
                    spec: c.spec,
                    in_channels: c.in_channels,
                    in_side: c.in_side,
                    out_side: c.out_side,
                    weight: conv(&c.weight),
                    bias: conv(&c.bias),
                }),
                Layer::Linear(f) => Layer::Linear(Linear {
                    inputs: f.inputs,
                    outputs: f.outputs,
                    weight: conv(&f.weight),
                    bias: conv(&f.bias),
                }),
            })
            .collect();
        QNetwork { spec: self.spec.clone(), layers }
    }

    /// Overwrite all parameters with those of `other` (same spec).
    pub fn copy_from(&mut self, other: &QNetwork<T>) {
        debug_assert_eq!(self.spec, other.spec);
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            let (w, b) = dst.params_mut();
            w.copy_from_slice(src.weight());
            b.copy_from_slice(src.bias());
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.spec.input_len() {
            return Err(NnError::ShapeMismatch {
                context: "network input",
                expected: vec![1, self.spec.input_side, self.spec.input_side],
                actual: vec![input.len()],
            });
        }
        Ok(())
    }

    pub fn forward_trace(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let mut scratch = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![T::zero(); layer.output_len()];
            let x = activations.last().unwrap();
            match layer {
                Layer::Conv(c) => c.forward_into(x, &mut out, &mut scratch),
                Layer::Linear(l) => l.forward_into(x, &mut out),
            }
            if let Some((index, v)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(NnError::NonFinite { context: "forward activation", layer: i, index, value: v.as_f64() });
            }
            if i != last {
                relu_inplace(&mut out);
            }
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_trace(input)?.activations.pop().unwrap())
    }

    pub fn features(&self, input: &[T], tap: FeatureTap) -> Result<Vec<T>> {
        let mut trace = self.forward_trace(input)?;
        let index = match tap {
            FeatureTap::PostConv => self.conv_count(),
            FeatureTap::PreOutput => self.layers.len() - 1,
        };
        Ok(trace.activations.swap_remove(index))
    }

    /// Backpropagates `dq` (gradient with respect to the action values)
    /// through a recorded pass, accumulating into `grads`.
    pub fn backward(&self, trace: &Trace<T>, dq: &[T], grads: &mut Gradients<T>) -> Result<()> {
        if dq.len() != self.spec.outputs() {
            return Err(NnError::ShapeMismatch {
                context: "output gradient",
                expected: vec![self.spec.outputs()],
                actual: vec![dq.len()],
            });
        }
        if dq.iter().all(|g| *g == T::zero()) {
            return Ok(());
        }
        let mut upstream = dq.to_vec();
        let mut scratch = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let x = &trace.activations[i];
            let grad = &mut grads.layers[i];
            let need_dx = i > 0;
            let mut dx = if need_dx { vec![T::zero(); x.len()] } else { Vec::new() };
            match &self.layers[i] {
                Layer::Conv(c) => c.backward_into(
                    x,
                    &upstream,
                    &mut grad.weight,
                    &mut grad.bias,
                    need_dx.then_some(dx.as_mut_slice()),
                    &mut scratch,
                ),
                Layer::Linear(l) => l.backward_into(
                    x,
                    &upstream,
                    &mut grad.weight,
                    &mut grad.bias,
                    need_dx.then_some(dx.as_mut_slice()),
                ),
            }
            if need_dx {
                // x is the rectified output of layer i-1
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                for (d, &a) in dx.iter_mut().zip(x) {
                    if !(a > T::zero()) {
                        *d = T::zero();
                    }
                }
                upstream = dx;
            }
        }
        Ok(())
    }

    /// Rejects NaN or infinite parameters.
    pub fn check_finite(&self) -> Result<()> {
        for (layer, l) in self.layers.iter().enumerate() {
            if let Some((index, v)) = l.weight().iter().chain(l.bias()).enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(NnError::NonFinite { context: "parameter", layer, index, value: v.as_f64() });
            }
        }
        Ok(())
    }
}

/// Maps 8-bit pixels to `[-1, 1)` with mid-grey 128 at zero, so the
/// uniform background contributes nothing to the first layer.
pub fn scale_pixels<T: Real>(pixels: &[u8]) -> Vec<T> {
    let inv = T::of(1.0 / 128.0);
    pixels.iter().map(|&p| T::of(p as f64 - 128.0) * inv).collect()
}

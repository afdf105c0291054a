use rand::Rng;

use crate::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::{NnError, Real, Result, Tensor};

/// Hyperparameters of one convolution: `n` filters of side `field`, zero
/// padding `pad` and stride `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub field: usize,
    pub pad: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(filters: usize, field: usize, pad: usize, stride: usize) -> Self {
        Self { filters, field, pad, stride }
    }

    /// `floor((in + 2p - f) / k) + 1`, or `None` when the field does not fit.
    pub fn output_side(&self, input_side: usize) -> Option<usize> {
        let padded = input_side + 2 * self.pad;
        if self.stride == 0 || self.field == 0 || padded < self.field {
            return None;
        }
        Some((padded - self.field) / self.stride + 1)
    }
}

/// Square 2-D cross-correlation layer over `in_channels × in_side × in_side`
/// inputs. Weights are laid out `[filter][channel][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub spec: ConvSpec,
    pub in_channels: usize,
    pub in_side: usize,
    pub out_side: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(spec: ConvSpec, in_channels: usize, in_side: usize) -> Result<Self> {
        let out_side = spec.output_side(in_side).ok_or_else(|| {
            NnError::InvalidSpec(format!("convolution {spec:?} does not fit an input of side {in_side}"))
        })?;
        Ok(Self {
            spec,
            in_channels,
            in_side,
            out_side,
            weight: vec![T::zero(); spec.filters * in_channels * spec.field * spec.field],
            bias: vec![T::zero(); spec.filters],
        })
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let area = self.spec.field * self.spec.field;
        let fan_in = self.in_channels * area;
        let fan_out = self.spec.filters * area;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in &mut self.weight {
            *w = T::of(rng.gen_range(-limit..limit));
        }
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_side * self.in_side
    }

    pub fn output_len(&self) -> usize {
        self.spec.filters * self.out_side * self.out_side
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.spec.field * self.spec.field
    }

    /// Unfold the input into a `[c·f·f][out·out]` matrix of receptive fields.
    fn im2col(&self, x: &[T], cols: &mut Vec<T>) {
        let (f, p, k) = (self.spec.field, self.spec.pad, self.spec.stride);
        let (side, out) = (self.in_side, self.out_side);
        let positions = out * out;
        cols.clear();
        cols.resize(self.patch_len() * positions, T::zero());
        for c in 0..self.in_channels {
            let plane = &x[c * side * side..(c + 1) * side * side];
            for fy in 0..f {
                for fx in 0..f {
                    let row = (c * f + fy) * f + fx;
                    let dst = &mut cols[row * positions..(row + 1) * positions];
                    for oy in 0..out {
                        let iy = (oy * k + fy) as isize - p as isize;
                        if iy < 0 || iy >= side as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * side..(iy as usize + 1) * side];
                        for ox in 0..out {
                            let ix = (ox * k + fx) as isize - p as isize;
                            if ix >= 0 && ix < side as isize {
                                dst[oy * out + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Fold column gradients back onto the input (sums overlapping fields).
    fn col2im(&self, cols: &[T], dx: &mut [T]) {
        let (f, p, k) = (self.spec.field, self.spec.pad, self.spec.stride);
        let (side, out) = (self.in_side, self.out_side);
        let positions = out * out;
        for c in 0..self.in_channels {
            let plane = &mut dx[c * side * side..(c + 1) * side * side];
            for fy in 0..f {
                for fx in 0..f {
                    let row = (c * f + fy) * f + fx;
                    let src = &cols[row * positions..(row + 1) * positions];
                    for oy in 0..out {
                        let iy = (oy * k + fy) as isize - p as isize;
                        if iy < 0 || iy >= side as isize {
                            continue;
                        }
                        for ox in 0..out {
                            let ix = (ox * k + fx) as isize - p as isize;
                            if ix >= 0 && ix < side as isize {
                                plane[iy as usize * side + ix as usize] += src[oy * out + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out = W ⋆ x + b` into a `[filters][out][out]` buffer.
    pub fn forward_into(&self, x: &[T], out: &mut [T], scratch: &mut Vec<T>) {
        debug_assert_eq!(x.len(), self.input_len());
        debug_assert_eq!(out.len(), self.output_len());
        self.im2col(x, scratch);
        let positions = self.out_side * self.out_side;
        for (n, plane) in out.chunks_exact_mut(positions).enumerate() {
            plane.iter_mut().for_each(|v| *v = self.bias[n]);
        }
        gemm_nn(self.spec.filters, self.patch_len(), positions, &self.weight, scratch, out);
    }

    /// Accumulates weight and bias gradients for upstream gradient `dout`,
    /// and writes the input gradient into `dx` when requested.
    pub fn backward_into(
        &self,
        x: &[T],
        dout: &[T],
        dweight: &mut [T],
        dbias: &mut [T],
        dx: Option<&mut [T]>,
        scratch: &mut Vec<T>,
    ) {
        debug_assert_eq!(dout.len(), self.output_len());
        let positions = self.out_side * self.out_side;
        let patch = self.patch_len();
        for (n, plane) in dout.chunks_exact(positions).enumerate() {
            dbias[n] += plane.iter().copied().sum::<T>();
        }
        self.im2col(x, scratch);
        gemm_nt(self.spec.filters, positions, patch, dout, scratch, dweight);
        if let Some(dx) = dx {
            let mut dcols = vec![T::zero(); patch * positions];
            gemm_tn(patch, self.spec.filters, positions, &self.weight, dout, &mut dcols);
            dx.iter_mut().for_each(|v| *v = T::zero());
            self.col2im(&dcols, dx);
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let expected = vec![self.in_channels, self.in_side, self.in_side];
        if x.shape() != expected.as_slice() {
            return Err(NnError::ShapeMismatch { context: "conv input", expected, actual: x.shape().to_vec() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut out = Tensor::zeros(vec![self.spec.filters, self.out_side, self.out_side]);
        self.forward_into(x.data(), out.data_mut(), &mut Vec::new());
        Ok(out)
    }

    /// Returns `(input grad, weight grad, bias grad)`.
    pub fn backward(&self, x: &Tensor<T>, dout: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        self.check_input(x)?;
        let expected = vec![self.spec.filters, self.out_side, self.out_side];
        if dout.shape() != expected.as_slice() {
            return Err(NnError::ShapeMismatch {
                context: "conv upstream gradient",
                expected,
                actual: dout.shape().to_vec(),
            });
        }
        let mut dx = Tensor::zeros(x.shape().to_vec());
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.bias.len()];
        self.backward_into(x.data(), dout.data(), &mut dw, &mut db, Some(dx.data_mut()), &mut Vec::new());
        Ok((dx, dw, db))
    }
}

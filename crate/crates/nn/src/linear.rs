use rand::Rng;

use crate::linalg::{axpy, dot};
use crate::{NnError, Real, Result};

/// Fully connected affine layer, weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f32> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let limit = (6.0 / (self.inputs + self.outputs) as f64).sqrt();
        for w in &mut self.weight {
            *w = T::of(rng.gen_range(-limit..limit));
        }
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    pub fn forward_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, y) in out.iter_mut().enumerate() {
            *y = self.bias[o] + dot(&self.weight[o * self.inputs..(o + 1) * self.inputs], x);
        }
    }

    pub fn backward_into(&self, x: &[T], dout: &[T], dweight: &mut [T], dbias: &mut [T], dx: Option<&mut [T]>) {
        for (o, &g) in dout.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            dbias[o] += g;
            axpy(g, x, &mut dweight[o * self.inputs..(o + 1) * self.inputs]);
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = T::zero());
            for (o, &g) in dout.iter().enumerate() {
                if g != T::zero() {
                    axpy(g, &self.weight[o * self.inputs..(o + 1) * self.inputs], dx);
                }
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.inputs {
            return Err(NnError::ShapeMismatch {
                context: "linear input",
                expected: vec![self.inputs],
                actual: vec![x.len()],
            });
        }
        let mut out = vec![T::zero(); self.outputs];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    /// Returns `(input grad, weight grad, bias grad)`.
    pub fn backward(&self, x: &[T], dout: &[T]) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        if x.len() != self.inputs || dout.len() != self.outputs {
            return Err(NnError::ShapeMismatch {
                context: "linear backward",
                expected: vec![self.inputs, self.outputs],
                actual: vec![x.len(), dout.len()],
            });
        }
        let mut dx = vec![T::zero(); self.inputs];
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.outputs];
        self.backward_into(x, dout, &mut dw, &mut db, Some(&mut dx));
        Ok((dx, dw, db))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_copy_input() {
        let mut fc = Linear::<f32>::zeros(4, 4);
        for i in 0..4 {
            fc.weight[i * 4 + i] = 1.0;
        }
        let x = [0.5, -2.0, 3.0, 0.0];
        assert_eq!(fc.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn backward_of_affine_map() {
        let mut fc = Linear::<f64>::zeros(2, 3);
        fc.weight = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (dx, dw, db) = fc.backward(&[1.0, -1.0], &[1.0, 0.0, 2.0]).unwrap();
        assert_eq!(dx, vec![11.0, 14.0]);
        assert_eq!(dw, vec![1.0, -1.0, 0.0, 0.0, 2.0, -2.0]);
        assert_eq!(db, vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn rejects_wrong_width() {
        let fc = Linear::<f32>::zeros(3, 2);
        assert!(fc.forward(&[1.0, 2.0]).is_err());
    }
}

use crate::Real;

pub fn relu_forward<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// NaN inputs map to zero, hence the negated comparison.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Gradient through `max(0, x)`; zero slope at and below zero.
pub fn relu_backward<T: Real>(x: &[T], upstream: &[T]) -> Vec<T> {
    x.iter().zip(upstream).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect()
}

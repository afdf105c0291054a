//! Convolutional action-value network written out by hand: layers with
//! explicit backward passes, RMSprop, a binary weights format and a
//! finite-difference gradient check.

mod conv;
mod error;
pub mod gradcheck;
pub mod io;
mod linalg;
mod linear;
mod network;
mod real;
pub mod relu;
mod rmsprop;
mod tensor;

pub use conv::{Conv2d, ConvSpec};
pub use error::{NnError, Result};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, GradCheckConfig, GradCheckReport};
pub use io::{decode_weights_into, encode_weights, load_weights, save_weights};
pub use linear::Linear;
pub use network::{scale_pixels, FeatureTap, Gradients, Layer, NetworkSpec, ParamGrad, QNetwork, Trace};
pub use real::Real;
pub use rmsprop::{RmsProp, RmsPropConfig};
pub use tensor::Tensor;

//! Dense `f64` tensors with tape-based reverse-mode automatic differentiation.
//!
//! Build a [`Tape`], bind parameters or constants as leaves, compose
//! operations, then call [`Tape::backward`] on a scalar result:
//!
//! ```
//! use pathqa_autodiff::{ParameterSet, Tape, Tensor};
//!
//! let mut params = ParameterSet::new();
//! let x = params.add("x", Tensor::scalar(3.0)).unwrap();
//! let mut tape = Tape::new();
//! let xv = tape.param(&params, x);
//! let y = tape.mul(xv, xv).unwrap();
//! let grads = tape.backward(y).unwrap().for_params(&params);
//! assert_eq!(grads[0].item(), Some(6.0));
//! ```

mod error;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use params::{ParamId, Parameter, ParameterSet};
pub use tape::{Binary, Gradients, Reduce, Tape, Unary, Var};
pub use tensor::Tensor;

//! Dense `f64` tensors with reverse-mode differentiation whose backward pass
//! is recorded on the same tape, so gradients of gradients are available.
//!
//! ```
//! use gabo_autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(2.0));
//! let x2 = tape.mul(x, x).unwrap();
//! let x3 = tape.mul(x2, x).unwrap();
//! let dx = tape.grad(x3, &[x], true).unwrap()[0];
//! let d2x = tape.grad(dx, &[x], false).unwrap()[0];
//! assert_eq!(tape.item(dx).unwrap(), 12.0);
//! assert_eq!(tape.item(d2x).unwrap(), 12.0);
//! ```

mod error;
pub mod gradcheck;
pub mod kernels;
mod optim;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use optim::Sgd;
pub use tape::{Indices, Tape, Var};
pub use tensor::Tensor;

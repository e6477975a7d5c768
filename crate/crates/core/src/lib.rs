//! Scalar conservation laws with a flux discontinuous at `x = 0`.

// `!(a < b)` is how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod control;
pub mod error;
pub mod flux;
pub mod godunov;
pub mod hj_forward;
pub mod io;
pub mod isotonic;
pub mod monofn;
pub mod quad;
pub mod reachable;
pub mod roots;
pub mod stepfn;

pub use error::{Error, Result};
pub use flux::{Branch, ConvexFlux, FluxPair};
pub use stepfn::StepFn;
